import random

import pytest

from subnav.chunker import (ChunkDisposition, ChunkingConfig, ChunkingError,
                            check_chunk, chunk_instruction,
                            find_boundaries, find_conj_boundaries)
from subnav.conllu import ParsedInstruction, Token, parse_conllu


def parse_fixture(fixtures_dir):
    text = (fixtures_dir / "walkthrough.conllu").read_text(encoding="utf-8")
    return parse_conllu(text)


def make_parsed(rows):
    """rows: list of sentences, each a list of (form, head, deprel)."""
    sentences = []
    for sent in rows:
        sentences.append([
            Token(index=i, form=form, upos="X", head=head, deprel=deprel)
            for i, (form, head, deprel) in enumerate(sent, start=1)
        ])
    return ParsedInstruction(sentences=sentences)


# ---------------------------------------------------------------------------
# conjunct-of-root boundaries
# ---------------------------------------------------------------------------

def test_walkthrough_conj_list_contains_wait(fixtures_dir):
    parsed = parse_fixture(fixtures_dir)
    conj = find_conj_boundaries(parsed)
    wait = next(t for t in parsed.flat_tokens if t.form == "wait")
    assert conj == [wait.global_index]


def test_single_clause_has_no_conj_boundaries():
    parsed = make_parsed([[("go", 0, "root"), ("up", 1, "advmod"),
                           ("the", 4, "det"), ("stairs", 1, "obl")]])
    assert find_conj_boundaries(parsed) == []


def test_two_conj_on_root_both_found_in_order():
    # hand enumeration: tokens 3 and 5 have deprel conj and govern to the root
    parsed = make_parsed([[
        ("walk", 0, "root"), ("ahead", 1, "advmod"), ("turn", 1, "conj"),
        ("left", 3, "advmod"), ("stop", 1, "conj"),
    ]])
    assert find_conj_boundaries(parsed) == [3, 5]


# ---------------------------------------------------------------------------
# Check: merge heuristic
# ---------------------------------------------------------------------------

def test_trailing_connective_merges_forward():
    assert check_chunk(["go", "straight", "then"], "middle") \
        is ChunkDisposition.MERGE_WITH_NEXT


def test_contentful_chunk_emits():
    assert check_chunk(["enter", "through", "the", "glass", "door"], "middle") \
        is ChunkDisposition.EMIT


def test_short_last_chunk_merges_backward():
    assert check_chunk(["stop"], "last") is ChunkDisposition.MERGE_WITH_PREVIOUS


def test_short_first_chunk_flips_forward():
    assert check_chunk(["turn", "left"], "first") \
        is ChunkDisposition.MERGE_WITH_NEXT


def test_only_chunk_always_emits():
    assert check_chunk(["go"], "only") is ChunkDisposition.EMIT


def test_empty_chunk_rejected():
    with pytest.raises(ChunkingError):
        check_chunk([], "middle")


def test_min_words_is_configurable():
    cfg = ChunkingConfig(min_chunk_words=2)
    assert check_chunk(["blue", "door"], "middle", cfg) is ChunkDisposition.EMIT


# ---------------------------------------------------------------------------
# chunk_instruction
# ---------------------------------------------------------------------------

def test_walkthrough_golden_chunking(fixtures_dir):
    parsed = parse_fixture(fixtures_dir)
    chunks = chunk_instruction(parsed)
    assert [c.lowered() for c in chunks] == [
        ["enter", "through", "the", "glass", "door"],
        ["go", "up", "the", "wooden", "plank", "stairs", "on", "the", "right"],
        ["enter", "the", "doorway", "next", "to", "the", "bear", "head"],
        ["and", "wait", "there"],
    ]
    assert [c.id for c in chunks] == [1, 2, 3, 4]


def test_single_clause_single_chunk():
    parsed = make_parsed([[("walk", 0, "root"), ("forward", 1, "advmod")]])
    chunks = chunk_instruction(parsed)
    assert len(chunks) == 1
    assert chunks[0].words == ("walk", "forward")


def test_short_second_root_merges_into_one_chunk():
    parsed = make_parsed([
        [("turn", 0, "root"), ("left", 1, "advmod"), (".", 1, "punct")],
        [("stop", 0, "root"), (".", 1, "punct")],
    ])
    chunks = chunk_instruction(parsed)
    assert [c.words for c in chunks] == [("turn", "left", "stop")]


def test_all_punctuation_rejected():
    sent = [Token(index=1, form=".", upos="PUNCT", head=0, deprel="punct")]
    with pytest.raises(ChunkingError, match="no chunkable content"):
        chunk_instruction(ParsedInstruction(sentences=[sent]))


def test_punctuation_never_appears_in_output(fixtures_dir):
    parsed = parse_fixture(fixtures_dir)
    for chunk in chunk_instruction(parsed):
        assert "." not in chunk.words


def test_spans_are_disjoint_ordered_and_cover(fixtures_dir):
    parsed = parse_fixture(fixtures_dir)
    chunks = chunk_instruction(parsed)
    seen = [i for c in chunks for i in c.indices]
    non_punct = [t.global_index for t in parsed.flat_tokens if not t.is_punct()]
    assert seen == non_punct


def test_parataxis_opens_boundary():
    parsed = make_parsed([[
        ("walk", 0, "root"), ("past", 1, "advmod"), ("the", 4, "det"),
        ("sofa", 1, "obl"), ("wait", 1, "parataxis"), ("by", 7, "case"),
        ("the", 7, "det"), ("door", 5, "obl"),
    ]])
    chunks = chunk_instruction(parsed)
    assert [c.words for c in chunks] == [
        ("walk", "past", "the", "sofa"), ("wait", "by", "the", "door")]


def test_determinism(fixtures_dir):
    parsed = parse_fixture(fixtures_dir)
    first = chunk_instruction(parsed)
    second = chunk_instruction(parsed)
    assert first == second


# ---------------------------------------------------------------------------
# boundary oracle: independent re-evaluation of the three conditions
# ---------------------------------------------------------------------------

RELATIONS = ["root", "conj", "parataxis", "punct", "advmod", "obl", "cc"]
WORDS = ["go", "walk", "stop", "left", "door", "hall", "then", "and"]


def oracle_boundaries(parsed):
    """Recompute the boundary set per token, scanning from scratch."""
    conj = [t.global_index for t in parsed.flat_tokens
            if t.deprel == "conj" and t.governor is not None
            and parsed.token_at(t.governor).deprel == "root"]
    boundaries = []
    consumed = 0
    last_boundary = 0  # global index of the token opening the current chunk
    for t in parsed.flat_tokens:
        # the running chunk's relation history: non-punct tokens from the
        # current chunk opener up to (not including) this token
        history = [u.deprel for u in parsed.flat_tokens
                   if last_boundary <= u.global_index < t.global_index
                   and not u.is_punct()]
        has_clause = "root" in history or "parataxis" in history
        if t.deprel == "root" and has_clause:
            fired = 1
        elif consumed < len(conj) and t.governor == conj[consumed]:
            fired = 2
            consumed += 1
        elif t.deprel == "parataxis" and has_clause:
            fired = 3
        else:
            fired = None
        if fired is not None:
            boundaries.append((t.global_index, fired))
            last_boundary = t.global_index
    return boundaries


def random_parsed(rng):
    sentences = []
    for _ in range(rng.randint(1, 2)):
        n = rng.randint(1, 6)
        root_at = rng.randint(1, n)
        sent = []
        for i in range(1, n + 1):
            if i == root_at:
                sent.append((rng.choice(WORDS), 0, "root"))
            else:
                deprel = rng.choice([r for r in RELATIONS if r != "root"])
                head = rng.choice([h for h in range(1, n + 1) if h != i])
                sent.append((rng.choice(WORDS), head, deprel))
        sentences.append(sent)
    return make_parsed(sentences)


def test_boundaries_match_oracle_on_random_parses():
    rng = random.Random(4021)
    for _ in range(300):
        parsed = random_parsed(rng)
        assert find_boundaries(parsed) == oracle_boundaries(parsed)


def test_conj_consumption_is_monotone():
    rng = random.Random(99)
    for _ in range(100):
        parsed = random_parsed(rng)
        fired_conj = [i for i, cond in find_boundaries(parsed) if cond == 2]
        conj = find_conj_boundaries(parsed)
        # condition 2 fires at most once per conjunct, in order
        assert len(fired_conj) <= len(conj)
        assert fired_conj == sorted(fired_conj)


def test_coverage_on_random_parses():
    rng = random.Random(7)
    for _ in range(200):
        parsed = random_parsed(rng)
        non_punct = [t.form for t in parsed.flat_tokens if not t.is_punct()]
        if not non_punct:
            continue
        chunks = chunk_instruction(parsed)
        flat = [w for c in chunks for w in c.words]
        assert flat == non_punct
