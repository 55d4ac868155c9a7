"""Split a dependency-parsed instruction into ordered sub-instructions.

A new sub-instruction opens at a token that (1) is a clause root while the
running chunk already contains a ``root`` or ``parataxis`` relation, (2) is
governed by a conjunct of the previous root, or (3) is a ``parataxis`` under
the same history condition as (1).  Chunks that are too short, or that are a
bare action phrase ("go straight then ..."), are merged into a neighbour
instead of being emitted on their own.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .conllu import FlatToken, ParsedInstruction

# Navigation verbs and direction/manner words that make up a bare action
# phrase on their own.  Data, not contract: override via ChunkingConfig.
DEFAULT_ACTION_LEXICON = frozenset({
    "go", "walk", "turn", "head", "continue", "stop", "wait", "exit",
    "enter", "proceed", "move", "climb", "step", "straight", "forward",
    "forwards", "ahead", "left", "right", "around", "back",
})

DEFAULT_CONNECTIVE_LEXICON = frozenset({"then", "and"})

# Function words that never count as chunk content.
STOP_WORDS = frozenset({
    "the", "a", "an", "to", "of", "at", "in", "on", "into", "onto",
    "until", "till", "once", "and", "then", "or", "with", "your", "you",
})

BOUNDARY_RELATIONS = ("root", "parataxis")


class ChunkingError(ValueError):
    pass


class ChunkDisposition(enum.Enum):
    EMIT = "emit"
    MERGE_WITH_PREVIOUS = "merge_with_previous"
    MERGE_WITH_NEXT = "merge_with_next"


@dataclass(frozen=True)
class ChunkingConfig:
    """Tunable thresholds and lexicons for the Check merge heuristic."""

    min_chunk_words: int = 3
    action_lexicon: frozenset[str] = DEFAULT_ACTION_LEXICON
    connective_lexicon: frozenset[str] = DEFAULT_CONNECTIVE_LEXICON

    def __post_init__(self):
        if self.min_chunk_words < 1:
            raise ValueError("min_chunk_words must be >= 1")
        if not self.action_lexicon or not self.connective_lexicon:
            raise ValueError("lexicons must be non-empty")

    def is_content_word(self, word: str) -> bool:
        w = word.lower()
        return (w not in self.action_lexicon
                and w not in self.connective_lexicon
                and w not in STOP_WORDS)


@dataclass(frozen=True)
class SubInstruction:
    """A contiguous span of instruction words describing one navigation step.

    ``indices`` are the global (1-based) token positions of the words in the
    source instruction; punctuation tokens are excluded, so the sequence may
    skip positions but is always strictly increasing.
    """

    id: int
    words: tuple[str, ...]
    indices: tuple[int, ...]

    def text(self) -> str:
        return " ".join(self.words)

    def lowered(self) -> list[str]:
        return [w.lower() for w in self.words]

    def spans(self) -> list[tuple[int, int]]:
        """Contiguous (start, end) index runs, both inclusive."""
        runs: list[tuple[int, int]] = []
        for idx in self.indices:
            if runs and idx == runs[-1][1] + 1:
                runs[-1] = (runs[-1][0], idx)
            else:
                runs.append((idx, idx))
        return runs


def find_conj_boundaries(parsed: ParsedInstruction) -> list[int]:
    """Global indices of ``conj`` tokens whose governor is a sentence root."""
    out = []
    for ft in parsed.flat_tokens:
        if ft.deprel != "conj" or ft.governor is None:
            continue
        if parsed.token_at(ft.governor).deprel == "root":
            out.append(ft.global_index)
    return out


def check_chunk(
    words: list[str],
    position: str,
    config: ChunkingConfig = ChunkingConfig(),
) -> ChunkDisposition:
    """Decide whether a candidate chunk stands alone or merges with a neighbour.

    ``position`` is one of ``first``, ``middle``, ``last`` or ``only``;
    the merge direction is flipped where it would point outside the
    instruction, and a chunk that is both first and last is always emitted.
    """
    if not words:
        raise ChunkingError("empty chunk")
    if position not in ("first", "middle", "last", "only"):
        raise ChunkingError(f"unknown position {position!r}")
    if position == "only":
        return ChunkDisposition.EMIT
    long_enough = len(words) >= config.min_chunk_words
    has_content = any(config.is_content_word(w) for w in words)
    if long_enough and has_content:
        return ChunkDisposition.EMIT
    if words[-1].lower() in config.connective_lexicon:
        disposition = ChunkDisposition.MERGE_WITH_NEXT
    else:
        disposition = ChunkDisposition.MERGE_WITH_PREVIOUS
    if disposition is ChunkDisposition.MERGE_WITH_PREVIOUS and position == "first":
        return ChunkDisposition.MERGE_WITH_NEXT
    if disposition is ChunkDisposition.MERGE_WITH_NEXT and position == "last":
        return ChunkDisposition.MERGE_WITH_PREVIOUS
    return disposition


@dataclass
class _Accumulator:
    """State of the chunking main loop."""

    config: ChunkingConfig
    emitted: list[list[tuple[str, int]]] = field(default_factory=list)
    pending_next: list[tuple[str, int]] = field(default_factory=list)
    current: list[tuple[str, int]] = field(default_factory=list)

    def add(self, token: FlatToken) -> None:
        self.current.append((token.form, token.global_index))

    def flush(self, last: bool) -> None:
        chunk = self.pending_next + self.current
        self.pending_next = []
        self.current = []
        if not chunk:
            return
        if not self.emitted and last:
            position = "only"
        elif not self.emitted:
            position = "first"
        elif last:
            position = "last"
        else:
            position = "middle"
        disposition = check_chunk([w for w, _ in chunk], position, self.config)
        if disposition is ChunkDisposition.EMIT:
            self.emitted.append(chunk)
        elif disposition is ChunkDisposition.MERGE_WITH_PREVIOUS:
            self.emitted[-1].extend(chunk)
        else:
            self.pending_next = chunk


def boundary_condition(
    token: FlatToken,
    relations_in_chunk: list[str],
    conj_indices: list[int],
    next_conj: int,
) -> int | None:
    """Which boundary condition (1, 2 or 3) the token fires, if any.

    ``relations_in_chunk`` is the relation history of the running chunk and
    ``conj_indices[next_conj]`` the next unconsumed conjunct-of-root index.
    """
    history = any(rel in relations_in_chunk for rel in BOUNDARY_RELATIONS)
    if token.deprel == "root" and history:
        return 1
    if (next_conj < len(conj_indices)
            and token.governor is not None
            and token.governor == conj_indices[next_conj]):
        return 2
    if token.deprel == "parataxis" and history:
        return 3
    return None


def find_boundaries(parsed: ParsedInstruction) -> list[tuple[int, int]]:
    """(global token index, fired condition) pairs where new chunks open.

    A boundary resets the relation history; the boundary token itself starts
    the new chunk (punctuation aside), so its relation seeds the new history.
    """
    conj_indices = find_conj_boundaries(parsed)
    next_conj = 0
    relations: list[str] = []
    out: list[tuple[int, int]] = []
    for ft in parsed.flat_tokens:
        fired = boundary_condition(ft, relations, conj_indices, next_conj)
        if fired is not None:
            if fired == 2:
                next_conj += 1
            out.append((ft.global_index, fired))
            relations = []
        if not ft.is_punct():
            relations.append(ft.deprel)
    return out


def chunk_instruction(
    parsed: ParsedInstruction,
    config: ChunkingConfig = ChunkingConfig(),
) -> list[SubInstruction]:
    """Segment an instruction into ordered, exhaustive sub-instructions.

    Every non-punctuation token of the input appears in exactly one returned
    sub-instruction, in the original order.
    """
    if all(ft.is_punct() for ft in parsed.flat_tokens):
        raise ChunkingError("no chunkable content (instruction is all punctuation)")

    boundary_at = {index for index, _ in find_boundaries(parsed)}
    acc = _Accumulator(config=config)

    for ft in parsed.flat_tokens:
        if ft.global_index in boundary_at:
            acc.flush(last=False)
        if not ft.is_punct():
            acc.add(ft)
    # a trailing merge-with-next has nowhere to go; the final flush flips it
    # to merge-with-previous via the position argument
    acc.flush(last=True)

    return [
        SubInstruction(
            id=ordinal,
            words=tuple(w for w, _ in chunk),
            indices=tuple(i for _, i in chunk),
        )
        for ordinal, chunk in enumerate(acc.emitted, start=1)
    ]
