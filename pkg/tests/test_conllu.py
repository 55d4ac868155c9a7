import pytest

from subnav.conllu import ConlluError, parse_conllu, parse_conllu_file

TWO_WORDS = (
    "1\tgo\tgo\tVERB\tVB\t_\t0\troot\t_\t_\n"
    "2\tleft\tleft\tADV\tRB\t_\t1\tadvmod\t_\t_\n"
)

TWO_SENTENCES = TWO_WORDS + "\n" + (
    "1\tstop\tstop\tVERB\tVB\t_\t0\troot\t_\t_\n"
    "2\tthere\tthere\tADV\tRB\t_\t1\tadvmod\t_\t_\n"
)


def test_parse_two_word_sentence():
    parsed = parse_conllu(TWO_WORDS)
    assert len(parsed.sentences) == 1
    assert len(parsed.flat_tokens) == 2
    first = parsed.flat_tokens[0]
    assert first.form == "go"
    assert first.deprel == "root"
    assert first.token.head == 0
    assert first.governor is None
    second = parsed.flat_tokens[1]
    assert second.token.upos == "ADV"
    assert second.governor == 1


def test_global_indices_span_sentences():
    parsed = parse_conllu(TWO_SENTENCES)
    assert len(parsed.sentences) == 2
    assert [ft.global_index for ft in parsed.flat_tokens] == [1, 2, 3, 4]
    # governors stay sentence-local: "there" points at global index 3
    assert parsed.flat_tokens[3].governor == 3
    assert parsed.flat_tokens[3].sentence_id == 1
    assert parsed.flat_tokens[3].local_index == 2


def test_bad_head_column_names_line():
    text = TWO_WORDS.replace("\t1\tadvmod", "\tx\tadvmod")
    with pytest.raises(ConlluError, match="line 2"):
        parse_conllu(text)


def test_wrong_column_count_rejected():
    with pytest.raises(ConlluError, match="10"):
        parse_conllu("1\tgo\tgo\tVERB\t0\troot\n")


def test_missing_root_is_structural_error():
    text = TWO_WORDS.replace("0\troot", "2\tconj")
    with pytest.raises(ConlluError, match="root"):
        parse_conllu(text)


def test_double_root_is_structural_error():
    text = TWO_WORDS.replace("1\tadvmod", "0\troot")
    with pytest.raises(ConlluError, match="root"):
        parse_conllu(text)


def test_self_governed_token_rejected():
    text = TWO_WORDS.replace("2\tleft\tleft\tADV\tRB\t_\t1",
                             "2\tleft\tleft\tADV\tRB\t_\t2")
    with pytest.raises(ConlluError, match="own governor"):
        parse_conllu(text)


def test_head_root_disagreement_warns_not_raises():
    # head 0 but a non-root relation: tolerated with a warning
    text = TWO_WORDS.replace("1\tadvmod", "0\tadvmod")
    with pytest.warns(UserWarning, match="disagree"):
        parse_conllu(text)


def test_multiword_ranges_and_empty_nodes_skipped():
    text = (
        "1-2\tgonna\t_\t_\t_\t_\t_\t_\t_\t_\n"
        "1\tgoing\tgo\tVERB\tVB\t_\t0\troot\t_\t_\n"
        "2\tto\tto\tPART\tTO\t_\t1\tmark\t_\t_\n"
        "2.1\tghost\t_\t_\t_\t_\t_\t_\t_\t_\n"
    )
    parsed = parse_conllu(text)
    assert [t.form for t in parsed.flat_tokens] == ["going", "to"]


def test_comments_ignored():
    parsed = parse_conllu("# text = go left\n" + TWO_WORDS)
    assert len(parsed.flat_tokens) == 2


def test_empty_input_rejected():
    with pytest.raises(ConlluError, match="no sentences"):
        parse_conllu("# nothing here\n\n")


def test_round_trip(fixtures_dir):
    text = (fixtures_dir / "walkthrough.conllu").read_text(encoding="utf-8")
    parsed = parse_conllu(text)
    again = parse_conllu(parsed.to_conllu())
    assert again.sentences == parsed.sentences
    assert [t.global_index for t in again.flat_tokens] == \
        [t.global_index for t in parsed.flat_tokens]


def test_text_id_convention_splits_instructions():
    bundle = f"# text_id = first\n{TWO_WORDS}\n# text_id = second\n{TWO_SENTENCES}"
    parsed = parse_conllu_file(bundle)
    assert list(parsed) == ["first", "second"]
    assert len(parsed["first"].flat_tokens) == 2
    assert len(parsed["second"].flat_tokens) == 4


def test_file_without_text_id_is_single_instruction():
    parsed = parse_conllu_file(TWO_WORDS)
    assert list(parsed) == ["0"]


def test_duplicate_text_id_rejected():
    bundle = f"# text_id = a\n{TWO_WORDS}\n# text_id = a\n{TWO_WORDS}"
    with pytest.raises(ConlluError, match="duplicate"):
        parse_conllu_file(bundle)
