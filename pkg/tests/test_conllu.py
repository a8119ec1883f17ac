import logging

import pytest

from catseg.conllu import (
    Corpus,
    ParseError,
    Sentence,
    TokenEntry,
    parse_conllu,
    read_conllu,
    to_conllu,
    write_conllu,
)

from conftest import FIXTURES, corpus_from


def test_token_entry_validation():
    with pytest.raises(ValueError):
        TokenEntry("ab", ["a", ""])
    with pytest.raises(ValueError):
        TokenEntry("ab", ["a", "b"], labels=["X"])
    # zero segments is a legal in-memory state (degenerate prediction)
    assert TokenEntry("ab", []).segments == []


def test_parse_small_fixture(small_corpus):
    assert [s.sent_id for s in small_corpus.sentences] == ["s1", "s2"]
    s1, s2 = small_corpus.sentences
    assert [t.surface for t in s1.tokens] == ["bagi", "dom", "solta"]
    assert s1.tokens[0].segments == ["ba", "gi"]
    assert s1.tokens[0].labels == ["PRE", "TRG"]
    assert s1.tokens[0].char_span == (1, 2)
    assert s1.tokens[1].segments == ["dom"]
    assert s1.segment_sequence() == ["ba", "gi", "dom", "sol", "ta"]
    assert s1.label_sequence() == ["PRE", "TRG", "STEM", "STEM", "SUF"]
    assert s1.dep_annotations == [
        ("ba", 2, "pre"),
        ("gi", 0, "root"),
        ("dom", 2, "obj"),
        ("sol", 2, "obj"),
        ("ta", 4, "suf"),
    ]
    assert s2.tokens[1].surface == "basol"
    assert small_corpus.n_tokens() == 5


def test_round_trip_through_serializer(small_corpus):
    text = to_conllu(small_corpus)
    again = parse_conllu(text)
    assert to_conllu(again) == text
    for a, b in zip(again.sentences, small_corpus.sentences):
        assert a.sent_id == b.sent_id
        assert [t.segments for t in a.tokens] == [t.segments for t in b.tokens]
        assert [t.labels for t in a.tokens] == [t.labels for t in b.tokens]
        assert a.dep_annotations == b.dep_annotations


def test_header_and_comment_lines_survive_reparse(tmp_path):
    corpus = corpus_from([[("ab", ["a", "b"])]], id_prefix="c")
    path = tmp_path / "out.conllu"
    write_conllu(
        corpus,
        path,
        comments={"c0": ["truncated_tokens = 1"]},
        header=["lr=0.001", "seed=0"],
    )
    text = path.read_text()
    assert text.startswith("# lr=0.001\n# seed=0\n")
    assert "# truncated_tokens = 1\n" in text
    again = read_conllu(path)
    assert again.sentences[0].tokens[0].segments == ["a", "b"]


def test_missing_sent_id_gets_autoassigned(caplog):
    text = "1\tab\t_\t_\t_\t_\t_\t_\t_\t_\n"
    with caplog.at_level(logging.WARNING):
        corpus = parse_conllu(text)
    assert corpus.sentences[0].sent_id == "auto1"
    assert any("no sent_id" in r.message for r in caplog.records)


def test_empty_nodes_are_skipped():
    text = (
        "# sent_id = x\n"
        "1\tab\t_\t_\t_\t_\t_\t_\t_\t_\n"
        "1.1\tghost\t_\t_\t_\t_\t_\t_\t_\t_\n"
        "2\tcd\t_\t_\t_\t_\t_\t_\t_\t_\n"
    )
    corpus = parse_conllu(text)
    assert [t.surface for t in corpus.sentences[0].tokens] == ["ab", "cd"]


def test_dep_annotations_require_full_coverage():
    # one row with '_' head suppresses dependency capture for the sentence
    text = (
        "# sent_id = x\n"
        "1\tab\t_\t_\t_\t_\t0\troot\t_\t_\n"
        "2\tcd\t_\t_\t_\t_\t_\t_\t_\t_\n"
    )
    assert parse_conllu(text).sentences[0].dep_annotations is None


@pytest.mark.parametrize(
    "body,message",
    [
        ("1\tab\t_\t_\t_\n", "columns"),
        ("2\tab\t_\t_\t_\t_\t_\t_\t_\t_\n", "not sequential"),
        ("x\tab\t_\t_\t_\t_\t_\t_\t_\t_\n", "malformed word id"),
        ("1-1\tab\t_\t_\t_\t_\t_\t_\t_\t_\n1\ta\t_\t_\t_\t_\t_\t_\t_\t_\n", "empty token range"),
        ("1-x\tab\t_\t_\t_\t_\t_\t_\t_\t_\n1\ta\t_\t_\t_\t_\t_\t_\t_\t_\n", "malformed token range"),
        (
            "1-3\tabc\t_\t_\t_\t_\t_\t_\t_\t_\n"
            "1\ta\t_\t_\t_\t_\t_\t_\t_\t_\n"
            "2-3\tbc\t_\t_\t_\t_\t_\t_\t_\t_\n"
            "2\tb\t_\t_\t_\t_\t_\t_\t_\t_\n"
            "3\tc\t_\t_\t_\t_\t_\t_\t_\t_\n",
            "overlapping",
        ),
        ("1-4\tab\t_\t_\t_\t_\t_\t_\t_\t_\n1\ta\t_\t_\t_\t_\t_\t_\t_\t_\n", "outside word rows"),
        ("1\tab\t_\t_\t_\t_\t9\trel\t_\t_\n", "out of range"),
        ("1\tab\t_\t_\t_\t_\tz\trel\t_\t_\n", "non-integer head"),
    ],
)
def test_malformed_inputs_raise_parse_errors(body, message):
    with pytest.raises(ParseError, match=message):
        parse_conllu("# sent_id = x\n" + body)


def test_duplicate_sent_id_rejected():
    one = "# sent_id = x\n1\tab\t_\t_\t_\t_\t_\t_\t_\t_\n"
    with pytest.raises(ParseError, match="duplicate"):
        parse_conllu(one + "\n" + one)


def test_sentence_without_rows_rejected():
    with pytest.raises(ParseError, match="no word rows"):
        parse_conllu("# sent_id = x\n\n")


def test_serializer_rejects_empty_segment_lists():
    corpus = Corpus([Sentence("x", [TokenEntry("ab", [])])])
    with pytest.raises(ValueError, match="no segments"):
        to_conllu(corpus)


def test_serializer_emits_range_lines_only_for_splits():
    corpus = corpus_from([[("ab", ["a", "b"]), ("cd", ["cd"])]])
    lines = to_conllu(corpus).splitlines()
    assert lines[1].startswith("1-2\tab")
    assert lines[4].startswith("3\tcd")
    assert not any("3-" in ln.split("\t")[0] for ln in lines[4:])


def test_error_fixture_files_parse():
    pred = read_conllu(FIXTURES / "errors_pred.conllu")
    gold = read_conllu(FIXTURES / "errors_gold.conllu")
    assert pred.n_tokens() == gold.n_tokens() == 20
