import numpy as np
import pytest

from seqqa.data import Evidence, QAInstance, SynonymDict
from seqqa.decoders import B, I, O1, O2
from seqqa.evaluation import (AnswerSpan, Metrics, evaluate, extract_answer, format_report,
                              instance_synonyms, match_answer, predict_instance, vote_answers,
                              write_predictions)


def span(*toks, k=0):
    return AnswerSpan(tuple(toks), k, 0, len(toks))


def test_extract_first_b_and_following_is():
    toks = "a b c d e f".split()
    got = extract_answer([O1, B, I, O2, B, I], toks, 3)
    assert got == AnswerSpan(("b", "c"), 3, 1, 3)
    assert extract_answer([O1, O1, O1, O1, O1, O1], toks) is None
    # a stray I before any B is ignored
    assert extract_answer([I, O1, B, O2, O2, O2], toks).tokens == ("c",)
    with pytest.raises(ValueError):
        extract_answer([B], toks)


def test_voting_majority_and_tie_break():
    assert vote_answers([span("x"), span("y"), span("y")]) == ("y",)
    assert vote_answers([None, span("y"), span("x"), span("x"), span("y")]) == ("y",)
    assert vote_answers([None, None]) is None
    assert vote_answers([]) is None


def test_match_modes():
    syn = SynonymDict([(("NYC",), ("New", "York"))])
    assert match_answer(("NYC",), [("NYC",)], syn, "strict")
    assert not match_answer(("New", "York"), [("NYC",)], syn, "strict")
    assert match_answer(("New", "York"), [("NYC",)], syn, "fuzzy")
    assert not match_answer(None, [("NYC",)], syn, "fuzzy")
    with pytest.raises(ValueError):
        match_answer(("a",), [("a",)], mode="loose")


def test_metrics_values_and_guards():
    m = Metrics(3, 4, 10)
    assert m.precision == 0.75 and m.recall == 0.3
    assert m.f1 == pytest.approx(2 * 0.75 * 0.3 / 1.05)
    assert Metrics(0, 0, 5).f1 == 0.0
    assert Metrics(0, 0, 0).precision == 0.0
    with pytest.raises(ValueError):
        Metrics(5, 4, 10)
    with pytest.raises(ValueError):
        Metrics(1, 11, 10)


def test_instance_synonyms_include_alternative_answers():
    inst = QAInstance("1", ["q"], [("a",), ("alpha",)], [])
    syn = instance_synonyms(inst, SynonymDict([(("a",), ("A",))]))
    assert syn.are_synonyms(("a",), ("alpha",)) and syn.are_synonyms(("a",), ("A",))


class FixedModel:
    """Labels the first occurrence of ``target`` as B, everything else O1."""

    def __init__(self, target):
        self.target = target

    def decode(self, ex):
        toks = list(ex.evidence_tokens)
        out = np.full(len(toks), O1)
        if self.target in toks:
            out[toks.index(self.target)] = B
        return out


class Vocab1:
    def encode(self, toks):
        return np.zeros(len(toks), dtype=np.int64)


def corpus():
    return [
        QAInstance("q1", ["who"], [("a",)], [
            Evidence(["x", "a"], "positive", False),
            Evidence(["b"], "retrieved_negative", True),
            Evidence(["a", "y"], "positive", True),
            Evidence(["z", "a"], "positive", True),
        ]),
        QAInstance("q2", ["who"], [("c",)], [
            Evidence(["q", "r"], "positive", False),
            Evidence(["a"], "positive", True),
        ]),
    ]


def test_annotated_setting_uses_major_evidence_only():
    answer, decodes, had = predict_instance(FixedModel("a"), Vocab1(), corpus()[0], "annotated")
    assert answer == ("a",) and had
    assert [k for k, _ in decodes] == [0]


def test_retrieved_setting_votes_over_retrieved_evidences():
    answer, decodes, _ = predict_instance(FixedModel("a"), Vocab1(), corpus()[0], "retrieved")
    assert [k for k, _ in decodes] == [1, 2, 3]
    assert answer == ("a",)
    _, decodes, _ = predict_instance(FixedModel("a"), Vocab1(), corpus()[0], "retrieved",
                                     max_retrieved=2)
    assert [k for k, _ in decodes] == [1, 2]


def test_evaluate_counts_and_report(tmp_path):
    res = evaluate(corpus(), FixedModel("a"), Vocab1(), "retrieved")
    m = res.metrics["strict"]
    assert m.counts == (1, 2, 2)
    assert m.precision == 0.5 and m.recall == 0.5
    threaded = evaluate(corpus(), FixedModel("a"), Vocab1(), "retrieved", threads=2)
    assert [r.answer for r in threaded.records] == [r.answer for r in res.records]
    report = format_report([res])
    header = report.splitlines()[0].split()
    assert header[-3:] == ["P", "R", "F1"]
    assert "50.00" in report
    path = tmp_path / "pred.tsv"
    write_predictions(path, res.records)
    assert path.read_text(encoding="utf-8").splitlines() == ["q1\ta\t1\t1", "q2\ta\t0\t0"]


def test_question_without_evidences_is_unanswered(caplog):
    inst = QAInstance("q", ["who"], [("a",)], [Evidence(["a"], "positive", False)])
    res = evaluate([inst], FixedModel("a"), Vocab1(), "retrieved")
    assert res.metrics["strict"].counts == (0, 0, 1)
    assert "no retrieved evidences" in caplog.text
