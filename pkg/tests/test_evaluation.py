import json
import random
from collections import Counter
from pathlib import Path

import pytest
from hypothesis import given, settings, strategies as st

from ctqa.errors import MissingPair
from ctqa.evaluation import EvalReport, PairResult, error_sample, evaluate, is_correct, matches, normalize_answer
from ctqa.ingest import Dataset, QAPair, Split
from ctqa.orchestrator import Prediction, StructuredAnswer
from ctqa.prompts import Route
from tables import compensation_table

CALIBRATION = Path(__file__).parent / "data" / "scorer_calibration.jsonl"


def test_normalize_examples():
    assert normalize_answer("9,280").number == 9280
    assert normalize_answer("Women.").text == "women"
    n = normalize_answer("57.5%")
    assert n.number == 57.5 and n.percent
    assert normalize_answer("  \"Hello   World\"!  ").text == "hello world"
    assert normalize_answer("0.575").number == 0.575  # no percent rescaling


@pytest.mark.parametrize("answer,gold,expected", [
    ("Women (57.5% vs 72.4%)", ["women living in an nh"], False),
    ("9280", ["9,280"], True),
    ("the total was 416 units", ["416"], True),
    ("4160", ["416"], False),
    ("416", ["416", "12"], False),
    ("12 then 416", ["416", "12"], True),
])
def test_is_correct_examples(answer, gold, expected):
    assert is_correct(answer, gold) is expected


def test_idn_never_correct():
    assert not is_correct("416", ["416"], idn=True)


def calibration_rows():
    return [json.loads(line) for line in CALIBRATION.read_text().splitlines() if line.strip()]


def test_calibration_set_shape():
    rows = calibration_rows()
    assert len(rows) == 50 and len({r["id"] for r in rows}) == 50
    assert {True, False} == {r["human_correct"] for r in rows}


@settings(max_examples=200, deadline=None)
@given(golds=st.lists(st.sampled_from(["12", "15", "women", "9,280", "karlsruher sc"]), min_size=1, max_size=3),
       answer=st.sampled_from(["12 and 15", "women", "9280", "karlsruher sc 12", "nothing"]),
       seed=st.integers(0, 1000))
def test_gold_order_does_not_matter(golds, answer, seed):
    shuffled = golds[:]
    random.Random(seed).shuffle(shuffled)
    assert is_correct(answer, golds) == is_correct(answer, shuffled)


@settings(max_examples=200, deadline=None)
@given(text=st.text(max_size=40))
def test_matches_reflexive(text):
    if normalize_answer(text).text:
        assert matches(text, text)


# -- reports -----------------------------------------------------------------

def make(n, answers, golds=None, splits=None, routes=None, idn=None, failures=None):
    t = compensation_table()
    pairs, preds = [], []
    for i in range(n):
        qa = f"q{i:03d}"
        pairs.append(QAPair(qa, t.table_id, f"question {i}?", ((golds or ["1"] * n)[i],),
                            (splits or [Split.TEST] * n)[i], frozenset({"even" if i % 2 == 0 else "odd"})))
        fail = (failures or [None] * n)[i]
        s = None if fail else StructuredAnswer(answer=answers[i], idn=bool(idn and idn[i]))
        preds.append(Prediction(qa, (routes or [Route.SINGLE] * n)[i], s, failure=fail))
    return Dataset("d", {t.table_id: t}, tuple(pairs)), preds


def test_half_correct():
    ds, preds = make(10, ["1"] * 5 + ["2"] * 5)
    r = evaluate(preds, ds)
    assert r.overall_accuracy == 0.5 and r.n_correct == 5 and r.n_total == 10
    assert r.by_subset == {"even": 0.6, "odd": 0.4}
    assert r.by_split == {"TEST": 0.5}


def test_all_idn():
    ds, preds = make(4, ["I don't know"] * 4, idn=[True] * 4)
    r = evaluate(preds, ds)
    assert r.overall_accuracy == 0 and r.idn_rate == 1.0


def test_failures_count_as_incorrect():
    ds, preds = make(4, ["1"] * 4, failures=[None, "network", None, "replay_miss"])
    r = evaluate(preds, ds)
    assert r.n_failed == 2 and r.overall_accuracy == 0.5


def test_routes_breakdown_and_missing_pairs():
    ds, preds = make(4, ["1", "1", "2", "1"], routes=[Route.SINGLE, Route.MULTI, Route.MULTI, Route.SINGLE])
    r = evaluate(preds[:3], ds)
    assert r.by_route == {"MULTI": 0.5, "SINGLE": 1.0} and r.n_missing == 1
    with pytest.raises(MissingPair):
        evaluate(preds[:3], ds, strict=True)
    with pytest.raises(ValueError):
        evaluate(preds + [Prediction("zzz", Route.SINGLE, StructuredAnswer(answer="1"))], ds)


def test_report_deterministic_and_order_insensitive():
    ds, preds = make(6, ["1", "2", "1", "x", "1", "1"])
    a = evaluate(preds, ds).to_json()
    b = evaluate(list(reversed(preds)), ds).to_json()
    assert a == b
    assert "overall" in evaluate(preds, ds).summary_table()


def test_fold_property():
    ds, preds = make(8, ["1", "2"] * 4, idn=[False, True] * 4)
    whole = evaluate(preds, ds)
    left, right = evaluate(preds[:3], ds), evaluate(preds[3:], ds)
    assert whole.n_correct == left.n_correct + right.n_correct
    assert whole.n_idn == left.n_idn + right.n_idn
    assert whole.overall_accuracy + whole.idn_rate <= 1


def synthetic_report(routes):
    per = [PairResult(f"e{i:04d}", False, r, False, "a", ("g",), "TEST", ()) for i, r in enumerate(routes)]
    return EvalReport(0, {}, {}, {}, 0, 0, len(per), 0, 0, 0, per)


def test_error_sample_seeded_and_stratified():
    routes = ["SINGLE"] * 120 + ["MULTI"] * 70 + ["SIMPLE"] * 10
    report = synthetic_report(routes)
    a, b = error_sample(report, 50, 7), error_sample(report, 50, 7)
    assert a == b and len(a) == 50 and len({s.qa_id for s in a}) == 50
    counts = Counter(s.route for s in a)
    for route, n in Counter(routes).items():
        assert abs(counts[route] - 50 * n / len(routes)) <= 1
    assert error_sample(report, 50, 8) != a


def test_error_sample_returns_all_when_few():
    report = synthetic_report(["SINGLE"] * 30)
    assert len(error_sample(report, 50, 7)) == 30


@settings(max_examples=100, deadline=None)
@given(counts=st.lists(st.integers(0, 60), min_size=1, max_size=3), n=st.integers(1, 80), seed=st.integers())
def test_error_sample_stratification_property(counts, n, seed):
    routes = [r for r, k in zip(["SINGLE", "MULTI", "SIMPLE"], counts) for _ in range(k)]
    report = synthetic_report(routes)
    sample = error_sample(report, n, seed)
    assert len(sample) == min(n, len(routes))
    if n < len(routes):
        got = Counter(s.route for s in sample)
        for route, k in Counter(routes).items():
            assert abs(got[route] - n * k / len(routes)) <= 1
