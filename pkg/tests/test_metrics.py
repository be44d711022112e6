import itertools
import json
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from graphret import metrics
from graphret.errors import EmptyDatasetError, ParameterError
from graphret.retrieval import RetrievalIndex


def ap_oracle(rel):
    """Exact AP with rationals, straight from the precision/relevance sums."""
    hits = sum(rel)
    if hits == 0:
        return Fraction(0)
    total = Fraction(0)
    for r in range(1, len(rel) + 1):
        if rel[r - 1]:
            total += Fraction(sum(rel[:r]), r)
    return total / hits


def mv_oracle(labels, q):
    counts = {lab: labels.count(lab) for lab in set(labels)}
    return int(counts.get(q, 0) == max(counts.values()))


def test_ap_pattern_example():
    labels = ["a", "b", "a", "b", "b"]
    assert metrics.average_precision_at_k(labels, "a", 5) == pytest.approx(5 / 6, abs=1e-12)


def test_ap_all_and_none():
    assert metrics.average_precision_at_k([1] * 5, 1, 5) == 1.0
    assert metrics.average_precision_at_k([0] * 5, 1, 5) == 0.0


def test_ap_errors():
    with pytest.raises(ParameterError):
        metrics.average_precision_at_k([], 0, 1)
    with pytest.raises(ParameterError):
        metrics.average_precision_at_k([0, 1], 0, 3)


def test_ap_matches_enumeration_1000():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        k = int(rng.integers(1, 11))
        labels = list(rng.integers(0, 3, size=k + 3))
        rel = [int(lab == 0) for lab in labels[:k]]
        assert metrics.average_precision_at_k(labels, 0, k) == float(ap_oracle(rel))
        assert metrics.majority_vote_hit(labels, 0, k) == mv_oracle(labels[:k], 0)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(0, 3), min_size=1, max_size=12), st.data())
def test_ap_properties(labels, data):
    k = data.draw(st.integers(1, len(labels)))
    ap = metrics.average_precision_at_k(labels, 0, k)
    assert 0 <= ap <= 1
    rel = [lab == 0 for lab in labels[:k]]
    prefix = any(rel) and rel == sorted(rel, reverse=True)
    assert (ap == 1) == prefix
    tail = data.draw(st.lists(st.integers(0, 3), min_size=len(labels) - k, max_size=len(labels) - k))
    assert metrics.average_precision_at_k(labels[:k] + tail, 0, k) == ap
    if all(lab == 0 for lab in labels[:k]):
        assert metrics.majority_vote_hit(labels, 0, k) == 1


def test_majority_vote_examples():
    assert metrics.majority_vote_hit(["M", "M", "BN", "M", "M"], "M", 5) == 1
    assert metrics.majority_vote_hit(["A", "A", "B", "B"], "A", 4) == 1
    assert metrics.majority_vote_hit(["B", "B", "B"], "A", 3) == 0


def test_corpus_relevance_normalizer():
    assert metrics.average_precision_at_k([1, 0, 1], 1, 3, n_relevant=4) == pytest.approx((1 + 2 / 3) / 4)


def qe(i, ap, hit):
    return metrics.QueryEval(str(i), 0, ap, hit, ["x"], [0])


def test_aggregate_means():
    rng = np.random.default_rng(1)
    per = [qe(i, float(rng.random()), int(rng.integers(0, 2))) for i in range(37)]
    rep = metrics.aggregate(per, 5, skipped=2)
    assert abs(rep.map_k - sum(q.ap for q in per) / 37) < 1e-12
    assert abs(rep.mmv_k - sum(q.mv_hit for q in per) / 37) < 1e-12
    assert (rep.evaluated, rep.skipped) == (37, 2)
    with pytest.raises(EmptyDatasetError):
        metrics.aggregate([], 5)


def test_report_exports(tmp_path):
    rep = metrics.aggregate([qe(0, 1.0, 1), qe(1, 0.5, 0)], 5)
    rep.write_json(tmp_path / "r.json")
    d = json.loads((tmp_path / "r.json").read_text())
    assert d["map_k"] == 0.75 and d["mmv_k"] == 0.5 and len(d["per_query"]) == 2
    rep.write_csv(tmp_path / "r.csv")
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[:3] == ["metric,k,value", "map,5,0.75", "mmv,5,0.5"]


def expected_random_ap(C, k):
    p = Fraction(1, C)
    total = Fraction(0)
    for rel in itertools.product((0, 1), repeat=k):
        h = sum(rel)
        total += p ** h * (1 - p) ** (k - h) * ap_oracle(list(rel))
    return float(total)


@pytest.mark.parametrize("C", [2, 4])
def test_random_label_index(C):
    rng = np.random.default_rng(C)
    n, q = 400, 600
    index = RetrievalIndex(np.zeros((n, 2), np.float32), [f"i{j}" for j in range(n)],
                           rng.integers(0, C, n), np.arange(n), bytes(32))
    per = []
    for i in range(q):
        ql = int(rng.integers(0, C))
        labels = list(rng.choice(index.labels, 5, replace=False))
        per.append(metrics.QueryEval(str(i), ql, metrics.average_precision_at_k(labels, ql, 5),
                                     metrics.majority_vote_hit(labels, ql, 5), [], labels))
    rep = metrics.aggregate(per, 5)
    assert abs(rep.map_k - expected_random_ap(C, 5)) <= 0.05
