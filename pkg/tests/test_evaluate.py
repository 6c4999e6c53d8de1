import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _oracles import brute_ndcg, brute_recall
from socialrank.data import Dataset, Split, split_ratings
from socialrank.evaluate import (
    EvalConfig,
    EvalReport,
    EvaluationError,
    evaluate_model,
    ndcg_at_k,
    recall_at_k,
    relevance_labels,
    relevant_items,
)


class TableScorer:
    """Scores come from a fixed (n_users, n_items) array."""

    def __init__(self, S):
        self.S = np.asarray(S, dtype=float)

    def user_item_logits(self, users, items):
        return self.S[np.ix_(users, items)]


def test_relevance_strictly_above_training_mean():
    # user 0: train {3, 5}, test 5 (relevant) and 4 (not)
    ds = Dataset(1, 4, [0] * 4, [0, 1, 2, 3], [3, 5, 5, 4], "explicit")
    split = Split(np.array([True, True, False, False]), 0.5, 0)
    assert relevance_labels(ds, split, 0) == {2}


def test_relevance_global_fallback():
    ds = Dataset(2, 3, [0, 0, 1], [0, 1, 2], [2, 4, 4], "explicit")
    split = Split(np.array([True, True, False]), 0.67, 0)
    assert relevance_labels(ds, split, 1) == {2}  # 4 > global train mean 3


def test_relevance_all_equal_excluded():
    ds = Dataset(1, 3, [0] * 3, [0, 1, 2], [4, 4, 4], "explicit")
    split = Split(np.array([True, True, False]), 0.67, 0)
    assert relevance_labels(ds, split, 0) == set()


def test_implicit_every_test_item_relevant():
    ds = Dataset(1, 3, [0] * 3, [0, 1, 2], [1, 0, 7], "implicit")
    split = Split(np.array([True, False, False]), 0.34, 0)
    assert relevant_items(ds, split)[0].tolist() == [1, 2]


def test_recall_examples():
    assert recall_at_k(list("abcxyz"), {"a", "b"}, 10) == 1.0
    assert recall_at_k(list("axyz"), {"a", "b", "c", "d"}, 4) == 0.25
    assert recall_at_k([3, 1, 2, 0], {0, 2}, 100) == 1.0
    with pytest.raises(EvaluationError):
        recall_at_k([1], set(), 1)


def test_ndcg_examples():
    assert ndcg_at_k([1, 2, 3], {1, 2}, 3) == 1.0
    assert ndcg_at_k([1, 9, 2], {1, 2}, 3) == pytest.approx(0.9197, abs=1e-4)
    assert ndcg_at_k([9, 8, 7, 1], {1}, 4) == pytest.approx(1 / math.log2(5), abs=1e-15)
    with pytest.raises(EvaluationError):
        ndcg_at_k([1], [], 1)


@settings(max_examples=200, deadline=None)
@given(st.permutations(list(range(12))), st.sets(st.integers(0, 11), min_size=1),
       st.integers(1, 15))
def test_metrics_match_oracle(ranked, relevant, k):
    assert abs(recall_at_k(ranked, relevant, k) - brute_recall(ranked, relevant, k)) <= 1e-12
    assert abs(ndcg_at_k(ranked, relevant, k) - brute_ndcg(ranked, relevant, k)) <= 1e-12


@settings(max_examples=100, deadline=None)
@given(st.permutations(list(range(10))), st.sets(st.integers(0, 9), min_size=1),
       st.integers(1, 9), st.integers(1, 10))
def test_ndcg_swap_up_never_decreases(ranked, relevant, pos, k):
    ranked = list(ranked)
    if ranked[pos] in relevant and ranked[pos - 1] not in relevant:
        better = ranked.copy()
        better[pos - 1], better[pos] = better[pos], better[pos - 1]
        assert ndcg_at_k(better, relevant, k) >= ndcg_at_k(ranked, relevant, k)


def implicit_grid(n_users=30, n_items=40, per_user=12, seed=0):
    rng = np.random.default_rng(seed)
    users, items = [], []
    for u in range(n_users):
        chosen = np.sort(rng.choice(n_items, per_user, replace=False))
        users += [u] * per_user
        items += chosen.tolist()
    return Dataset(n_users, n_items, users, items, np.ones(len(users)), "implicit")


def test_oracle_scorer_is_perfect():
    ds = implicit_grid()
    split = split_ratings(ds, 0.7, 1)
    S = np.zeros((ds.n_users, ds.n_items))
    for u, rel in enumerate(relevant_items(ds, split)):
        S[u, rel] = 1.0
    res = evaluate_model(TableScorer(S), ds, split, EvalConfig(ks=(2, 10)))
    assert res[("all", "ndcg", 10)] == pytest.approx(1.0)
    rel_sizes = [len(r) for r in relevant_items(ds, split) if len(r)]
    expected = np.mean([min(2, n) / n for n in rel_sizes])
    assert res[("all", "recall", 2)] == pytest.approx(expected)


def test_random_scorer_matches_expectation():
    ds = implicit_grid(n_users=60, seed=2)
    split = split_ratings(ds, 0.7, 3)
    rel = relevant_items(ds, split)
    train_counts = np.bincount(ds.users[split.train_mask], minlength=ds.n_users)
    expect = []
    for u in range(ds.n_users):
        if len(rel[u]):
            n_cand = ds.n_items - train_counts[u]
            gain = sum(1 / math.log2(p + 2) for p in range(min(10, n_cand)))
            ideal = sum(1 / math.log2(p + 2) for p in range(min(10, len(rel[u]))))
            expect.append(len(rel[u]) / n_cand * gain / ideal)
    rng = np.random.default_rng(4)
    runs = [evaluate_model(TableScorer(rng.random((ds.n_users, ds.n_items))), ds, split)
            [("all", "ndcg", 10)] for _ in range(40)]
    se = np.std(runs) / np.sqrt(len(runs))
    assert abs(np.mean(runs) - np.mean(expect)) < 4 * se + 1e-3


def test_cold_slice_and_training_items_excluded():
    ds = implicit_grid(n_users=10, per_user=12)
    split = split_ratings(ds, 0.5, 0)
    # a scorer that loves every training item must not get credit for them
    S = np.zeros((ds.n_users, ds.n_items))
    S[ds.users[split.train_mask], ds.items[split.train_mask]] = 10.0
    res = evaluate_model(TableScorer(S), ds, split, EvalConfig(ks=(5,)))
    assert res[("cold", "users", 0)] == res[("all", "users", 0)]
    assert 0.0 <= res[("all", "ndcg", 5)] <= 1.0


def test_no_eligible_users():
    ds = Dataset(1, 3, [0] * 3, [0, 1, 2], [4, 4, 4], "explicit")
    split = Split(np.array([True, True, False]), 0.67, 0)
    with pytest.raises(EvaluationError):
        evaluate_model(TableScorer(np.zeros((1, 3))), ds, split)


def test_report_aggregation():
    rep = EvalReport()
    for v in (0.1, 0.3):
        rep.add("sdpl", 0.7, {("all", "ndcg", 10): v, ("cold", "ndcg", 10): v / 2,
                              ("all", "users", 0): 5})
        rep.add("bpr", 0.7, {("all", "ndcg", 10): v / 2, ("cold", "ndcg", 10): v / 4})
    assert rep.mean("sdpl", 0.7, "all", "ndcg", 10) == pytest.approx(0.2)
    assert rep.std("sdpl", 0.7, "all", "ndcg", 10) == pytest.approx(np.std([0.1, 0.3], ddof=1))
    assert rep.cold_drop("sdpl", 0.7, "ndcg", 10) == pytest.approx(50.0)
    assert rep.improvement("sdpl", 0.7, "all", "ndcg", 10) == pytest.approx(100.0)
    lines = rep.records().splitlines()
    assert lines[0] == "model,split_ratio,slice,metric,k,mean,std"
    assert lines[1] == "bpr,0.7,all,ndcg,10,0.100000,0.070711"
    assert rep.models() == ["bpr", "sdpl"]
    assert "impr.%" in rep.table() and "D%" in rep.table("cold")
    assert rep.values("nope", 0.7, "all", "ndcg", 10) == []
    assert ("nope", 0.7, "all", "ndcg", 10) not in rep.runs
