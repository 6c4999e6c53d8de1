"""Top-k evaluation: relevance labels, Recall@k, NDCG@k and report tables."""
from __future__ import annotations

import io
import math
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .data import EXPLICIT, observed_sets

METRICS = ("recall", "ndcg")
SLICES = ("all", "cold")


class EvaluationError(ValueError):
    pass


@dataclass
class EvalConfig:
    ks: tuple = (10, 20)
    repeats: int = 5
    cold_start_threshold: int = 10
    chunk: int = 1024

    def __post_init__(self):
        if any(k < 1 for k in self.ks):
            raise ValueError("k must be >= 1")
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")


# ----------------------------------------------------------------------
# relevance


def _train_means(ds, split):
    mask = split.train_mask
    sums = np.bincount(ds.users[mask], weights=ds.values[mask], minlength=ds.n_users)
    counts = np.bincount(ds.users[mask], minlength=ds.n_users)
    global_mean = ds.values[mask].mean() if mask.any() else 0.0
    with np.errstate(invalid="ignore", divide="ignore"):
        means = np.where(counts > 0, sums / np.maximum(counts, 1), global_mean)
    return means


def relevant_items(ds, split):
    """Relevant test items for every user, as a list of sorted arrays.

    Explicit feedback: a test item is relevant when its rating is strictly
    above the user's mean *training* rating (global training mean for users
    without training ratings).  Implicit feedback: every test item is.
    """
    test = split.test_mask
    users, items, values = ds.users[test], ds.items[test], ds.values[test]
    if ds.feedback_kind == EXPLICIT:
        keep = values > _train_means(ds, split)[users]
        users, items = users[keep], items[keep]
    out = [[] for _ in range(ds.n_users)]
    for u, i in zip(users.tolist(), items.tolist()):
        out[u].append(i)
    return [np.array(sorted(r), dtype=np.int64) for r in out]


def relevance_labels(ds, split, u):
    return set(relevant_items(ds, split)[u].tolist())


# ----------------------------------------------------------------------
# metrics


def recall_at_k(ranked, relevant, k):
    """Fraction of the relevant items that appear in the first k ranks."""
    relevant = set(relevant)
    if not relevant:
        raise EvaluationError("recall is undefined for an empty relevant set")
    hits = sum(1 for item in list(ranked)[:k] if item in relevant)
    return hits / len(relevant)


def dcg_at_k(gains, k):
    gains = np.asarray(gains, dtype=np.float64)[:k]
    return float(((2.0**gains - 1.0) / np.log2(np.arange(2, len(gains) + 2))).sum())


def ndcg_at_k(ranked, relevant, k):
    """Binary-relevance NDCG@k; the ideal list is truncated at k as well."""
    relevant = set(relevant)
    if not relevant:
        raise EvaluationError("NDCG is undefined for an empty relevant set")
    gains = [1.0 if item in relevant else 0.0 for item in list(ranked)[:k]]
    ideal = dcg_at_k(np.ones(min(k, len(relevant))), k)
    return dcg_at_k(gains, k) / ideal


# ----------------------------------------------------------------------
# model evaluation


def rank_candidates(scorer, users, exclude, n_items, depth, chunk=1024):
    """Top-``depth`` items per user, excluding each user's ``exclude`` items.

    Ordering is by descending logit, ties broken by ascending item id.
    """
    out = {}
    items = np.arange(n_items)
    for start in range(0, len(users), chunk):
        block = users[start: start + chunk]
        S = np.asarray(scorer.user_item_logits(block, items), dtype=np.float64)
        for row, u in enumerate(block):
            keep = np.ones(n_items, dtype=bool)
            keep[exclude[u]] = False
            cand = items[keep]
            s = S[row][keep]
            out[int(u)] = cand[np.lexsort((cand, -s))][:depth]
    return out


def evaluate_model(scorer, ds, split, cfg=None, observed=None):
    """Recall@k and NDCG@k averaged over users with at least one relevant test item.

    Returns ``{(slice, metric, k): value}`` for the ``all`` and ``cold``
    slices (cold = fewer than ``cold_start_threshold`` training
    interactions), plus ``("all"|"cold", "users", 0)`` user counts.
    """
    cfg = cfg or EvalConfig()
    relevant = relevant_items(ds, split)
    train_counts = np.bincount(ds.users[split.train_mask], minlength=ds.n_users)
    if observed is None:
        observed = observed_sets(split, ds)
    users = np.array([u for u in range(ds.n_users) if len(relevant[u])], dtype=np.int64)
    if len(users) == 0:
        raise EvaluationError("no user has a relevant test item")
    kmax = max(cfg.ks)
    ranked = rank_candidates(scorer, users, observed.positives, ds.n_items, kmax, cfg.chunk)
    per_user = defaultdict(list)
    for u in users.tolist():
        rel = relevant[u]
        slices = ("all", "cold") if train_counts[u] < cfg.cold_start_threshold else ("all",)
        for k in cfg.ks:
            r = recall_at_k(ranked[u], rel.tolist(), k)
            n = ndcg_at_k(ranked[u], rel.tolist(), k)
            for sl in slices:
                per_user[(sl, "recall", k)].append(r)
                per_user[(sl, "ndcg", k)].append(n)
    result = {key: float(np.mean(v)) for key, v in per_user.items()}
    result[("all", "users", 0)] = len(users)
    result[("cold", "users", 0)] = int((train_counts[users] < cfg.cold_start_threshold).sum())
    return result


# ----------------------------------------------------------------------
# reports


@dataclass
class EvalReport:
    """Per-run metric values grouped by (model, ratio, slice, metric, k)."""

    runs: dict = field(default_factory=lambda: defaultdict(list))

    def add(self, model, ratio, result):
        for (sl, metric, k), value in result.items():
            if metric in METRICS:
                self.runs[(model, float(ratio), sl, metric, int(k))].append(value)

    def values(self, model, ratio, sl, metric, k):
        return list(self.runs.get((model, float(ratio), sl, metric, int(k)), []))

    def mean(self, *key):
        return float(np.mean(self.values(*key)))

    def std(self, *key):
        v = self.values(*key)
        return float(np.std(v, ddof=1)) if len(v) > 1 else 0.0

    def models(self):
        return sorted({k[0] for k in self.runs}, key=_model_order)

    def ratios(self):
        return sorted({k[1] for k in self.runs})

    def cold_drop(self, model, ratio, metric, k):
        """Relative drop (%) of the cold-start slice versus all users."""
        full = self.mean(model, ratio, "all", metric, k)
        cold = self.mean(model, ratio, "cold", metric, k)
        return 100.0 * (full - cold) / full if full > 0 else math.nan

    def improvement(self, model, ratio, sl, metric, k):
        """Relative improvement (%) of ``model`` over the best other model."""
        others = [self.mean(m, ratio, sl, metric, k) for m in self.models()
                  if m != model and self.values(m, ratio, sl, metric, k)]
        if not others or max(others) <= 0:
            return math.nan
        best = max(others)
        return 100.0 * (self.mean(model, ratio, sl, metric, k) - best) / best

    def records(self):
        """Machine-readable lines ``model,split_ratio,slice,metric,k,mean,std``."""
        lines = ["model,split_ratio,slice,metric,k,mean,std"]
        for key in sorted(self.runs, key=lambda t: (_model_order(t[0]),) + t[1:]):
            lines.append(f"{key[0]},{key[1]:g},{key[2]},{key[3]},{key[4]},"
                         f"{self.mean(*key):.6f},{self.std(*key):.6f}")
        return "\n".join(lines) + "\n"

    def table(self, sl="all", best="sdpl"):
        """Human-readable table: rows are models, columns ratio x metric@k."""
        cols = sorted({(r, m, k) for (_, r, s, m, k) in self.runs if s == sl})
        buf = io.StringIO()
        head = ["model"] + [f"{m[0].upper()}@{k} ({int(r * 100)}%)" if m == "recall"
                            else f"NDCG@{k} ({int(r * 100)}%)" for r, m, k in cols]
        widths = [max(8, len(h)) for h in head]
        buf.write("  ".join(h.ljust(w) for h, w in zip(head, widths)) + "\n")
        for model in self.models():
            cells = [model]
            for r, m, k in cols:
                v = self.values(model, r, sl, m, k)
                cells.append(f"{np.mean(v):.4f}" if v else "-")
            buf.write("  ".join(c.ljust(w) for c, w in zip(cells, widths)) + "\n")
        if best in self.models() and len(self.models()) > 1:
            cells = ["impr.%"]
            for r, m, k in cols:
                cells.append(f"{self.improvement(best, r, sl, m, k):+.2f}")
            buf.write("  ".join(c.ljust(w) for c, w in zip(cells, widths)) + "\n")
        if sl == "cold":
            for model in self.models():
                drops = [f"{self.cold_drop(model, r, m, k):.2f}" for r, m, k in cols]
                buf.write("  ".join(c.ljust(w) for c, w in zip([f"{model} D%"] + drops, widths)) + "\n")
        return buf.getvalue()


def _model_order(name):
    order = {"bpr": 0, "dpl": 1, "spl": 2, "sdpl": 3}
    return (order.get(name, 99), name)
