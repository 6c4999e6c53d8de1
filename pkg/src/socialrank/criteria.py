"""The six friend/foe-aware pairwise ranking cases.

For a user u, a friend a and a foe b, each case is a Cartesian product of
two item sets (case 5 additionally drops the diagonal), so relations can be
enumerated exactly or sampled without materializing the product.
"""
from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass
from itertools import accumulate

import numpy as np

N_CASES = 6


class ContractError(ValueError):
    """A criterion context violates the negative-sample constraints."""


@dataclass(frozen=True)
class PartialRelation:
    u: int
    i: int
    j: int
    case: int
    friend: int | None = None
    foe: int | None = None


@dataclass(frozen=True)
class CriterionContext:
    """Item sets that define the six cases for one user and training step.

    ``friend_items`` / ``foe_items`` are ``None`` when the user has no
    friend / foe for this step.
    """

    u: int
    user_items: frozenset
    negatives: frozenset
    friend_items: frozenset | None = None
    foe_items: frozenset | None = None
    friend: int | None = None
    foe: int | None = None

    @classmethod
    def build(cls, u, user_items, negatives, friend_items=None, foe_items=None,
              friend=None, foe=None):
        f = None if friend_items is None else frozenset(int(x) for x in friend_items)
        b = None if foe_items is None else frozenset(int(x) for x in foe_items)
        return cls(int(u), frozenset(int(x) for x in user_items),
                   frozenset(int(x) for x in negatives), f, b, friend, foe)

    def validate(self):
        if self.negatives & self.user_items:
            raise ContractError(f"user {self.u}: sampled negatives overlap observed items")
        if self.friend_items is not None and self.negatives & self.friend_items:
            raise ContractError(f"user {self.u}: sampled negatives overlap friend items")
        if self.foe_items is not None and self.negatives & self.foe_items:
            raise ContractError(f"user {self.u}: sampled negatives overlap foe items")


def case_factors(ctx):
    """The (higher, lower) item sets of every case as sorted lists.

    Index ``r - 1`` holds case ``r``.  A missing friend empties cases 2-5, a
    missing foe empties cases 5-6 and makes the ``j not in I+_b`` guard of
    cases 1 and 4 vacuous.
    """
    Iu, S = ctx.user_items, ctx.negatives
    Ia = ctx.friend_items if ctx.friend_items is not None else frozenset()
    Ib = ctx.foe_items if ctx.foe_items is not None else frozenset()
    S_nofoe = S - Ib
    only_friend = Ia - Iu
    factors = [
        (Iu, S_nofoe),
        (Iu, only_friend),
        (Iu & Ia, only_friend),
        (Ia, S_nofoe),
        (Ia, Ib),
        (S, Ib),
    ]
    return [(sorted(hi), sorted(lo)) for hi, lo in factors]


def _case5_size(hi, lo):
    return len(hi) * len(lo) - len(set(hi) & set(lo))


def case_sizes(factors):
    sizes = [len(hi) * len(lo) for hi, lo in factors]
    sizes[4] = _case5_size(*factors[4])
    return sizes


def enumerate_relations(ctx):
    """All partial relations of the six cases, in case order then (i, j) order."""
    ctx.validate()
    out = []
    for r, (hi, lo) in enumerate(case_factors(ctx), start=1):
        for i in hi:
            for j in lo:
                if i != j:
                    out.append(PartialRelation(ctx.u, i, j, r, ctx.friend, ctx.foe))
    return out


def relation_holds(rel, ctx):
    """Re-check a relation against the membership predicate of its case."""
    i, j = rel.i, rel.j
    Iu, S = ctx.user_items, ctx.negatives
    has_a, has_b = ctx.friend_items is not None, ctx.foe_items is not None
    Ia = ctx.friend_items or frozenset()
    Ib = ctx.foe_items or frozenset()
    if i == j:
        return False
    return {
        1: i in Iu and j in S and j not in Ib,
        2: has_a and i in Iu and j in Ia and j not in Iu,
        3: has_a and i in Iu and i in Ia and j in Ia and j not in Iu,
        4: has_a and i in Ia and j in S and j not in Ib,
        5: has_a and has_b and i in Ia and j in Ib,
        6: has_b and i in S and j in Ib,
    }[rel.case]


def sample_relations(ctx, case_weights, rng, size, factors=None):
    """Draw ``size`` relations independently: each picks a case proportional
    to ``case_weights`` over the non-empty cases, then a uniform member.

    Returns ``(cases, i, j)`` integer arrays (cases are 1-based), or ``None``
    when every weighted case is empty, which callers treat as "skip".
    """
    if factors is None:
        factors = case_factors(ctx)
    sizes = case_sizes(factors)
    w = [float(wt) if sz > 0 else 0.0 for wt, sz in zip(case_weights, sizes)]
    total = sum(w)
    if total <= 0:
        return None
    cum = list(accumulate(w))
    cases = np.empty(size, dtype=np.int64)
    i = np.empty(size, dtype=np.int64)
    j = np.empty(size, dtype=np.int64)
    # one uniform triple per relation: case, position in the higher set, in the lower set
    draws = rng.random((size, 3))
    for n, (x, y, z) in enumerate(draws.tolist()):
        r = min(bisect_right(cum, x * total), N_CASES - 1)
        while w[r] == 0.0:  # guard against float edge at the top of the cdf
            r -= 1
        hi, lo = factors[r]
        a, b = hi[int(y * len(hi))], lo[int(z * len(lo))]
        # only case 5 can produce i == j; redraw those (rejection keeps uniformity)
        while a == b:
            y, z = rng.random(2).tolist()
            a, b = hi[int(y * len(hi))], lo[int(z * len(lo))]
        cases[n], i[n], j[n] = r + 1, a, b
    return cases, i, j


def sample_relation(ctx, case_weights, rng, factors=None):
    """Draw one relation (see :func:`sample_relations`); ``None`` means skip."""
    out = sample_relations(ctx, case_weights, rng, 1, factors)
    if out is None:
        return None
    cases, i, j = out
    return PartialRelation(ctx.u, int(i[0]), int(j[0]), int(cases[0]), ctx.friend, ctx.foe)
