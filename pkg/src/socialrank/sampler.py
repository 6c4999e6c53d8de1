"""Negative item sampling, with and without the friend/foe constraints."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

_logger = logging.getLogger(__name__)

SOCIAL = "social"
UNCONDITIONAL = "unconditional"


@dataclass
class SamplerConfig:
    negatives_per_positive: int = 5
    mode: str = SOCIAL
    seed: int = 0

    def __post_init__(self):
        if self.negatives_per_positive < 1:
            raise ValueError("negatives_per_positive must be >= 1")
        if self.mode not in (SOCIAL, UNCONDITIONAL):
            raise ValueError(f"unknown sampler mode {self.mode!r}")


def eligible_negatives(u, observed, graph):
    """Items observed by neither u nor any of u's friends and foes (sorted array)."""
    mask = np.ones(observed.n_items, dtype=bool)
    mask[observed.positives[u]] = False
    for v in graph.friends[u] + graph.foes[u]:
        mask[observed.positives[v]] = False
    return np.flatnonzero(mask)


def unobserved(u, observed):
    return observed.unobserved(u)


def draw_negatives(u, positives_count, cfg, pool, rng):
    """Draw ``min(positives_count * negatives_per_positive, len(pool))``
    distinct items uniformly from ``pool``.

    ``pool`` is the eligible set for social mode and the unobserved set for
    unconditional mode; the caller picks it.  An empty pool returns an empty
    array, which callers treat as "skip this user".
    """
    pool = np.asarray(pool)
    size = min(positives_count * cfg.negatives_per_positive, len(pool))
    if size == 0:
        return pool[:0]
    if size == len(pool):
        return rng.permutation(pool)
    return rng.choice(pool, size=size, replace=False)


class NegativePools:
    """Per-user negative pools cached for an epoch (or a whole training run).

    In social mode a user whose eligible set is empty falls back to the
    unconditional pool; ``fallback[u]`` records that.
    """

    def __init__(self, observed, graph, mode):
        self.mode = mode
        self.pools = []
        self.fallback = np.zeros(observed.n_users, dtype=bool)
        for u in range(observed.n_users):
            if mode == SOCIAL:
                pool = eligible_negatives(u, observed, graph)
                if len(pool) == 0:
                    self.fallback[u] = True
                    pool = observed.unobserved(u)
            else:
                pool = observed.unobserved(u)
            self.pools.append(pool)
        if self.fallback.any():
            _logger.info("%d users have no eligible social negatives; using unconditional pools",
                         int(self.fallback.sum()))

    def __getitem__(self, u):
        return self.pools[u]
