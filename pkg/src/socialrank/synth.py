"""Planted synthetic data with friend/foe structure.

Users and items belong to preference clusters.  Inside a cluster, users
are grouped into circles and every circle favours its own slice of the
cluster's items.  A user's interactions come mostly from their cluster
(popularity-weighted, with extra weight on the circle's slice) plus uniform
noise.  Friends are drawn mostly from the same circle and otherwise from
the same cluster, so they share item affinity.  Foes are drawn from other
clusters, so their items are ones the user tends not to like.  With a
single cluster, foes carry no anti-signal and the data serve as a
degenerate control.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .data import EXPLICIT, IMPLICIT, Dataset, SignedSocialGraph


@dataclass
class SynthConfig:
    n_users: int = 200
    n_items: int = 500
    n_clusters: int = 4
    density: float = 0.02
    avg_friends: float = 5.0
    avg_foes: float = 3.0
    purity: float = 0.8
    circle_size: int = 10
    circle_affinity: float = 0.6
    friend_circle_share: float = 0.8
    activity_sigma: float = 0.8
    popularity_exponent: float = 0.5
    kind: str = IMPLICIT
    seed: int = 0

    def __post_init__(self):
        if self.n_users < 2 or self.n_items < 2 or self.n_clusters < 1:
            raise ValueError("need at least 2 users, 2 items and 1 cluster")
        if not 0.0 < self.density <= 1.0:
            raise ValueError(f"density must lie in (0, 1], got {self.density}")
        for name in ("purity", "circle_affinity", "friend_circle_share"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.circle_size < 1:
            raise ValueError("circle_size must be >= 1")
        if self.n_clusters > min(self.n_users, self.n_items):
            raise ValueError("more clusters than users or items")
        if self.kind not in (EXPLICIT, IMPLICIT):
            raise ValueError(f"unknown feedback kind {self.kind!r}")

    def as_dict(self):
        return asdict(self)


@dataclass
class Planted:
    dataset: Dataset
    graph: SignedSocialGraph
    user_cluster: np.ndarray
    item_cluster: np.ndarray
    config: SynthConfig
    user_circle: np.ndarray = None


def generate(cfg):
    """Generate a planted dataset; identical output for identical configs."""
    rng = np.random.default_rng(cfg.seed)
    n, m, C = cfg.n_users, cfg.n_items, cfg.n_clusters
    item_cluster = rng.permutation(np.arange(m) % C)
    user_cluster = rng.permutation(np.arange(n) % C)

    # popularity inside each cluster: Zipf-like weights over a random item order
    pop = np.empty(m)
    for c in range(C):
        members = np.flatnonzero(item_cluster == c)
        ranks = rng.permutation(len(members)) + 1
        w = ranks.astype(float) ** -cfg.popularity_exponent
        pop[members] = w / w.sum()

    # circles: consecutive chunks of each cluster's users, each owning an
    # equal slice of the cluster's items
    circle = np.empty(n, dtype=np.int64)
    circle_items = []
    for c in range(C):
        members = np.flatnonzero(user_cluster == c)
        k = max(1, int(round(len(members) / cfg.circle_size)))
        items_c = rng.permutation(np.flatnonzero(item_cluster == c))
        for part_u, part_i in zip(np.array_split(members, k), np.array_split(items_c, k)):
            circle[part_u] = len(circle_items)
            circle_items.append(part_i)

    activity = rng.lognormal(0.0, cfg.activity_sigma, size=n)
    activity /= activity.mean()
    counts = np.clip(np.round(cfg.density * m * activity), 1, m).astype(int)

    users, items, values = [], [], []
    for u in range(n):
        own = item_cluster == user_cluster[u]
        in_circle = np.zeros(m, dtype=bool)
        in_circle[circle_items[circle[u]]] = True
        affinity = ((1.0 - cfg.circle_affinity) * np.where(own, pop, 0.0)
                    + cfg.circle_affinity * np.where(in_circle, pop, 0.0) / pop[in_circle].sum())
        p = (1.0 - cfg.purity) / m + cfg.purity * affinity
        chosen = np.sort(rng.choice(m, size=counts[u], replace=False, p=p / p.sum()))
        users.append(np.full(len(chosen), u))
        items.append(chosen)
        in_cluster = own[chosen]
        if cfg.kind == IMPLICIT:
            values.append(1 + rng.poisson(np.where(in_cluster, 2.0, 0.5)))
        else:
            liked = rng.integers(4, 6, size=len(chosen))
            disliked = rng.integers(1, 4, size=len(chosen))
            values.append(np.where(in_cluster, liked, disliked))
    ds = Dataset(n, m, np.concatenate(users), np.concatenate(items),
                 np.concatenate(values).astype(float), cfg.kind)

    friends, foes = [], []
    for u in range(n):
        not_me = np.arange(n) != u
        same = np.flatnonzero((user_cluster == user_cluster[u]) & not_me)
        mates = np.flatnonzero((circle == circle[u]) & not_me)
        other = np.flatnonzero(user_cluster != user_cluster[u]) if C > 1 else same
        k = rng.poisson(cfg.avg_friends)
        k_circle = rng.binomial(k, cfg.friend_circle_share)
        f = _choose(rng, mates, k_circle)
        f = np.union1d(f, _choose(rng, np.setdiff1d(same, f), k - len(f)))
        rest = np.setdiff1d(other, f)
        b = _choose(rng, rest, rng.poisson(cfg.avg_foes))
        friends.append(f.tolist())
        foes.append(b.tolist())
    graph = SignedSocialGraph(n, tuple(friends), tuple(foes))
    return Planted(ds, graph, user_cluster, item_cluster, cfg, circle)


def _choose(rng, pool, k):
    k = min(int(k), len(pool))
    if k == 0:
        return np.array([], dtype=np.int64)
    return np.sort(rng.choice(pool, size=k, replace=False))
