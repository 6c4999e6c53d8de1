"""Interaction data, signed social graphs and train/test splits.

All ids used inside the package are dense, 0-based integers.  The loaders
keep the external ids around so results can be written back in the
original id space.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

_logger = logging.getLogger(__name__)

EXPLICIT = "explicit"
IMPLICIT = "implicit"
RATING_SCALE = (1.0, 5.0)


class DataError(ValueError):
    """Raised for malformed or inconsistent input data."""


class ParseError(DataError):
    def __init__(self, path, lineno, line):
        self.path = str(path)
        self.lineno = lineno
        super().__init__(f"{path}:{lineno}: cannot parse line {line!r}")


class GraphConflictError(DataError):
    def __init__(self, u, v):
        self.pair = (u, v)
        super().__init__(f"pair ({u}, {v}) appears in both trust and distrust edges")


@dataclass(frozen=True, eq=False)
class Dataset:
    """Sparse user-item interactions in coordinate form.

    ``users``, ``items`` and ``values`` are parallel arrays, one entry per
    interaction record, sorted by (user, item).
    """

    n_users: int
    n_items: int
    users: np.ndarray
    items: np.ndarray
    values: np.ndarray
    feedback_kind: str = EXPLICIT
    user_ids: tuple = ()
    item_ids: tuple = ()

    def __post_init__(self):
        users = np.asarray(self.users, dtype=np.int64)
        items = np.asarray(self.items, dtype=np.int64)
        values = np.asarray(self.values, dtype=np.float64)
        if not (len(users) == len(items) == len(values)):
            raise DataError("users, items and values must have equal length")
        if self.feedback_kind not in (EXPLICIT, IMPLICIT):
            raise DataError(f"unknown feedback kind {self.feedback_kind!r}")
        if len(users):
            if users.min() < 0 or users.max() >= self.n_users:
                raise DataError("user id out of range")
            if items.min() < 0 or items.max() >= self.n_items:
                raise DataError("item id out of range")
        _check_values(values, self.feedback_kind)
        order = np.lexsort((items, users))
        users, items, values = users[order], items[order], values[order]
        if len(users) > 1:
            dup = (np.diff(users) == 0) & (np.diff(items) == 0)
            if dup.any():
                k = int(np.flatnonzero(dup)[0])
                raise DataError(f"duplicate interaction ({users[k]}, {items[k]})")
        for name, arr in (("users", users), ("items", items), ("values", values)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not self.user_ids:
            object.__setattr__(self, "user_ids", tuple(str(u) for u in range(self.n_users)))
        if not self.item_ids:
            object.__setattr__(self, "item_ids", tuple(str(i) for i in range(self.n_items)))

    def __len__(self):
        return len(self.users)

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.n_users == other.n_users
            and self.n_items == other.n_items
            and self.feedback_kind == other.feedback_kind
            and np.array_equal(self.users, other.users)
            and np.array_equal(self.items, other.items)
            and np.array_equal(self.values, other.values)
            and self.user_ids == other.user_ids
            and self.item_ids == other.item_ids
        )

    __hash__ = None

    @property
    def keys(self):
        """Interaction keys as an (n, 2) array of (user, item)."""
        return np.column_stack([self.users, self.items])

    def user_index(self, external_id):
        try:
            return self.user_ids.index(str(external_id))
        except ValueError:
            raise KeyError(f"unknown user {external_id!r}") from None

    def subset(self, mask):
        """Dataset restricted to the records selected by ``mask``."""
        return Dataset(
            self.n_users, self.n_items,
            self.users[mask], self.items[mask], self.values[mask],
            self.feedback_kind, self.user_ids, self.item_ids,
        )


def _check_values(values, kind):
    if not np.all(np.isfinite(values)):
        raise DataError("interaction values must be finite")
    if kind == EXPLICIT:
        lo, hi = RATING_SCALE
        bad = (values < lo) | (values > hi)
    else:
        bad = (values < 0) | (values != np.round(values))
    if bad.any():
        k = int(np.flatnonzero(bad)[0])
        raise DataError(f"value {values[k]!r} outside the {kind} scale")


@dataclass(frozen=True)
class SignedSocialGraph:
    """Per-user friend and foe lists (sorted internal ids)."""

    n_users: int
    friends: tuple
    foes: tuple

    def __post_init__(self):
        if len(self.friends) != self.n_users or len(self.foes) != self.n_users:
            raise DataError("friends/foes must have one entry per user")
        friends = tuple(tuple(sorted(set(int(v) for v in f))) for f in self.friends)
        foes = tuple(tuple(sorted(set(int(v) for v in f))) for f in self.foes)
        for u in range(self.n_users):
            for v in friends[u] + foes[u]:
                if not 0 <= v < self.n_users:
                    raise DataError(f"user id {v} out of range")
                if v == u:
                    raise DataError(f"self edge on user {u}")
            both = set(friends[u]) & set(foes[u])
            if both:
                raise GraphConflictError(u, min(both))
        object.__setattr__(self, "friends", friends)
        object.__setattr__(self, "foes", foes)

    @classmethod
    def empty(cls, n_users):
        return cls(n_users, ((),) * n_users, ((),) * n_users)

    @classmethod
    def from_edges(cls, n_users, trust, distrust):
        friends = [set() for _ in range(n_users)]
        foes = [set() for _ in range(n_users)]
        for u, v in trust:
            friends[u].add(v)
        for u, v in distrust:
            foes[u].add(v)
        return cls(n_users, tuple(friends), tuple(foes))

    @property
    def n_edges(self):
        return sum(map(len, self.friends)), sum(map(len, self.foes))

    def is_empty(self):
        return self.n_edges == (0, 0)


@dataclass(frozen=True)
class Split:
    """Boolean train mask over the records of a dataset."""

    train_mask: np.ndarray
    ratio: float
    seed: int

    def __post_init__(self):
        mask = np.asarray(self.train_mask, dtype=bool).copy()
        mask.setflags(write=False)
        object.__setattr__(self, "train_mask", mask)

    @property
    def test_mask(self):
        return ~self.train_mask

    def train(self, ds):
        return ds.subset(self.train_mask)

    def test(self, ds):
        return ds.subset(self.test_mask)

    def train_keys(self, ds):
        return set(zip(ds.users[self.train_mask].tolist(), ds.items[self.train_mask].tolist()))

    def test_keys(self, ds):
        return set(zip(ds.users[self.test_mask].tolist(), ds.items[self.test_mask].tolist()))


@dataclass(frozen=True)
class ObservedSets:
    """Observed training items per user.  The unobserved set is implicit."""

    n_items: int
    positives: tuple  # per-user sorted int64 arrays
    _sets: tuple = field(repr=False, compare=False, default=())

    def __post_init__(self):
        if not self._sets:
            object.__setattr__(self, "_sets", tuple(frozenset(p.tolist()) for p in self.positives))

    @property
    def n_users(self):
        return len(self.positives)

    def observed(self, u):
        return self._sets[u]

    def unobserved(self, u):
        """Sorted array of items u has not interacted with in training."""
        mask = np.ones(self.n_items, dtype=bool)
        mask[self.positives[u]] = False
        return np.flatnonzero(mask)

    def counts(self):
        return np.array([len(p) for p in self.positives], dtype=np.int64)


# ----------------------------------------------------------------------
# ingestion


def _read_rows(path, ncols):
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    rows = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.rstrip("\r\n").split("\t")
            if len(parts) != ncols or not all(p.strip() for p in parts):
                raise ParseError(path, lineno, line.rstrip("\n"))
            rows.append((lineno, [p.strip() for p in parts]))
    return rows


def _sort_key(s):
    # numeric ids sort numerically, everything else lexically after them
    try:
        return (0, int(s), s)
    except ValueError:
        return (1, 0, s)


def ingest_interactions(path, kind=EXPLICIT):
    """Load a ``user<TAB>item<TAB>value`` file into a :class:`Dataset`.

    External ids are re-indexed densely in sorted order.  A record that
    cannot be parsed raises :class:`ParseError` with its line number.
    """
    rows = _read_rows(path, 3)
    if not rows:
        raise DataError(f"{path}: no interactions")
    triples = []
    for lineno, (u, i, v) in rows:
        try:
            value = float(v)
        except ValueError:
            raise ParseError(path, lineno, "\t".join((u, i, v))) from None
        triples.append((u, i, value))
    user_ids = tuple(sorted({t[0] for t in triples}, key=_sort_key))
    item_ids = tuple(sorted({t[1] for t in triples}, key=_sort_key))
    umap = {u: k for k, u in enumerate(user_ids)}
    imap = {i: k for k, i in enumerate(item_ids)}
    users = np.array([umap[t[0]] for t in triples], dtype=np.int64)
    items = np.array([imap[t[1]] for t in triples], dtype=np.int64)
    values = np.array([t[2] for t in triples])
    return Dataset(len(user_ids), len(item_ids), users, items, values, kind, user_ids, item_ids)


def ingest_signed_graph(trust_path, distrust_path, n_users, user_ids=None):
    """Load trust and distrust edge files into a :class:`SignedSocialGraph`.

    Edge endpoints are external ids mapped through ``user_ids`` (identity
    mapping over ``range(n_users)`` when omitted).  Edges naming unknown
    users are dropped with a warning, duplicates are merged, and a pair that
    occurs in both files raises :class:`GraphConflictError`.
    """
    if user_ids is None:
        user_ids = tuple(str(u) for u in range(n_users))
    umap = {u: k for k, u in enumerate(user_ids)}
    edges = []
    dropped = 0
    for path in (trust_path, distrust_path):
        kept = set()
        if path is not None:
            for lineno, (a, b) in _read_rows(path, 2):
                if a not in umap or b not in umap:
                    dropped += 1
                    continue
                if a == b:
                    dropped += 1
                    continue
                kept.add((umap[a], umap[b]))
        edges.append(kept)
    if dropped:
        _logger.warning("dropped %d edges referencing unknown users or self loops", dropped)
    both = edges[0] & edges[1]
    if both:
        u, v = min(both)
        raise GraphConflictError(user_ids[u], user_ids[v])
    graph = SignedSocialGraph.from_edges(n_users, sorted(edges[0]), sorted(edges[1]))
    object.__setattr__(graph, "dropped_edges", dropped)
    return graph


def write_interactions(ds, path):
    with Path(path).open("w", encoding="utf-8") as fh:
        for u, i, v in zip(ds.users, ds.items, ds.values):
            fh.write(f"{ds.user_ids[u]}\t{ds.item_ids[i]}\t{_fmt(v)}\n")


def write_edges(graph, trust_path, distrust_path, user_ids=None):
    if user_ids is None:
        user_ids = tuple(str(u) for u in range(graph.n_users))
    for path, lists in ((trust_path, graph.friends), (distrust_path, graph.foes)):
        with Path(path).open("w", encoding="utf-8") as fh:
            for u, vs in enumerate(lists):
                for v in vs:
                    fh.write(f"{user_ids[u]}\t{user_ids[v]}\n")


def _fmt(v):
    v = float(v)
    return str(int(v)) if v.is_integer() else repr(v)


# ----------------------------------------------------------------------
# splits


def split_ratings(ds, ratio, seed, stratified=False):
    """Uniform random train/test split over interaction records.

    Exactly ``round(ratio * len(ds))`` records go to training.  With
    ``stratified=True`` the ratio is applied per user instead.
    """
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"split ratio must lie in (0, 1), got {ratio}")
    rng = np.random.default_rng(seed)
    n = len(ds)
    mask = np.zeros(n, dtype=bool)
    if not stratified:
        mask[rng.permutation(n)[: int(round(ratio * n))]] = True
    else:
        bounds = np.flatnonzero(np.diff(ds.users)) + 1
        for rows in np.split(np.arange(n), bounds):
            if len(rows):
                mask[rng.permutation(rows)[: int(round(ratio * len(rows)))]] = True
    return Split(mask, float(ratio), int(seed))


def observed_sets(split, ds):
    """Per-user observed (training) item sets."""
    users = ds.users[split.train_mask]
    items = ds.items[split.train_mask]
    bounds = np.searchsorted(users, np.arange(ds.n_users + 1))
    positives = tuple(
        np.array(items[bounds[u]: bounds[u + 1]], dtype=np.int64) for u in range(ds.n_users)
    )
    return ObservedSets(ds.n_items, positives)


# ----------------------------------------------------------------------
# line-oriented cache
#
#   # socialrank-dataset 1
#   # n_users = 3
#   # ...
#   # user_ids = a<TAB>b<TAB>c
#   u<TAB>i<TAB>value<TAB>train-flag
#
# The train-flag column is 1/0 when a split is stored and "-" otherwise.

_CACHE_MAGIC = "# socialrank-dataset 1"


def save_cache(path, ds, split=None):
    lines = [
        _CACHE_MAGIC,
        f"# n_users = {ds.n_users}",
        f"# n_items = {ds.n_items}",
        f"# feedback_kind = {ds.feedback_kind}",
        f"# split_ratio = {split.ratio if split else '-'}",
        f"# split_seed = {split.seed if split else '-'}",
        "# user_ids = " + "\t".join(ds.user_ids),
        "# item_ids = " + "\t".join(ds.item_ids),
    ]
    flags = (["1" if f else "0" for f in split.train_mask] if split else ["-"] * len(ds))
    for u, i, v, f in zip(ds.users, ds.items, ds.values, flags):
        lines.append(f"{u}\t{i}\t{float(v)!r}\t{f}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_cache(path):
    """Read a cache written by :func:`save_cache`; returns ``(dataset, split_or_None)``."""
    text = Path(path).read_text(encoding="utf-8").splitlines()
    if not text or text[0] != _CACHE_MAGIC:
        raise DataError(f"{path}: not a dataset cache")
    header = {}
    body = []
    for line in text[1:]:
        if line.startswith("# "):
            key, _, value = line[2:].partition(" = ")
            header[key] = value
        elif line:
            body.append(line.split("\t"))
    users = np.array([int(r[0]) for r in body], dtype=np.int64)
    items = np.array([int(r[1]) for r in body], dtype=np.int64)
    values = np.array([float(r[2]) for r in body])
    ds = Dataset(
        int(header["n_users"]), int(header["n_items"]), users, items, values,
        header["feedback_kind"],
        tuple(header["user_ids"].split("\t")) if header["user_ids"] else (),
        tuple(header["item_ids"].split("\t")) if header["item_ids"] else (),
    )
    split = None
    if header["split_ratio"] != "-":
        # rows are stored in dataset order, so flags line up with ds records
        mask = np.array([r[3] == "1" for r in body])
        split = Split(mask, float(header["split_ratio"]), int(header["split_seed"]))
    return ds, split
