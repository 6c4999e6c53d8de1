import numpy as np
import pytest
import scipy.sparse as sp

from socialrank.data import Dataset, Split
from socialrank.mf import (
    EmbeddingTable,
    MFConfig,
    factorize,
    factorize_explicit,
    factorize_implicit,
    interaction_frequency,
    nnmf,
)


def dense_dataset(X, kind):
    users, items = np.nonzero(np.ones_like(X))
    return Dataset(X.shape[0], X.shape[1], users, items, X[users, items], kind)


def rmse(ds, emb):
    pred = (emb.U[ds.users] * emb.V[ds.items]).sum(axis=1)
    return float(np.sqrt(((pred - ds.values) ** 2).mean()))


def test_rank_one_recovered():
    rng = np.random.default_rng(0)
    u, v = rng.uniform(1, 2, 6), rng.uniform(1, 2, 5)
    ds = dense_dataset(np.outer(u, v), "explicit")
    emb = factorize_explicit(ds, MFConfig(d=1, max_iters=2000, tol=1e-12, reg=0.0))
    assert rmse(ds, emb) < 1e-3
    assert np.all(emb.U >= 0) and np.all(emb.V >= 0)


def test_all_zero_matrix():
    X = sp.coo_matrix((np.zeros(9), (np.repeat(np.arange(3), 3), np.tile(np.arange(3), 3))),
                      shape=(3, 3))
    cfg = MFConfig(d=2, max_iters=500, reg=0.1)
    U, V, history, _ = nnmf(X, cfg)
    assert np.abs(U).max() < 1e-3 and np.abs(V).max() < 1e-3
    assert history[-1] == pytest.approx(0.1 * ((U**2).sum() + (V**2).sum()), abs=1e-9)


def test_capacity_monotone():
    rng = np.random.default_rng(1)
    ds = dense_dataset(rng.uniform(1, 5, size=(4, 4)), "explicit")
    small = factorize_explicit(ds, MFConfig(d=1, max_iters=3000, tol=1e-14, reg=0.0))
    big = factorize_explicit(ds, MFConfig(d=4, max_iters=3000, tol=1e-14, reg=0.0))
    assert rmse(ds, big) <= rmse(ds, small)


@pytest.mark.parametrize("kind", ["explicit", "implicit"])
def test_objective_non_increasing(kind):
    rng = np.random.default_rng(2)
    mask = rng.random((12, 15)) < 0.3
    users, items = np.nonzero(mask)
    vals = rng.integers(1, 6, len(users)).astype(float)
    ds = Dataset(12, 15, users, items, vals, kind)
    emb = factorize(ds, MFConfig(d=4, max_iters=60, tol=0.0))
    h = np.array(emb.objective)
    assert np.all(np.diff(h) <= 1e-9 * np.maximum(1.0, h[:-1]))
    assert np.all(np.isfinite(emb.U)) and np.all(np.isfinite(emb.V))
    if kind == "explicit":
        assert np.all(emb.U >= 0) and np.all(emb.V >= 0)
    assert not emb.converged


def test_single_cell_implicit():
    ds = Dataset(1, 1, [0], [0], [1.0], "implicit")
    emb = factorize_implicit(ds, MFConfig(d=1, max_iters=200))
    assert float(emb.U[0] @ emb.V[0]) > 0.5


def test_identical_rows_align():
    rng = np.random.default_rng(3)
    mask = rng.random((6, 20)) < 0.3
    mask[1] = mask[0]
    users, items = np.nonzero(mask)
    ds = Dataset(6, 20, users, items, np.ones(len(users)), "implicit")
    emb = factorize_implicit(ds, MFConfig(d=4, max_iters=100))
    a, b = emb.U[0], emb.U[1]
    assert a @ b / np.linalg.norm(a) / np.linalg.norm(b) > 0.99


def test_kind_guard():
    ds = Dataset(1, 1, [0], [0], [1.0], "implicit")
    with pytest.raises(ValueError):
        factorize_explicit(ds, MFConfig(d=1))


def test_determinism_and_persistence(tmp_path):
    ds = Dataset(3, 4, [0, 1, 2, 2], [0, 1, 2, 3], [5, 4, 3, 1], "explicit")
    a = factorize(ds, MFConfig(d=2, max_iters=20, seed=4))
    b = factorize(ds, MFConfig(d=2, max_iters=20, seed=4))
    assert np.array_equal(a.U, b.U) and np.array_equal(a.V, b.V)
    a.save(tmp_path / "e.npz")
    c = EmbeddingTable.load(tmp_path / "e.npz")
    assert np.array_equal(c.U, a.U) and c.mode == "explicit" and c.objective == a.objective


def test_unseen_rows_get_mean_embedding():
    ds = Dataset(3, 3, [0, 1, 2], [0, 1, 2], [5.0, 4.0, 3.0], "explicit")
    split = Split(np.array([True, True, False]), 0.67, 0)
    emb = factorize_explicit(ds, MFConfig(d=2, max_iters=30), split)
    assert np.allclose(emb.U[2], emb.U[:2].mean(axis=0))
    assert np.allclose(emb.V[2], emb.V[:2].mean(axis=0))


def test_interaction_frequency():
    ds = Dataset(3, 4, [0, 0, 1, 1, 1, 1], [0, 1, 0, 1, 2, 3], [1] * 6, "implicit")
    fu, fi = interaction_frequency(ds, Split(np.ones(6, dtype=bool), 0.5, 0))
    assert fu.tolist() == [0.5, 1.0, 0.0]
    assert fi.tolist() == [1.0, 1.0, 0.5, 0.5]
