"""Matrix factorization used to produce the input embeddings.

Explicit ratings go through non-negative MF with multiplicative updates
over the observed entries; implicit counts go through confidence-weighted
ALS.  Both return an :class:`EmbeddingTable` and record the objective
after every iteration.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .data import EXPLICIT, IMPLICIT

_logger = logging.getLogger(__name__)

_EPS = 1e-12


@dataclass
class MFConfig:
    d: int = 256
    max_iters: int = 200
    tol: float = 1e-6
    alpha: float = 40.0
    reg: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("embedding width d must be >= 1")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


@dataclass
class EmbeddingTable:
    U: np.ndarray
    V: np.ndarray
    mode: str = EXPLICIT
    seed: int = 0
    converged: bool = True
    objective: list = field(default_factory=list)

    @property
    def d(self):
        return self.U.shape[1]

    def save(self, path):
        header = {"n": self.U.shape[0], "m": self.V.shape[0], "d": self.d,
                  "mode": self.mode, "seed": self.seed, "converged": self.converged}
        np.savez(path, header=json.dumps(header), U=self.U, V=self.V,
                 objective=np.asarray(self.objective, dtype=np.float64))

    @classmethod
    def load(cls, path):
        with np.load(path) as z:
            header = json.loads(str(z["header"]))
            return cls(z["U"].copy(), z["V"].copy(), header["mode"], header["seed"],
                       header["converged"], z["objective"].tolist())


def _train_matrix(ds, split):
    mask = split.train_mask if split is not None else np.ones(len(ds), dtype=bool)
    return sp.csr_matrix(
        (ds.values[mask], (ds.users[mask], ds.items[mask])), shape=(ds.n_users, ds.n_items)
    )


def _fill_unseen(E, seen):
    # rows without any training signal get the mean of the trained rows
    if seen.any() and not seen.all():
        E[~seen] = E[seen].mean(axis=0)
    return E


def factorize(ds, cfg, split=None):
    if ds.feedback_kind == EXPLICIT:
        return factorize_explicit(ds, cfg, split)
    return factorize_implicit(ds, cfg, split)


def nnmf_objective(X, U, V, reg):
    pred = np.asarray((U[X.row] * V[X.col]).sum(axis=1)).ravel()
    return float(((X.data - pred) ** 2).sum() + reg * ((U**2).sum() + (V**2).sum()))


def nnmf(X, cfg):
    """Multiplicative-update NNMF of a sparse matrix over its stored entries.

    Returns ``(U, V, objective_history, converged)``.  Stored zeros count as
    observed zeros.
    """
    X = sp.coo_matrix(X)
    Xr = X.tocsr()
    n, m = X.shape
    rng = np.random.default_rng(cfg.seed)
    U = rng.uniform(0.0, 0.1, size=(n, cfg.d))
    V = rng.uniform(0.0, 0.1, size=(m, cfg.d))

    def masked_pred(U, V):
        vals = (U[X.row] * V[X.col]).sum(axis=1)
        return sp.csr_matrix((vals, (X.row, X.col)), shape=X.shape)

    history = [nnmf_objective(X, U, V, cfg.reg)]
    converged = False
    for _ in range(cfg.max_iters):
        P = masked_pred(U, V)
        U *= (Xr @ V) / np.maximum(P @ V + cfg.reg * U, _EPS)
        P = masked_pred(U, V)
        V *= (Xr.T @ U) / np.maximum(P.T @ U + cfg.reg * V, _EPS)
        history.append(nnmf_objective(X, U, V, cfg.reg))
        if abs(history[-2] - history[-1]) <= cfg.tol * max(history[-2], _EPS):
            converged = True
            break
    if not converged:
        _logger.info("NNMF stopped at max_iters=%d (objective %.6g)", cfg.max_iters, history[-1])
    return U, V, history, converged


def factorize_explicit(ds, cfg, split=None):
    """Non-negative MF fitted on the observed (training) ratings only.

    Minimizes ``sum_obs (x - u.v)^2 + reg (|U|^2 + |V|^2)`` with the
    multiplicative update rules, which keep U, V non-negative and never
    increase the objective.  If ``max_iters`` is reached before the relative
    objective change drops below ``tol`` the last iterate is returned with
    ``converged=False``.
    """
    if ds.feedback_kind != EXPLICIT:
        raise ValueError("factorize_explicit needs explicit feedback")
    X = _train_matrix(ds, split).tocoo()
    U, V, history, converged = nnmf(X, cfg)
    n, m = X.shape
    U = _fill_unseen(U, np.bincount(X.row, minlength=n) > 0)
    V = _fill_unseen(V, np.bincount(X.col, minlength=m) > 0)
    return EmbeddingTable(U, V, EXPLICIT, cfg.seed, converged, history)


def wmf_objective(C, P, U, V, reg):
    """Weighted objective over *all* cells; unobserved cells have confidence 1."""
    S = U @ V.T
    full = (S**2).sum()
    # correct the observed cells: c (p - s)^2 instead of 1 * s^2
    s_obs = S[C.row, C.col]
    full += (C.data * (P.data - s_obs) ** 2 - s_obs**2).sum()
    return float(full + reg * ((U**2).sum() + (V**2).sum()))


def _als_half(Cr, Y, reg, warned):
    # Solves each row of X in  min sum_j c_j (p_j - x.y_j)^2 + reg |x|^2
    d = Y.shape[1]
    YtY = Y.T @ Y
    X = np.zeros((Cr.shape[0], d))
    ridge = reg * np.eye(d)
    for r in range(Cr.shape[0]):
        lo, hi = Cr.indptr[r], Cr.indptr[r + 1]
        if lo == hi:
            A = YtY + ridge
            b = np.zeros(d)
        else:
            cols = Cr.indices[lo:hi]
            c = Cr.data[lo:hi]
            Yc = Y[cols]
            A = YtY + (Yc.T * (c - 1.0)) @ Yc + ridge
            b = Yc.T @ c  # preference is 1 on every stored cell
        try:
            X[r] = np.linalg.solve(A, b)
        except np.linalg.LinAlgError:
            if not warned:
                _logger.warning("singular ALS normal equations; adding ridge jitter")
                warned = True
            X[r] = np.linalg.solve(A + 1e-8 * np.trace(A) / d * np.eye(d) + 1e-10 * np.eye(d), b)
    return X, warned


def factorize_implicit(ds, cfg, split=None):
    """Confidence-weighted ALS for implicit counts.

    Confidence is ``1 + alpha * count`` and preference is 1 for any positive
    count.  Each half sweep solves the per-row ridge problems exactly, so
    the weighted objective is non-increasing over full sweeps.
    """
    if ds.feedback_kind != IMPLICIT:
        raise ValueError("factorize_implicit needs implicit feedback")
    X = _train_matrix(ds, split)
    X.eliminate_zeros()
    C = X.copy()
    C.data = 1.0 + cfg.alpha * C.data
    Pm = X.copy()
    Pm.data = np.ones_like(Pm.data)
    Cc, Pc = C.tocoo(), Pm.tocoo()
    n, m = X.shape
    rng = np.random.default_rng(cfg.seed)
    U = rng.normal(0.0, 0.01, size=(n, cfg.d))
    V = rng.normal(0.0, 0.01, size=(m, cfg.d))
    Cr, Ct = C.tocsr(), C.T.tocsr()
    history = [wmf_objective(Cc, Pc, U, V, cfg.reg)]
    converged = False
    warned = False
    for _ in range(cfg.max_iters):
        U, warned = _als_half(Cr, V, cfg.reg, warned)
        V, warned = _als_half(Ct, U, cfg.reg, warned)
        history.append(wmf_objective(Cc, Pc, U, V, cfg.reg))
        if abs(history[-2] - history[-1]) <= cfg.tol * max(history[-2], _EPS):
            converged = True
            break
    counts = np.diff(Cr.indptr), np.diff(Ct.indptr)
    U = _fill_unseen(U, counts[0] > 0)
    V = _fill_unseen(V, counts[1] > 0)
    return EmbeddingTable(U, V, IMPLICIT, cfg.seed, converged, history)


def interaction_frequency(ds, split):
    """Max-normalized training interaction counts per user and per item."""
    mask = split.train_mask
    fu = np.bincount(ds.users[mask], minlength=ds.n_users).astype(np.float64)
    fi = np.bincount(ds.items[mask], minlength=ds.n_items).astype(np.float64)
    if fu.max() > 0:
        fu /= fu.max()
    if fi.max() > 0:
        fi /= fi.max()
    return fu, fi
