"""Three-branch tower scorer and its linear (no hidden layer) counterpart.

Each branch maps a d-dimensional embedding through ``h`` ReLU layers whose
widths halve at every level (d -> d/2 -> ... -> d/2^h).  The positive-item,
user and negative-item branches have their own inputs; by default the two
item branches share one set of weights (``tie_item_branches``).  With
untied item branches the pairwise loss can be driven to zero by inflating
the positive branch and muting the negative one, which says nothing about
how items rank against each other.  The logit of a (user, item) pair is
the dot product of the top user and item representations plus a scalar
user bias and a scalar item bias.

Parameters live in a flat ``name -> ndarray`` dict so the optimizer and
the checkpoint code do not need to know the architecture.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

BRANCHES = ("pos", "user", "neg")


class ShapeError(ValueError):
    pass


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def softplus(z):
    z = np.asarray(z, dtype=np.float64)
    return np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))


def tower_widths(d, h):
    if h < 0 or d < 1:
        raise ShapeError(f"invalid tower (d={d}, h={h})")
    if 2**h > d:
        raise ShapeError(f"tower needs 2^h <= d, got d={d}, h={h}")
    if d % 2**h:
        raise ShapeError(f"d={d} is not divisible by 2^h={2**h}; widths cannot halve exactly")
    return [d // 2**q for q in range(h + 1)]


@dataclass
class ForwardTrace:
    pre: dict  # branch -> list of pre-activations Z^(1..h)
    act: dict  # branch -> list of activations H^(0..h)
    s_ui: np.ndarray
    s_uj: np.ndarray
    x_ui: np.ndarray
    x_uj: np.ndarray


class PairwiseScorer:
    """Shared machinery for the tower and linear scorers."""

    kind = "base"

    def __init__(self, U, V, h, seed=0, user_bias=None, item_bias=None,
                 train_embeddings=False, stage="init", tie_item_branches=True):
        U = np.array(U, dtype=np.float64)
        V = np.array(V, dtype=np.float64)
        if U.ndim != 2 or V.ndim != 2 or U.shape[1] != V.shape[1]:
            raise ShapeError("U and V must be 2-d with the same width")
        self.d = U.shape[1]
        self.h = h
        self.widths = tower_widths(self.d, h)
        self.n_users, self.n_items = U.shape[0], V.shape[0]
        self.seed = seed
        self.stage = stage
        self.train_embeddings = train_embeddings
        self.tie_item_branches = tie_item_branches
        rng = np.random.default_rng(seed)
        p = {}
        for branch in self._weight_sets():
            for q in range(1, h + 1):
                fan_in = self.widths[q - 1]
                p[f"W{q}_{branch}"] = rng.normal(0.0, np.sqrt(2.0 / fan_in),
                                                 size=(self.widths[q], fan_in))
                p[f"c{q}_{branch}"] = np.zeros(self.widths[q])
        p["b_user"] = (np.zeros(self.n_users) if user_bias is None
                       else np.array(user_bias, dtype=np.float64))
        p["b_item"] = (np.zeros(self.n_items) if item_bias is None
                       else np.array(item_bias, dtype=np.float64))
        if train_embeddings:
            p["U"], p["V"] = U, V
            self._frozen = {}
        else:
            self._frozen = {"U": U, "V": V}
        self.params = p

    # -- parameter access ------------------------------------------------

    @property
    def U(self):
        return self.params["U"] if self.train_embeddings else self._frozen["U"]

    @property
    def V(self):
        return self.params["V"] if self.train_embeddings else self._frozen["V"]

    def _weight_sets(self):
        return ("item", "user") if self.tie_item_branches else BRANCHES

    def _key(self, branch):
        if self.tie_item_branches and branch != "user":
            return "item"
        return branch

    def layer_names(self):
        return [n for n in self.params if n[0] in "Wc"]

    def copy(self):
        new = object.__new__(type(self))
        new.__dict__.update(self.__dict__)
        new.params = {k: v.copy() for k, v in self.params.items()}
        new._frozen = {k: v.copy() for k, v in self._frozen.items()}
        return new

    # -- forward -----------------------------------------------------------

    def forward_branch(self, branch, X):
        """Run a batch of inputs (rows) through one branch.

        Returns ``(pre, act)``: the h pre-activations and the h+1 activations
        starting with the input itself.
        """
        X = np.asarray(X, dtype=np.float64)
        if X.shape[-1] != self.d:
            raise ShapeError(f"branch input has width {X.shape[-1]}, expected {self.d}")
        key = self._key(branch)
        act = [X]
        pre = []
        for q in range(1, self.h + 1):
            Z = act[-1] @ self.params[f"W{q}_{key}"].T + self.params[f"c{q}_{key}"]
            pre.append(Z)
            act.append(np.maximum(Z, 0.0))
        return pre, act

    def branch_output(self, branch, X):
        return self.forward_branch(branch, X)[1][-1]

    def score_vectors(self, U_u, V_i, V_j, b_u, b_i, b_j):
        """Logits and probabilities for explicit input vectors (batched rows)."""
        pre, act = {}, {}
        for branch, X in zip(BRANCHES, (V_i, U_u, V_j)):
            pre[branch], act[branch] = self.forward_branch(branch, np.atleast_2d(X))
        Hu = act["user"][-1]
        s_ui = (act["pos"][-1] * Hu).sum(axis=1) + b_i + b_u
        s_uj = (act["neg"][-1] * Hu).sum(axis=1) + b_j + b_u
        return ForwardTrace(pre, act, s_ui, s_uj, sigmoid(s_ui), sigmoid(s_uj))

    def forward(self, u, i, j):
        u, i, j = (np.atleast_1d(np.asarray(a, dtype=np.int64)) for a in (u, i, j))
        b_u, b_i = self.params["b_user"], self.params["b_item"]
        return self.score_vectors(self.U[u], self.V[i], self.V[j], b_u[u], b_i[i], b_i[j])

    def user_item_logits(self, users, items=None):
        """Logits of every (user, item) combination, shape (len(users), len(items))."""
        users = np.atleast_1d(np.asarray(users, dtype=np.int64))
        items = np.arange(self.n_items) if items is None else np.asarray(items, dtype=np.int64)
        Hu = self.branch_output("user", self.U[users])
        Hi = self.branch_output("pos", self.V[items])
        return Hu @ Hi.T + self.params["b_item"][items] + self.params["b_user"][users][:, None]

    # -- loss ------------------------------------------------------------

    def regularized(self, u, i, j):
        """Names and row indices of the parameters in the L2 penalty for a batch.

        Layer weights and biases are always included; per-entity parameters
        only for the distinct entities that appear in the batch.
        """
        users = np.unique(u)
        items = np.unique(np.concatenate([np.atleast_1d(i), np.atleast_1d(j)]))
        out = [(n, None) for n in self.layer_names()]
        out += [("b_user", users), ("b_item", items)]
        if self.train_embeddings:
            out += [("U", users), ("V", items)]
        return out

    def l2_penalty(self, u, i, j):
        total = 0.0
        for name, rows in self.regularized(u, i, j):
            p = self.params[name] if rows is None else self.params[name][rows]
            total += float((p**2).sum())
        return total

    def loss_and_gradients(self, u, i, j, lam):
        """Pairwise ranking loss of a batch and its exact gradient.

        ``loss = sum_batch softplus(-(s_ui - s_uj)) + lam * |theta|^2``, i.e.
        the negative log-likelihood of ``sigma(s_ui - s_uj)`` summed over the
        batch.  Returns ``(loss, grads)`` with ``grads`` keyed like ``params``.
        """
        if lam < 0:
            raise ValueError("lambda must be >= 0")
        u, i, j = (np.atleast_1d(np.asarray(a, dtype=np.int64)) for a in (u, i, j))
        if len(u) == 0:
            raise ValueError("empty batch")
        tr = self.forward(u, i, j)
        z = tr.s_ui - tr.s_uj
        data_loss = float(softplus(-z).sum())
        g = sigmoid(z) - 1.0  # d loss / d z

        grads = {k: np.zeros_like(v) for k, v in self.params.items()}
        Hu = tr.act["user"][-1]
        top = {
            "pos": g[:, None] * Hu,
            "neg": -g[:, None] * Hu,
            "user": g[:, None] * (tr.act["pos"][-1] - tr.act["neg"][-1]),
        }
        inputs = {}
        for branch, dH in top.items():
            key = self._key(branch)
            for q in range(self.h, 0, -1):
                dZ = dH * (tr.pre[branch][q - 1] > 0)
                grads[f"W{q}_{key}"] += dZ.T @ tr.act[branch][q - 1]
                grads[f"c{q}_{key}"] += dZ.sum(axis=0)
                dH = dZ @ self.params[f"W{q}_{key}"]
            inputs[branch] = dH
        np.add.at(grads["b_item"], i, g)
        np.add.at(grads["b_item"], j, -g)
        # the user bias cancels in s_ui - s_uj; only the penalty acts on it
        if self.train_embeddings:
            np.add.at(grads["U"], u, inputs["user"])
            np.add.at(grads["V"], i, inputs["pos"])
            np.add.at(grads["V"], j, inputs["neg"])

        penalty = 0.0
        for name, rows in self.regularized(u, i, j):
            p = self.params[name]
            if rows is None:
                penalty += float((p**2).sum())
                grads[name] += 2.0 * lam * p
            else:
                penalty += float((p[rows] ** 2).sum())
                grads[name][rows] += 2.0 * lam * p[rows]
        loss = data_loss + lam * penalty
        if not np.isfinite(loss):
            raise FloatingPointError("non-finite loss")
        for name, gr in grads.items():
            if not np.all(np.isfinite(gr)):
                raise FloatingPointError(f"non-finite gradient for parameter {name!r}")
        return loss, grads

    # -- prediction ------------------------------------------------------

    def predict_probability(self, u, i, j):
        tr = self.forward(u, i, j)
        return relation_probability(tr.x_ui, tr.x_uj)

    def score_all_items(self, u, candidates=None):
        """Rank candidate items for user u by predicted probability.

        Ties are broken by ascending item id.  Sorting uses the logits, which
        order identically to the probabilities but do not saturate.
        Returns ``(items, probabilities)``.
        """
        items = (np.arange(self.n_items) if candidates is None
                 else np.asarray(candidates, dtype=np.int64))
        s = self.user_item_logits([u], items)[0]
        order = np.lexsort((items, -s))
        return items[order], sigmoid(s[order])

    # -- persistence -----------------------------------------------------

    def header(self):
        return {"kind": self.kind, "d": self.d, "h": self.h, "n": self.n_users,
                "m": self.n_items, "seed": self.seed, "stage": self.stage,
                "train_embeddings": self.train_embeddings,
                "tie_item_branches": self.tie_item_branches}

    def save(self, path):
        arrays = {f"param/{k}": v for k, v in self.params.items()}
        arrays.update({f"frozen/{k}": v for k, v in self._frozen.items()})
        np.savez(path, header=json.dumps(self.header()), **arrays)

    def equals(self, other):
        """Bitwise equality of header, parameters and frozen inputs."""
        return self.header() == other.header() and self.same_parameters(other)

    def same_parameters(self, other):
        """Bitwise equality of parameters and frozen inputs, ignoring the stage label."""
        if self.params.keys() != other.params.keys() or self._frozen.keys() != other._frozen.keys():
            return False
        same = all(np.array_equal(self.params[k], other.params[k]) for k in self.params)
        return same and all(np.array_equal(self._frozen[k], other._frozen[k]) for k in self._frozen)


class TowerNetwork(PairwiseScorer):
    """Three ReLU towers over frozen (by default) MF embeddings; needs h >= 1."""

    kind = "tower"

    def __init__(self, U, V, h=4, seed=0, user_bias=None, item_bias=None,
                 train_embeddings=False, stage="init", tie_item_branches=True):
        if h < 1:
            raise ShapeError("a tower network needs at least one hidden layer")
        super().__init__(U, V, h, seed, user_bias, item_bias, train_embeddings, stage,
                         tie_item_branches)


class LinearScorer(PairwiseScorer):
    """``s_ui = U_u . V_i + b_u + b_i`` with trainable U and V."""

    kind = "linear"

    def __init__(self, U, V, seed=0, user_bias=None, item_bias=None, stage="init", **_):
        super().__init__(U, V, 0, seed, user_bias, item_bias, True, stage)


def relation_probability(x_ui, x_uj):
    """Map two item probabilities to the probability of ``i >_u j``."""
    return (np.asarray(x_ui) - np.asarray(x_uj)) / 2.0 + 0.5


def load_checkpoint(path):
    with np.load(path) as z:
        header = json.loads(str(z["header"]))
        params = {k.split("/", 1)[1]: z[k].copy() for k in z.files if k.startswith("param/")}
        frozen = {k.split("/", 1)[1]: z[k].copy() for k in z.files if k.startswith("frozen/")}
    cls = TowerNetwork if header["kind"] == "tower" else LinearScorer
    net = object.__new__(cls)
    net.d, net.h = header["d"], header["h"]
    net.widths = tower_widths(net.d, net.h)
    net.n_users, net.n_items = header["n"], header["m"]
    net.seed, net.stage = header["seed"], header["stage"]
    net.train_embeddings = header["train_embeddings"]
    net.tie_item_branches = header["tie_item_branches"]
    net.params, net._frozen = params, frozen
    return net
