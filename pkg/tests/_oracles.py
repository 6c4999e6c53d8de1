"""Independent reference implementations used by the unit and acceptance tests."""
import math

import numpy as np

from socialrank.tower import LinearScorer, TowerNetwork


def brute_recall(ranked, relevant, k):
    top = ranked[:k]
    return len([x for x in top if x in relevant]) / len(relevant)


def brute_ndcg(ranked, relevant, k):
    dcg = 0.0
    for pos, item in enumerate(ranked[:k]):
        if item in relevant:
            dcg += 1.0 / math.log2(pos + 2)
    idcg = sum(1.0 / math.log2(pos + 2) for pos in range(min(k, len(relevant))))
    return dcg / idcg


def random_scorer(rng, kind, d=4, h=2, n_users=5, n_items=7, train_embeddings=False,
                  tie_item_branches=True):
    U = rng.normal(size=(n_users, d))
    V = rng.normal(size=(n_items, d))
    bu, bi = rng.normal(size=n_users), rng.normal(size=n_items)
    seed = int(rng.integers(1 << 30))
    if kind == "linear":
        return LinearScorer(U, V, seed=seed, user_bias=bu, item_bias=bi)
    net = TowerNetwork(U, V, h=h, seed=seed, user_bias=bu, item_bias=bi,
                       train_embeddings=train_embeddings, tie_item_branches=tie_item_branches)
    # nonzero layer biases keep pre-activations off the ReLU kink at 0
    for name in net.layer_names():
        if name.startswith("c"):
            net.params[name] = rng.normal(scale=0.1, size=net.params[name].shape)
    return net


def random_batch(rng, net, size=6):
    u = rng.integers(net.n_users, size=size)
    i = rng.integers(net.n_items, size=size)
    j = (i + 1 + rng.integers(net.n_items - 1, size=size)) % net.n_items
    return u, i, j


def max_relative_error(net, u, i, j, lam, eps=1e-5):
    """Largest relative error between analytic and central-difference gradients.

    The denominator is floored at 1e-6: parameters that cancel out of
    ``s_ui - s_uj`` have an exact zero gradient, and central differences
    return round-off (about 1e-11 at eps=1e-5) for them, which is not a
    relative error.
    """
    _, grads = net.loss_and_gradients(u, i, j, lam)
    worst = 0.0
    for name, p in net.params.items():
        flat = p.reshape(-1)
        g = grads[name].reshape(-1)
        for idx in range(flat.size):
            old = flat[idx]
            flat[idx] = old + eps
            up, _ = net.loss_and_gradients(u, i, j, lam)
            flat[idx] = old - eps
            down, _ = net.loss_and_gradients(u, i, j, lam)
            flat[idx] = old
            fd = (up - down) / (2 * eps)
            err = abs(fd - g[idx]) / max(1e-6, abs(fd) + abs(g[idx]))
            worst = max(worst, err)
    return worst
