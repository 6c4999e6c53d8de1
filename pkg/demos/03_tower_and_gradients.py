"""
The tower scorer and a gradient check
=====================================

Embeddings of width ``d`` pass through ``h`` halving layers per branch.
The pairwise loss comes with hand-written gradients; here we compare
them against central differences on a tiny random network.
"""
import numpy as np

from socialrank.tower import LinearScorer, TowerNetwork, tower_widths

# %%
# Layer widths halve at each level, so ``d`` must be divisible by ``2**h``.
for d, h in [(32, 1), (32, 3), (64, 4)]:
    print(f"d={d:>2} h={h}: widths {tower_widths(d, h)}")

# %%
# A small tower over random embeddings.  The probability that user u
# prefers item i over item j is a sigmoid of the logit difference.
rng = np.random.default_rng(0)
U, V = rng.normal(size=(6, 8)), rng.normal(size=(12, 8))
net = TowerNetwork(U, V, h=2, seed=1)
u, i, j = np.array([0, 1, 2]), np.array([3, 4, 5]), np.array([6, 7, 8])
print("\nP(i > j):", np.round(net.predict_probability(u, i, j), 4))
print("parameters:", {k: v.shape for k, v in net.params.items()})

# %%
# Central differences on every parameter.  Parameters that cancel out of
# the logit difference get an exact zero gradient, so relative error uses
# a small floor in the denominator.


def check(model, lam, eps=1e-5):
    _, grads = model.loss_and_gradients(u, i, j, lam)
    worst = 0.0
    for name, p in model.params.items():
        flat, g = p.reshape(-1), grads[name].reshape(-1)
        for idx in range(flat.size):
            old = flat[idx]
            flat[idx] = old + eps
            up, _ = model.loss_and_gradients(u, i, j, lam)
            flat[idx] = old - eps
            down, _ = model.loss_and_gradients(u, i, j, lam)
            flat[idx] = old
            fd = (up - down) / (2 * eps)
            worst = max(worst, abs(fd - g[idx]) / max(1e-6, abs(fd) + abs(g[idx])))
    return worst


for lam in (0.0, 1e-2):
    print(f"lam={lam:<5} tower max rel. error {check(net, lam):.1e}   "
          f"linear {check(LinearScorer(U, V, seed=3), lam):.1e}")
