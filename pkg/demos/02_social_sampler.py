"""
Friend/foe-aware negative sampling
==================================

Negatives for a user come from items that neither the user nor any of
their friends and foes has touched.  When that set is empty the sampler
falls back to the plain unobserved pool and marks the user, so training
skips the social cases for them.
"""
import numpy as np

from socialrank.data import ObservedSets, SignedSocialGraph
from socialrank.sampler import SOCIAL, UNCONDITIONAL, NegativePools, SamplerConfig, draw_negatives

# %%
# Four users over ten items.  User 3 is friends with users 0 and 1, who
# between them cover all the items user 3 has not seen.
positives = [np.array([0, 1, 2, 3]), np.array([4, 5, 6]), np.array([7]), np.array([8, 9])]
obs = ObservedSets(10, positives)
graph = SignedSocialGraph(4, friends=((1,), (0,), (), (0, 1)), foes=((2,), (), (0,), (2,)))

social = NegativePools(obs, graph, SOCIAL)
plain = NegativePools(obs, graph, UNCONDITIONAL)
for u in range(4):
    print(f"user {u}: social pool {social[u].tolist()!s:<18} "
          f"unconditional {plain[u].tolist()!s:<24} fallback={bool(social.fallback[u])}")

# %%
# User 0's social pool loses item 7 (the foe's) and items 4-6 (the
# friend's).  User 3 has nothing left and falls back.

# %%
# Draws come without replacement, and each eligible item is equally likely.
rng = np.random.default_rng(1)
cfg = SamplerConfig(negatives_per_positive=2)
print("\nfive draws for user 0:", [draw_negatives(0, 1, cfg, social[0], rng).tolist() for _ in range(5)])

counts = np.zeros(10, dtype=int)
one = SamplerConfig(negatives_per_positive=1)
for _ in range(30_000):
    counts[draw_negatives(2, 1, one, social[2], rng)[0]] += 1
print("user 2 frequencies over its pool:",
      {int(i): round(float(counts[i] / counts.sum()), 3) for i in social[2]})
