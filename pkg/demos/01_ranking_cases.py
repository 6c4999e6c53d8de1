"""
Six ranking cases on a toy user
===============================

A user ``u`` with one friend ``a`` and one foe ``b``.  We list every
pairwise relation the six cases produce, then check that sampling picks
the cases in proportion to the weights we hand it.
"""
from collections import Counter

import numpy as np

from socialrank.criteria import CriterionContext, enumerate_relations, sample_relations

# %%
# The item sets.  ``u`` interacted with items 1 and 2, the friend with 2
# and 3, the foe with 4.  Items 5 and 6 are sampled negatives: nobody in
# this little neighbourhood touched them.
ctx = CriterionContext.build(u=0, user_items={1, 2}, negatives={5, 6},
                             friend_items={2, 3}, foe_items={4}, friend=1, foe=2)

# %%
# Exact enumeration.  Each relation reads "u prefers i over j".
by_case = {}
for rel in enumerate_relations(ctx):
    by_case.setdefault(rel.case, []).append((rel.i, rel.j))
for case in range(1, 7):
    pairs = ", ".join(f"{i}>{j}" for i, j in by_case.get(case, []))
    print(f"case {case}: {pairs}")

# %%
# Case 3 is a subset of case 2: the shared item 2 beats the friend-only
# item 3 twice over.  Case 5 pits friend items against foe items and
# would drop an item that is both (none here).

# %%
# Sampling.  With uniform weights every non-empty case is equally likely,
# however many pairs it contains.
rng = np.random.default_rng(0)
cases, _, _ = sample_relations(ctx, (1.0,) * 6, rng, 60_000)
freq = Counter(cases.tolist())
print("\nuniform weights:", {c: round(freq[c] / len(cases), 3) for c in sorted(freq)})

# %%
# Zero weights switch cases off.  Keeping only case 1 recovers the
# plain pairwise objective used by the non-social baselines.
cases, i, j = sample_relations(ctx, (1.0, 0, 0, 0, 0, 0), rng, 1000)
print("case-1 only:  ", sorted(set(zip(i.tolist(), j.tolist()))))
