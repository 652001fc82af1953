# %% [markdown]
# # Periodic optimal transport
#
# Discrete transport on the torus returns sparse plans with at most
# n + m - 1 entries; in one dimension closed forms are available.

# %%
import numpy as np

from branchtorus.core_model import DiscreteMeasure
from branchtorus.transport import (dense_lp_cost, mccann_interpolate,
                                   richardson_w2_to_lebesgue_2d, w2_periodic_discrete,
                                   w2_to_lebesgue_1d)

rng = np.random.Generator(np.random.Philox(0))

# %%
mu = DiscreteMeasure(rng.random((12, 2)), rng.random(12) + 0.1).normalized()
nu = DiscreteMeasure(rng.random((9, 2)), rng.random(9) + 0.1).normalized()
plan = w2_periodic_discrete(mu, nu)
print("cost", plan.cost, "support", plan.support_size, "<=", 12 + 9 - 1)
print("dense LP", dense_lp_cost(mu, nu))

# %% [markdown]
# Displacement interpolation moves each atom along its periodic geodesic.

# %%
for s in (0.0, 0.5, 1.0):
    mid = mccann_interpolate(plan, mu, nu, s)
    print(s, len(mid), w2_periodic_discrete(mu, mid).cost)

# %% [markdown]
# N equidistant atoms on the circle against Lebesgue: 1 / (12 N^2).
# A single atom against the uniform measure on the square: 1/6.

# %%
for N in (1, 2, 4, 8):
    print(N, w2_to_lebesgue_1d(DiscreteMeasure.uniform_grid(N, dim=1)), 1 / (12 * N * N))
print(richardson_w2_to_lebesgue_2d(DiscreteMeasure([[0.5, 0.5]], [1.0]), 32))
