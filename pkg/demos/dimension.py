# %% [markdown]
# # Dimension exponents

# %%
from fractions import Fraction

import numpy as np

from branchtorus.analysis import (box_counting_dimension, dim_bounds_from_beta,
                                  prune_alpha_regular, quantization_check)
from branchtorus.constructions import choose_parameters, nonuniform_branching
from branchtorus.core_model import DiscreteMeasure, GridDensity

# %% [markdown]
# A local energy exponent beta gives lower and upper dimension bounds; they
# meet at 8/5 for beta = 3/7.

# %%
for beta in (Fraction(1, 3), Fraction(2, 5), Fraction(3, 7)):
    print(beta, dim_bounds_from_beta(beta))

# %% [markdown]
# Covering numbers of the nonuniform trace grow like r^(-8/5) at the scale of
# the irrigated squares.

# %%
T = 1e-3
N, r, _ = choose_parameters(1.0, T)
trace = nonuniform_branching(N, r, T, levels=1).trace_density
fit = box_counting_dimension(trace, r * np.array([0.75, 0.875, 1.0, 1.125, 1.25]), method="cover")
print("cells", N * N, "side", r, "exponent", fit.exponent)

# %% [markdown]
# Pruning removes atoms that carry too much mass for their neighbourhood.

# %%
grid = DiscreteMeasure.uniform_grid(16, total=0.994)
sigma = DiscreteMeasure(np.vstack([grid.positions, [[0.5, 0.5]]]), np.r_[grid.masses, 0.006])
print(len(sigma), "->", len(prune_alpha_regular(sigma, 2.0, 4.0)))

# %% [markdown]
# Quantization of the uniform measure by four equal atoms.

# %%
res = quantization_check(GridDensity.lebesgue(2), [0.25] * 4, 2.0, starts=4)
print("R", res.R, "bound", res.bound, "ratio", res.ratio)
