# %% [markdown]
# # Negative Sobolev norms on the torus

# %%
import numpy as np

from branchtorus.core_model import DiscreteMeasure, GridDensity
from branchtorus.sobolev import (fourier_of_measure, h_negative_norm_sq, riesz_energy,
                                 semigroup_norm_sq, shear_damping)

# %% [markdown]
# A density made of boxes has a finite H^(-1/2) norm with a computable tail
# bound; its scale-integral form differs by the factor 2 gamma + 1 on a
# truncated table.

# %%
boxes = GridDensity.centered_boxes([[0.25, 0.25], [0.75, 0.5]], 0.25, [0.5, 0.5])
tab = fourier_of_measure(boxes, 24)
for gamma in (0.25, 0.5, 1.0):
    value, tail = h_negative_norm_sq(tab, gamma)
    print(gamma, value, tail, value / semigroup_norm_sq(tab, gamma))

# %% [markdown]
# A single atom has infinite norm: the truncated value keeps growing.

# %%
atom = DiscreteMeasure([[0.3, 0.6]], [1.0])
print([round(h_negative_norm_sq(fourier_of_measure(atom, K), 0.5)[0], 3) for K in (8, 16, 32)])

# %% [markdown]
# Averaging two sheared copies damps the modes along the shear axis.

# %%
for eta in (0.0, 0.05, 0.1):
    print(eta, h_negative_norm_sq(shear_damping(tab, eta, 1), 0.5)[0])

# %% [markdown]
# Riesz energy of the uniform measure on the unit interval.

# %%
print(riesz_energy(GridDensity.lebesgue(1), 0.5), 8 / 3)
