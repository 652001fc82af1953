# %% [markdown]
# # Explicit branching constructions
#
# Each construction returns a plan together with a certificate comparing its
# energy to the predicted scaling.

# %%
import numpy as np

from branchtorus.constructions import (choose_parameters, dyadic_interpolation, shear_competitor,
                                       scaling_construction, uniform_branching,
                                       uniform_cell_count)
from branchtorus.core_model import DiscreteMeasure

# %% [markdown]
# Uniform branching: I scales like T^(1/3) at the balanced cell count.

# %%
for T in (1e-4, 1e-3, 1e-2):
    c = uniform_branching(uniform_cell_count(T), T).certificate
    I = c.perimeter + c.kinetic + c.tail
    print(f"T={T:g}  N={uniform_cell_count(T)}  I/T^(1/3)={I / T ** (1 / 3):.3f}")

# %% [markdown]
# With a penalty lam the irrigated squares shrink; the full energy then
# scales like lam^(2/7) T^(3/7).

# %%
for T in (1e-4, 1e-3, 1e-2):
    N, r, regime = choose_parameters(1.0, T)
    E = scaling_construction(1.0, T).certificate.value
    print(f"T={T:g}  N={N}  r={r:.2e}  {regime}  E/T^(3/7)={E / T ** (3 / 7):.3f}")

# %% [markdown]
# Dyadic interpolation joins two arbitrary measures through a sequence of
# grid discretizations of their displacement interpolant.

# %%
rng = np.random.Generator(np.random.Philox(1))
mu = DiscreteMeasure(rng.random((10, 2)), rng.random(10) + 0.1).normalized()
nu = DiscreteMeasure(rng.random((10, 2)), rng.random(10) + 0.1).normalized()
con = dyadic_interpolation(mu, nu, 1e-3)
extra = con.certificate.extra
print("perimeter ratio", extra["perimeter_ratio"], "kinetic ratio", extra["kinetic_ratio"])
print("stages", len(extra["stages"]), "support bound holds:", extra["support_ok"])

# %% [markdown]
# Shearing near the boundary costs little perimeter.

# %%
plan = uniform_branching(4, 0.1, levels=1).plan
_, dI, _, _ = shear_competitor(plan, 0.01, 0.02)
print("energy change", dI)
