# %% [markdown]
# # The one-dimensional toy model
#
# Roots sit at t = 0 and each irrigates an interval of the circle at t = +-T.
# With N straight segments the energy is 2 (N T + lam / (12 N^2)); the
# solver also searches over branching subtrees.

# %%
from branchtorus.toy1d import (SubtreeProblem, check_cone_property, equipartition_residual,
                               lagrangian_energy, lagrangian_field, optimal_segment_count,
                               solve_E, solve_toy, toy_energy_of_plan)

# %% [markdown]
# Small lam: straight segments are optimal and the solver finds no branching.

# %%
sol = solve_toy(0.1, 0.01)
print("N =", sol.N, "branchings =", sol.branchings, "E =", sol.E_upper)
print("closed form:", 2 * (0.01 + 0.1 / 12))

# %% [markdown]
# The optimal segment count grows like (lam / T)^(1/3).

# %%
for lam, T in [(1e-2, 1e-3), (1e-1, 1e-4), (1.0, 1e-5)]:
    N, E = optimal_segment_count(lam, T)
    print(f"lam={lam:g} T={T:g}  N={N}  (lam/6T)^(1/3)={(lam / (6 * T)) ** (1 / 3):.2f}")

# %% [markdown]
# For large lam the cell problem branches. The returned tree stays inside
# the cones spanned by each subtree, and the energy is equipartitioned in time.

# %%
lam, T = 100.0, 0.05
cell = solve_E(SubtreeProblem(1.0, T, lam), depth=3, branch_grid=32)
bar, dev = equipartition_residual(cell.plan, power=0.0)
print("E =", cell.E, "lower bound =", cell.E_lower)
print("cone violations:", len(check_cone_property(cell.plan, lam)))
print("equipartition constant", bar, "max deviation", dev)

# %% [markdown]
# The Lagrangian description of the same plan gives the same energy.

# %%
full = solve_toy(20.0, 0.2, grid=16)
fld = lagrangian_field(full.plan, 20.0)
print(lagrangian_energy(fld), toy_energy_of_plan(full.plan, 20.0))
