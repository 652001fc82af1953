"""Dimension estimates and exponent bookkeeping.

Power-law fits on log-log data, the lower and upper dimension bounds as
functions of the local energy exponent, box counting, pruning to an
``alpha``-regular part, and the quantization lower bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import NamedTuple

import numpy as np
from scipy.spatial import cKDTree

from .constants import C_QUANT
from .core_model import DiscreteMeasure, GridDensity, periodic_displacement, reduce_torus
from .transport import cost_matrix, solve_discrete

QUANT_REGULARITY = 4.0


@dataclass(frozen=True)
class ScalingFit:
    """Least-squares fit ``value ~ prefactor * scale**exponent``."""

    exponent: float
    prefactor: float
    r_squared: float
    points: tuple

    def to_dict(self) -> dict:
        return {"exponent": self.exponent, "prefactor": self.prefactor, "r2": self.r_squared}


def fit_power_law(scales, values, through_origin: bool = False) -> ScalingFit:
    """Fit ``log value = exponent * log scale + log prefactor``.

    With ``through_origin`` the prefactor is fixed to 1.
    """
    s = np.asarray(scales, dtype=float)
    v = np.asarray(values, dtype=float)
    if len(s) < 2 or s.shape != v.shape:
        raise ValueError("need at least two (scale, value) pairs")
    if not (np.all(s > 0) and np.all(v > 0) and np.all(np.isfinite(s)) and np.all(np.isfinite(v))):
        raise ValueError("scales and values must be positive")
    x, y = np.log(s), np.log(v)
    if through_origin:
        slope, icept = float(x @ y / (x @ x)), 0.0
    else:
        slope, icept = (float(v) for v in np.polyfit(x, y, 1))
    resid = y - (slope * x + icept)
    ss_res = float(resid @ resid)
    # uncentered total sum of squares when the intercept is fixed
    ss_tot = float(y @ y) if through_origin else float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0:
        r2 = 1.0 if ss_res == 0 else 0.0
    else:
        r2 = max(0.0, 1.0 - ss_res / ss_tot)
    pts = tuple((float(a), float(b)) for a, b in zip(scales, values))
    return ScalingFit(slope, math.exp(icept), min(r2, 1.0), pts)


# ---------------------------------------------------------------------------
# exponent bookkeeping
# ---------------------------------------------------------------------------


def lower_dim_bound(beta):
    """``f(beta) = (1 + 3 beta) / (1 + beta)``; exact for Fraction input."""
    return (1 + 3 * beta) / (1 + beta)


def upper_dim_bound(beta):
    """``g(beta) = 4 (1 - beta) / (1 + beta)`` (uncapped)."""
    return 4 * (1 - beta) / (1 + beta)


def dim_bounds_from_beta(beta):
    """``(f(beta), min(g(beta), 2))`` for ``beta`` in (0, 1).

    Fractions (or integers) give exact rational results.
    """
    if not 0 < beta < 1:
        raise ValueError("beta must lie in (0, 1)")
    if isinstance(beta, int):
        beta = Fraction(beta)
    g = upper_dim_bound(beta)
    cap = 2 if isinstance(beta, Fraction) else 2.0
    return lower_dim_bound(beta), min(g, cap)


def local_energy_exponent(family) -> ScalingFit:
    """Fit ``I(mu, eps) ~ eps^beta`` from a mapping ``eps -> I``.

    Requires at least four scales spanning at least 1.5 decades.
    """
    items = sorted((float(k), float(v)) for k, v in dict(family).items())
    if len(items) < 4:
        raise ValueError("need at least four scales")
    eps = np.array([a for a, _ in items])
    if math.log10(eps[-1] / eps[0]) < 1.5 - 1e-12:
        raise ValueError("scales must span at least 1.5 decades")
    return fit_power_law(eps, [b for _, b in items])


# ---------------------------------------------------------------------------
# box counting
# ---------------------------------------------------------------------------


def _mass_support(sigma, fraction):
    """Heaviest atoms or boxes carrying at least ``fraction`` of the mass."""
    masses = np.asarray(sigma.masses, dtype=float)
    if masses.size == 0 or np.sum(masses) <= 0:
        raise ValueError("degenerate support")
    order = np.argsort(-masses, kind="stable")
    cum = np.cumsum(masses[order])
    n = int(np.searchsorted(cum, fraction * cum[-1] * (1 - 1e-12))) + 1
    return np.sort(order[:n])


def _grid_count(sigma, keep, rho):
    """Number of cells of the grid of side ``rho`` meeting the support."""
    if isinstance(sigma, DiscreteMeasure):
        cells = np.floor(sigma.positions[keep] / rho).astype(np.int64)
        return len(np.unique(cells, axis=0))
    lo = np.floor(sigma.lo[keep] / rho + 1e-12).astype(np.int64)
    hi = np.ceil(sigma.hi[keep] / rho - 1e-12).astype(np.int64)
    per_box = np.prod(np.maximum(hi - lo, 1), axis=1)
    if np.sum(per_box) > 5e7:
        raise ValueError("radius too small for the support")
    cells = []
    for a, b in zip(lo, hi):
        axes = [np.arange(x, max(y, x + 1)) for x, y in zip(a, b)]
        mesh = np.meshgrid(*axes, indexing="ij")
        cells.append(np.column_stack([m.ravel() for m in mesh]))
    return len(np.unique(np.concatenate(cells), axis=0))


def _cover_count(sigma, keep, rho):
    """Number of balls of radius ``rho`` in a greedy cover of the support.

    Atoms are covered greedily by balls centred at the heaviest uncovered
    atom. A box of side ``h`` is covered by ``ceil(h / (rho sqrt d))^d``
    balls, one per sub-square inscribed in a ball.
    """
    if isinstance(sigma, DiscreteMeasure):
        pos = sigma.positions[keep]
        tree = cKDTree(pos, boxsize=1.0)
        covered = np.zeros(len(pos), dtype=bool)
        n = 0
        for i in np.argsort(-sigma.masses[keep], kind="stable"):
            if covered[i]:
                continue
            covered[tree.query_ball_point(pos[i], rho)] = True
            n += 1
        return n
    d = sigma.dim
    per_axis = np.ceil(sigma.sides[keep] / (rho * math.sqrt(d)) - 1e-12).astype(np.int64)
    return int(np.sum(np.prod(np.maximum(per_axis, 1), axis=1)))


def box_counting_dimension(sigma, radii, method: str = "ls", mass_fraction: float = 0.99) -> ScalingFit:
    """Box-counting dimension of the part of ``sigma`` carrying
    ``mass_fraction`` of its mass.

    Parameters
    ----------
    sigma : DiscreteMeasure or GridDensity
    radii : sequence of float
        At least four scales in (0, 1).
    method : {"ls", "cover"}
        ``"ls"`` counts occupied cells of side ``rho`` and fits the slope of
        ``log n`` against ``log(1/rho)``. ``"cover"`` counts balls of radius
        ``rho`` in a cover of the support and fits ``n rho^alpha = 1``
        (no intercept), the single-scale notion of dimension.

    Returns
    -------
    ScalingFit
        ``exponent`` is the dimension; ``points`` holds ``(rho, n)``.
    """
    radii = np.asarray(sorted(float(r) for r in radii))
    if len(radii) < 4:
        raise ValueError("need at least four radii")
    if np.any(radii <= 0) or np.any(radii >= 1):
        raise ValueError("radii must lie in (0, 1)")
    keep = _mass_support(sigma, mass_fraction)
    if method == "ls":
        counts = [_grid_count(sigma, keep, r) for r in radii]
        fit = fit_power_law(1.0 / radii, counts)
    elif method == "cover":
        counts = [_cover_count(sigma, keep, r) for r in radii]
        fit = fit_power_law(1.0 / radii, counts, through_origin=True)
    else:
        raise ValueError(f"unknown method {method!r}")
    return ScalingFit(fit.exponent, fit.prefactor, fit.r_squared,
                      tuple(zip(radii.tolist(), [int(c) for c in counts])))


# ---------------------------------------------------------------------------
# alpha-regular pruning
# ---------------------------------------------------------------------------


def default_radii(sigma: DiscreteMeasure, floor: float = 2.0**-20) -> np.ndarray:
    """Dyadic radii ``2^-j`` from 1 down to the smallest atom separation.

    Below that scale every ball around an atom holds that atom alone.
    """
    if len(sigma) > 1:
        tree = cKDTree(sigma.positions, boxsize=1.0)
        dist, _ = tree.query(sigma.positions, k=2)
        d_min = max(float(np.min(dist[:, 1])), floor)
    else:
        d_min = floor
    J = int(math.floor(-math.log2(d_min) + 1e-12))
    return 2.0 ** -np.arange(J + 1)


def local_masses(sigma: DiscreteMeasure, radii, centers=None) -> np.ndarray:
    """``sigma(B_r(x))`` for open periodic balls, shape ``(len(centers), len(radii))``."""
    centers = sigma.positions if centers is None else np.asarray(centers, dtype=float)
    tree = cKDTree(sigma.positions, boxsize=1.0)
    out = np.empty((len(centers), len(radii)))
    for j, r in enumerate(radii):
        # open ball: shrink by a relative 1e-12
        hits = tree.query_ball_point(centers, r * (1 - 1e-12))
        out[:, j] = [math.fsum(sigma.masses[h]) for h in hits]
    return out


def prune_alpha_regular(sigma: DiscreteMeasure, alpha: float, M: float, radii=None) -> DiscreteMeasure:
    """Keep the atoms ``x`` with ``sigma(B_r(x)) <= M r^alpha`` at every tested
    radius (dyadic radii from 1 to the atom separation by default).

    Since ``s <= sigma``, the result keeps the bound ``M r^alpha`` around
    its own atoms; around an arbitrary center it holds with ``2^alpha M``
    (a nonempty ball ``B_r(x)`` sits in ``B_2r(y)`` for a kept atom ``y``).
    See :func:`regularity_defect`.
    """
    if not 0 < alpha <= sigma.dim:
        raise ValueError("alpha must lie in (0, d]")
    if len(sigma) == 0:
        return sigma
    radii = default_radii(sigma) if radii is None else np.asarray(radii, dtype=float)
    mass = local_masses(sigma, radii)
    ok = np.all(mass <= M * radii[None, :] ** alpha * (1 + 1e-12), axis=1)
    return DiscreteMeasure(sigma.positions[ok], sigma.masses[ok])


def regularity_defect(sigma: DiscreteMeasure, alpha: float, M: float, radii) -> float:
    """Largest ``sigma(B_r(x)) / (M r^alpha)`` over support points and radii."""
    if len(sigma) == 0:
        return 0.0
    radii = np.asarray(radii, dtype=float)
    mass = local_masses(sigma, radii)
    return float(np.max(mass / (M * radii[None, :] ** alpha)))


def is_alpha_regular(sigma, alpha: float, M: float = QUANT_REGULARITY, radii=None) -> bool:
    """``sigma(B_r(x)) <= M r^alpha`` for all support points and tested radii.

    A GridDensity is checked exactly on its boxes' densities: the mass of a
    ball is at most ``min(total, max density * pi r^2)`` in d = 2 (``2r``
    times the density in d = 1).
    """
    if isinstance(sigma, GridDensity):
        dens = sigma.masses / np.prod(sigma.sides, axis=1)
        radii = 2.0 ** -np.arange(21) if radii is None else np.asarray(radii)
        vol = np.pi * radii**2 if sigma.dim == 2 else 2 * radii
        ball = np.minimum(sigma.total_mass(), dens.max() * vol)
        return bool(np.all(ball <= M * radii**alpha * (1 + 1e-12)))
    radii = default_radii(sigma) if radii is None else radii
    return regularity_defect(sigma, alpha, M, radii) <= 1 + 1e-12


# ---------------------------------------------------------------------------
# quantization
# ---------------------------------------------------------------------------


class QuantizationResult(NamedTuple):
    R: float
    bound: float
    ratio: float
    positions: np.ndarray


def _target_atoms(sigma, grid: int) -> DiscreteMeasure:
    if isinstance(sigma, DiscreteMeasure):
        return sigma
    if isinstance(sigma, GridDensity):
        # exact cell masses of the density on the grid, placed at cell centers
        d = sigma.dim
        edges = np.arange(grid + 1) / grid
        per_axis = []
        for a in range(d):
            lo = np.maximum(edges[:-1][None, :], sigma.lo[:, a][:, None])
            hi = np.minimum(edges[1:][None, :], sigma.hi[:, a][:, None])
            per_axis.append(np.clip(hi - lo, 0, None) / sigma.sides[:, a][:, None])
        if d == 1:
            mass = per_axis[0].T @ sigma.masses
            pos = ((np.arange(grid) + 0.5) / grid)[:, None]
        else:
            mass = np.einsum("bi,bj,b->ij", per_axis[0], per_axis[1], sigma.masses).ravel()
            c = (np.arange(grid) + 0.5) / grid
            a_, b_ = np.meshgrid(c, c, indexing="ij")
            pos = np.column_stack([a_.ravel(), b_.ravel()])
        keep = mass > 0
        return DiscreteMeasure(pos[keep], mass[keep])
    raise TypeError(f"unsupported measure type {type(sigma).__name__}")


def _seed_positions(target: DiscreteMeasure, k: int, rng) -> np.ndarray:
    """k-means++ style seeding on the target atoms (periodic distances)."""
    w = target.masses / target.masses.sum()
    first = rng.choice(len(target), p=w)
    chosen = [target.positions[first]]
    d2 = np.sum(periodic_displacement(target.positions, chosen[0]) ** 2, axis=1)
    for _ in range(1, k):
        p = w * d2
        if p.sum() <= 0:
            idx = rng.choice(len(target), p=w)
        else:
            idx = rng.choice(len(target), p=p / p.sum())
        chosen.append(target.positions[idx])
        d2 = np.minimum(d2, np.sum(periodic_displacement(target.positions, chosen[-1]) ** 2, axis=1))
    return np.array(chosen)


def _lloyd(phi, start, target: DiscreteMeasure, tol=1e-6, max_iter=200):
    """Alternate optimal assignment and periodic barycenters."""
    X = reduce_torus(np.array(start, dtype=float))
    cost = math.inf
    for _ in range(max_iter):
        C = cost_matrix(X, target.positions)
        plan = solve_discrete(phi, target.masses, C, method="highs")
        cost = plan.cost
        shift = np.zeros_like(X)
        disp = periodic_displacement(X[plan.rows], target.positions[plan.cols])
        np.add.at(shift, plan.rows, plan.masses[:, None] * disp)
        shift /= phi[:, None]
        X = reduce_torus(X + shift)
        if np.max(np.abs(shift)) < tol:
            break
    C = cost_matrix(X, target.positions)
    cost = min(cost, solve_discrete(phi, target.masses, C, method="highs").cost)
    return cost, X


def quantization_check(sigma, Phi, alpha: float, grid: int = 32, starts: int = 16,
                       seed: int = 0, initial=None, check: bool = False) -> QuantizationResult:
    """Upper estimate of ``min_X W^2(sum phi_i delta_X_i, sigma)`` and the
    ratio to ``sum phi_i^(1 + 2/alpha)``.

    ``sigma`` must satisfy ``sigma(B_r) <= 4 r^alpha``; densities are
    replaced by their exact masses on the ``grid^d`` cells. The minimum is
    searched by Lloyd iterations (optimal assignment, then periodic
    barycenters) from ``starts`` k-means++ seeds drawn from a Philox stream,
    or from ``initial``. Masses are sorted internally so the result does not
    depend on their order.

    With ``check`` a ratio below ``C_QUANT`` raises ``ValueError``.
    """
    Phi = np.sort(np.asarray(Phi, dtype=float).reshape(-1))[::-1]
    if np.any(Phi <= 0):
        raise ValueError("masses must be positive")
    total = sigma.total_mass()
    if Phi.sum() > total * (1 + 1e-12):
        raise ValueError("masses exceed the mass of sigma")
    if not is_alpha_regular(sigma, alpha):
        raise ValueError("sigma fails the regularity check")
    target = _target_atoms(sigma, grid)
    if Phi.sum() < total * (1 - 1e-12):
        # only part of sigma needs to be matched: scale sigma to the atoms' mass
        target = DiscreteMeasure(target.positions, target.masses * (Phi.sum() / total))
    phi = Phi * (target.total_mass() / Phi.sum())
    rng = np.random.Generator(np.random.Philox(seed))
    inits = [np.asarray(initial, dtype=float)] if initial is not None else [
        _seed_positions(target, len(phi), rng) for _ in range(starts)]
    best = (math.inf, None)
    for X0 in inits:
        cost, X = _lloyd(phi, X0, target)
        if cost < best[0]:
            best = (cost, X)
    bound = math.fsum(Phi ** (1.0 + 2.0 / alpha))
    result = QuantizationResult(best[0], bound, best[0] / bound, best[1])
    if check and result.ratio < C_QUANT:
        raise ValueError(f"quantization ratio {result.ratio:.4g} below {C_QUANT}")
    return result


__all__ = [
    "ScalingFit", "fit_power_law", "lower_dim_bound", "upper_dim_bound",
    "dim_bounds_from_beta", "local_energy_exponent", "box_counting_dimension",
    "default_radii", "local_masses", "prune_alpha_regular", "regularity_defect",
    "is_alpha_regular", "QuantizationResult", "quantization_check",
]
