"""Fast invariant suites, one per module, used by ``branchtorus verify``.

Each suite is a list of ``(name, check)`` pairs where ``check(rng)`` returns
``None`` on success or a short failure message. The checks are small enough
that the whole collection runs in well under a minute.
"""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np

from . import analysis, constructions, core_model, sobolev, toy1d, transport
from .core_model import DiscreteMeasure, GridDensity


def _expect(cond, msg):
    return None if cond else msg


def _random_measure(rng, n, dim):
    return DiscreteMeasure(rng.random((n, dim)), rng.random(n) + 0.1).normalized()


# ---------------------------------------------------------------------------
# core_model
# ---------------------------------------------------------------------------

def _core_distance(rng):
    x, y = rng.random((50, 2)), rng.random((50, 2))
    for a, b in zip(x, y):
        d = core_model.periodic_distance(a, b)
        brute = min(np.linalg.norm(a - b - np.array(z)) for z in np.ndindex(3, 3)
                    for z in [np.array(z) - 1])
        if abs(d - brute) > 1e-12 or d > math.sqrt(2) / 2 + 1e-12:
            return f"periodic distance mismatch at {a}, {b}"
    return None


def _core_roundtrip(rng):
    sol = toy1d.solve_toy(1.0, 0.05)
    back = core_model.BranchedPlan.from_json(sol.plan.to_json())
    return _expect(back.to_json() == sol.plan.to_json(), "plan JSON round trip is lossy")


def _core_trace_mass(rng):
    con = constructions.uniform_branching(2, 0.1, levels=1)
    plan = con.plan
    for t in np.linspace(-plan.T, plan.T, 9):
        if abs(core_model.trace(plan, t).total_mass() - 1.0) > 1e-10:
            return f"trace mass not conserved at t = {t}"
    return None


# ---------------------------------------------------------------------------
# transport
# ---------------------------------------------------------------------------

def _ot_support(rng):
    for _ in range(10):
        n, m, d = int(rng.integers(1, 9)), int(rng.integers(1, 9)), int(rng.integers(1, 3))
        mu, nu = _random_measure(rng, n, d), _random_measure(rng, m, d)
        plan = transport.w2_periodic_discrete(mu, nu)
        if plan.support_size > n + m - 1:
            return "support exceeds n + m - 1"
        if abs(plan.cost - transport.dense_lp_cost(mu, nu)) > 1e-9:
            return "cost differs from the dense LP"
    return None


def _ot_1d_closed_form(rng):
    for N in (1, 2, 4, 8):
        atoms = DiscreteMeasure.uniform_grid(N, dim=1)
        if abs(transport.w2_to_lebesgue_1d(atoms) - 1.0 / (12 * N * N)) > 1e-9:
            return f"W2 to Lebesgue wrong for N = {N}"
    return None


# ---------------------------------------------------------------------------
# sobolev
# ---------------------------------------------------------------------------

def _sobolev_two_mode(rng):
    tab = sobolev.FourierTable.from_modes(1, 1, {(1,): 0.5, (-1,): 0.5})
    h, _ = sobolev.h_negative_norm_sq(tab, 1.0)
    s = sobolev.semigroup_norm_sq(tab, 1.0)
    return _expect(h > 0 and abs(h / s - 3.0) < 1e-12, "two-mode ratio is not 2 gamma + 1")


def _sobolev_lebesgue_zero(rng):
    tab = sobolev.fourier_of_measure(GridDensity.lebesgue(2), 8)
    value, _ = sobolev.h_negative_norm_sq(tab, 0.5)
    return _expect(value < 1e-24, "Lebesgue measure has nonzero norm")


def _sobolev_damping(rng):
    tab = sobolev.fourier_of_measure(_random_measure(rng, 6, 2), 12)
    for eta in (0.0, 0.1, 0.4):
        damped = sobolev.shear_damping(tab, eta, 1)
        a, _ = sobolev.h_negative_norm_sq(damped, 0.5)
        b, _ = sobolev.h_negative_norm_sq(tab, 0.5)
        if a > b * (1 + 1e-12):
            return f"shear damping increased the norm at eta = {eta}"
    return None


# ---------------------------------------------------------------------------
# toy1d
# ---------------------------------------------------------------------------

def _toy_pure_segments(rng):
    sol = toy1d.solve_toy(0.1, 0.01)
    exact = 2.0 * (0.01 + 0.1 / 12.0)
    return _expect(sol.is_pure_segments and sol.N == 1 and abs(sol.E_upper - exact) < 1e-9,
                   "pure-segment optimum not recovered")


def _toy_cone_equipartition(rng):
    sol = toy1d.solve_toy(20.0, 0.2, grid=16)
    if toy1d.check_cone_property(sol.plan, 20.0):
        return "cone property violated"
    bar, dev = toy1d.equipartition_residual(sol.plan, power=0.0)
    if dev > 1e-3 * bar:
        return "equipartition deviation too large"
    E_eul = toy1d.toy_energy_of_plan(sol.plan, 20.0)
    E_lag = toy1d.lagrangian_energy(toy1d.lagrangian_field(sol.plan, 20.0))
    return _expect(abs(E_eul - E_lag) <= 1e-6 * E_eul, "Lagrangian and Eulerian energies differ")


def _toy_bounds(rng):
    for lam, T in rng.uniform([0.5, 0.01], [50.0, 1.0], size=(3, 2)):
        sol = toy1d.solve_toy(lam, T, grid=16)
        if sol.E_upper < sol.E_lower * (1 - 1e-9):
            return f"upper value below the lower bound at ({lam}, {T})"
    return None


# ---------------------------------------------------------------------------
# constructions
# ---------------------------------------------------------------------------

def _cons_uniform(rng):
    con = constructions.uniform_branching(constructions.uniform_cell_count(1e-2), 1e-2)
    return _expect(con.certificate.passed, "uniform branching certificate failed")


def _cons_dyadic(rng):
    mu, nu = _random_measure(rng, 10, 2), _random_measure(rng, 10, 2)
    con = constructions.dyadic_interpolation(mu, nu, 1e-3)
    return _expect(con.certificate.passed and con.certificate.extra["support_ok"],
                   "dyadic interpolation certificate failed")


def _cons_shear_zero(rng):
    con = constructions.uniform_branching(2, 0.1, levels=1)
    _, dI, _, _ = constructions.shear_competitor(con.plan, 0.0, 0.01)
    return _expect(abs(dI) < 1e-12, "shear with eta = 0 changed the energy")


# ---------------------------------------------------------------------------
# analysis
# ---------------------------------------------------------------------------

def _ana_bounds(rng):
    lo, hi = analysis.dim_bounds_from_beta(Fraction(3, 7))
    if lo != Fraction(8, 5) or hi != Fraction(8, 5):
        return "f(3/7) or g(3/7) differs from 8/5"
    if analysis.dim_bounds_from_beta(Fraction(1, 3)) != (Fraction(3, 2), Fraction(2)):
        return "bounds at 1/3 differ from (3/2, 2)"
    betas = np.linspace(1e-3, 0.999, 1000)
    f = np.array([analysis.lower_dim_bound(b) for b in betas])
    g = np.array([analysis.upper_dim_bound(b) for b in betas])
    return _expect(np.all(np.diff(f) > 0) and np.all(np.diff(g) <= 0), "monotonicity of f/g fails")


def _ana_grid_dimension(rng):
    fit = analysis.box_counting_dimension(DiscreteMeasure.uniform_grid(16), 2.0 ** -np.arange(1, 5))
    return _expect(abs(fit.exponent - 2.0) < 0.05, "box dimension of a grid is not 2")


def _ana_prune(rng):
    sigma = _random_measure(rng, 40, 2)
    out = analysis.prune_alpha_regular(sigma, 1.5, 4.0)
    if len(out) == 0:
        return None
    radii = analysis.default_radii(sigma)
    return _expect(analysis.regularity_defect(out, 1.5, 4.0, radii) <= 1 + 1e-12,
                   "pruned measure violates the local mass bound")


SUITES = {
    "core_model": [("periodic distance", _core_distance), ("plan round trip", _core_roundtrip),
                   ("trace mass", _core_trace_mass)],
    "transport": [("sparse support and LP agreement", _ot_support),
                  ("1d closed forms", _ot_1d_closed_form)],
    "sobolev": [("two-mode ratio", _sobolev_two_mode), ("Lebesgue norm", _sobolev_lebesgue_zero),
                ("shear damping", _sobolev_damping)],
    "toy1d": [("pure segments", _toy_pure_segments),
              ("cone, equipartition, Lagrangian", _toy_cone_equipartition),
              ("upper vs lower bound", _toy_bounds)],
    "constructions": [("uniform certificate", _cons_uniform), ("dyadic certificate", _cons_dyadic),
                      ("zero shear", _cons_shear_zero)],
    "analysis": [("dimension bounds", _ana_bounds), ("grid box dimension", _ana_grid_dimension),
                 ("pruning", _ana_prune)],
}


def run_suite(name: str, seed: int = 0) -> list[dict]:
    """Run one suite (or ``"all"``) and return one record per check."""
    names = list(SUITES) if name == "all" else [name]
    out = []
    for suite in names:
        if suite not in SUITES:
            raise KeyError(suite)
        for k, (label, check) in enumerate(SUITES[suite]):
            rng = np.random.Generator(np.random.Philox(key=seed, counter=[k, 0, 0, 0]))
            try:
                msg = check(rng)
            except Exception as exc:  # a crashing check is a failed check
                msg = f"{type(exc).__name__}: {exc}"
            out.append({"suite": suite, "check": label, "pass": msg is None, "message": msg or ""})
    return out
