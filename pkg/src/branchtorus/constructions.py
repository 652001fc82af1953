"""Explicit competitors with certified energy bounds.

Every builder re-evaluates the energy of what it built and compares it with
the corresponding upper bound, using a constant from :mod:`constants`. A
builder that cannot certify raises :class:`CertificationError`.

All plans are symmetric in time unless stated otherwise: the construction
is made on ``[0, T]`` and reflected.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import constants as K
from .core_model import (BranchedPlan, DiscreteMeasure, GridDensity,
                         internal_energy, mirror_plan, periodic_displacement,
                         reduce_torus, trace, validate)
from .sobolev import FourierTable, fourier_of_measure, h_negative_norm_sq, shear_damping
from .transport import mccann_interpolate, w2_periodic_discrete

DELTA_BLOCK = 1.0 / 3.0
MASS_TOL = 1e-10


class CertificationError(RuntimeError):
    """A construction failed to satisfy its certified bound."""


@dataclass(frozen=True)
class Certificate:
    """Energy report of a construction.

    ``value`` is the certified quantity (for instance perimeter + kinetic +
    tail) and must not exceed ``bound = constant * reference``.
    """

    kind: str
    perimeter: float
    kinetic: float
    value: float
    reference: float
    constant: float
    tail: float = 0.0
    extra: dict = field(default_factory=dict)

    @property
    def bound(self) -> float:
        return self.constant * self.reference

    @property
    def passed(self) -> bool:
        return bool(self.value <= self.bound)

    @property
    def ratio(self) -> float:
        return self.value / self.reference if self.reference > 0 else math.inf

    def to_dict(self) -> dict:
        out = {
            "kind": self.kind,
            "perimeter": self.perimeter,
            "kinetic": self.kinetic,
            "tail": self.tail,
            "value": self.value,
            "bound": self.bound,
            "constant": self.constant,
            "pass": self.passed,
        }
        out.update(self.extra)
        return out


@dataclass(frozen=True)
class Construction:
    """A built plan with its certificate.

    ``trace_density`` describes the limiting trace at ``t = T`` when the plan
    itself only carries a finite discretization of it.
    """

    plan: BranchedPlan
    certificate: Certificate
    trace_density: GridDensity | None = None
    params: dict = field(default_factory=dict)


def _certify(cert: Certificate) -> Certificate:
    if not cert.passed:
        raise CertificationError(
            f"{cert.kind}: value {cert.value:.6g} exceeds {cert.constant:g} x {cert.reference:.6g}")
    return cert


def _check_valid(plan: BranchedPlan):
    bad = validate(plan)
    if bad:
        raise CertificationError(f"constructed plan is invalid: {bad[0]}")


# ---------------------------------------------------------------------------
# building block
# ---------------------------------------------------------------------------


class _Builder:
    """Node/edge accumulator for plans on ``[0, T]``."""

    def __init__(self, dim):
        self.dim = dim
        self.times, self.pos, self.tails, self.heads, self.flux = [], [], [], [], []

    def node(self, t, x):
        self.times.append(float(t))
        self.pos.append(np.asarray(x, dtype=float))
        return len(self.times) - 1

    def edge(self, a, b, phi):
        self.tails.append(a)
        self.heads.append(b)
        self.flux.append(float(phi))

    def plan(self, T):
        pos = np.array(self.pos).reshape(-1, self.dim)
        return BranchedPlan(self.times, pos, self.tails, self.heads, self.flux, T)


def _local_coords(positions, origin, r, tol=1e-12):
    """Coordinates of torus points inside the cube ``origin + [0, r]^d``."""
    center = np.asarray(origin, dtype=float) + r / 2.0
    local = periodic_displacement(center, positions) + r / 2.0
    if np.any(local < -tol) or np.any(local > r + tol):
        raise ValueError("measure not supported in the cube")
    return np.clip(local, 0.0, r)


def _refine(b: _Builder, root, t_root, lo, side, pts, mass, T, delta, level, origin):
    """Dyadic refinement from ``root`` toward the atoms ``pts`` (local coords)."""
    dim = b.dim
    if len(pts) == 1:
        b.edge(root, b.node(T, origin + pts[0]), mass[0])
        return
    if level > 60:
        for p, m in zip(pts, mass):
            b.edge(root, b.node(T, origin + p), m)
        return
    half = side / 2.0
    t_next = T * (1.0 - delta ** (level + 1))
    cell = np.minimum(np.floor((pts - lo) / half).astype(int), 1)
    cell = np.maximum(cell, 0)
    code = cell @ (2 ** np.arange(dim))
    for c in range(2 ** dim):
        sel = code == c
        if not np.any(sel):
            continue
        offs = np.array([(c >> a) & 1 for a in range(dim)], dtype=float)
        sub_lo = lo + offs * half
        phi = float(np.sum(mass[sel]))
        if np.count_nonzero(sel) == 1:
            b.edge(root, b.node(T, origin + pts[sel][0]), phi)
            continue
        child = b.node(t_next, origin + sub_lo + half / 2.0)
        b.edge(root, child, phi)
        _refine(b, child, t_next, sub_lo, half, pts[sel], mass[sel], T, delta,
                level + 1, origin)


def _half_block(origin, r, T, mu: DiscreteMeasure, delta=DELTA_BLOCK) -> BranchedPlan:
    """Plan on ``[0, T]`` from the cube center to ``mu`` at time T.

    A vertical trunk at the center lasts until ``T (1 - delta)``, where the
    first dyadic split happens.
    """
    origin = np.asarray(origin, dtype=float).reshape(-1)
    pts = _local_coords(mu.positions, origin, r)
    mass = np.asarray(mu.masses)
    b = _Builder(mu.dim)
    center = origin + r / 2.0
    root = b.node(0.0, center)
    if len(pts) == 1:
        b.edge(root, b.node(T, origin + pts[0]), mass[0])
        return b.plan(T)
    top = b.node(T * (1.0 - delta), center)
    b.edge(root, top, float(np.sum(mass)))
    _refine(b, top, 0.0, np.zeros(mu.dim), r, pts, mass, T, delta, 1, origin)
    return b.plan(T)


def _join_halves(lower: BranchedPlan, upper: BranchedPlan) -> BranchedPlan:
    """Upper half as is, lower half reflected; both share their root (node 0)."""
    low = mirror_plan(lower)
    keep = np.flatnonzero(low.times <= 0.0)
    index = -np.ones(low.n_nodes, dtype=int)
    index[keep] = np.arange(len(keep))
    e_keep = np.flatnonzero(low.times[low.tails] < 0.0)
    times = np.concatenate([low.times[keep], upper.times[1:]])
    pos = np.concatenate([low.positions[keep], upper.positions[1:]])
    shift = len(keep) - 1
    up_index = np.concatenate([[index[0]], np.arange(1, upper.n_nodes) + shift])
    tails = np.concatenate([index[low.tails[e_keep]], up_index[upper.tails]])
    heads = np.concatenate([index[low.heads[e_keep]], up_index[upper.heads]])
    flux = np.concatenate([low.fluxes[e_keep], upper.fluxes])
    return BranchedPlan(times, pos, tails, heads, flux, upper.T)


def uniform_cell_atoms(origin, r, mass, levels, dim=2) -> DiscreteMeasure:
    """``2^(levels d)`` equal atoms at the centers of a dyadic partition of
    the cube ``origin + [0, r]^d``."""
    n = 2**levels
    c = (np.arange(n) + 0.5) * r / n
    if dim == 1:
        pts = c[:, None]
    else:
        a, bb = np.meshgrid(c, c, indexing="ij")
        pts = np.column_stack([a.ravel(), bb.ravel()])
    pts = reduce_torus(np.asarray(origin, dtype=float) + pts)
    return DiscreteMeasure(pts, np.full(len(pts), mass / n**dim))


def refinement_tail(Phi, r, T, levels, dim=2, delta=DELTA_BLOCK) -> float:
    """Energy gap between the infinite dyadic refinement toward the uniform
    density on a cube and its truncation after ``levels`` levels, for one
    half block.

    Stage ``k >= 1`` lasts ``T (1 - delta) delta^k`` and moves ``2^(k d)``
    branches by ``r 2^(-k-1)`` per axis; the truncated plan replaces all
    stages ``k >= levels`` by one stage of duration ``T delta^levels``.
    """
    if levels < 1:
        raise ValueError("levels must be at least 1")
    L = levels
    p = Phi ** ((dim - 1) / dim)
    q = 1.0 / (4.0 * delta)
    per_inf = T * (1 - delta) * (2 * delta) ** L / (1 - 2 * delta) * p
    kin_inf = Phi * dim * r * r / (4.0 * T * (1 - delta)) * q**L / (1 - q)
    per_last = T * delta**L * 2**L * p
    kin_last = Phi * dim * r * r * 4.0 ** (-L - 1) / (T * delta**L)
    return (per_inf - per_last) + (kin_inf - kin_last)


def building_block(Phi: float, r: float, T: float, mu_minus: DiscreteMeasure,
                   mu_plus: DiscreteMeasure, origin=None, certify: bool = True) -> Construction:
    """Tree connecting ``mu_minus`` at ``-T`` to ``mu_plus`` at ``T`` inside a cube.

    The cube is ``origin + [0, r]^d`` (centered in the unit torus by
    default). A root sits at the cube center at ``t = 0``; toward each
    boundary the cube is split dyadically at times ``T (1 - delta^k)`` with
    ``delta = 1/3``, nodes at sub-cube centers, until a sub-cube holds a
    single atom, which is then reached by a straight edge.

    Certifies ``I <= C_BB (T Phi^((d-1)/d) + r^2 Phi / T)``.
    """
    dim = mu_plus.dim
    if mu_minus.dim != dim:
        raise ValueError("dimension mismatch")
    if not (r > 0 and T > 0 and Phi > 0):
        raise ValueError("Phi, r and T must be positive")
    for mu in (mu_minus, mu_plus):
        if abs(mu.total_mass() - Phi) > MASS_TOL:
            raise ValueError("boundary measures must carry mass Phi")
    if origin is None:
        origin = np.full(dim, 0.5 - r / 2.0)
    origin = np.asarray(origin, dtype=float).reshape(dim)
    try:
        up = _half_block(origin, r, T, mu_plus)
        low = _half_block(origin, r, T, mu_minus)
    except ValueError as exc:
        raise ValueError(f"support outside the cube: {exc}") from None
    plan = _join_halves(low, up)
    e = internal_energy(plan)
    ref = T * Phi ** ((dim - 1) / dim) + r * r * Phi / T
    cert = Certificate("block", e.perimeter, e.kinetic, e.perimeter + e.kinetic, ref, K.C_BB)
    if certify:
        _check_valid(plan)
        _certify(cert)
    return Construction(plan, cert, params={"Phi": Phi, "r": r, "T": T})


def _tile(cell: BranchedPlan, offsets: np.ndarray) -> BranchedPlan:
    """Disjoint translated copies of one plan."""
    n, c = cell.n_nodes, len(offsets)
    shift = (np.arange(c) * n)[:, None]
    pos = (cell.positions[None, :, :] + offsets[:, None, :]).reshape(-1, cell.dim)
    return BranchedPlan(np.tile(cell.times, c), pos,
                        (cell.tails[None, :] + shift).ravel(),
                        (cell.heads[None, :] + shift).ravel(),
                        np.tile(cell.fluxes, c), cell.T)


def _cells_plan(N, r, T, levels, dim=2):
    """One half block per cell, tiled over the grid and reflected."""
    Phi = 1.0 / N**dim
    idx = np.arange(N)
    if dim == 1:
        centers = ((idx + 0.5) / N)[:, None]
    else:
        a, b = np.meshgrid(idx, idx, indexing="ij")
        centers = (np.column_stack([a.ravel(), b.ravel()]) + 0.5) / N
    origin = np.full(dim, 0.5 - r / 2.0)
    cell = _half_block(origin, r, T, uniform_cell_atoms(origin, r, Phi, levels, dim))
    upper = _tile(cell, centers - 0.5)
    tail = 2 * len(centers) * refinement_tail(Phi, r, T, levels, dim)
    return mirror_plan(upper), centers, Phi, tail


def uniform_branching(N: int, T: float, levels: int = 2, dim: int = 2,
                      certify: bool = True) -> Construction:
    """Cells of side ``1/N``, each refined from its center at ``t = 0`` to the
    uniform density at ``t = +-T``.

    The plan stops after ``levels`` dyadic levels (``2^(levels d)`` atoms per
    cell); the energy of the remaining refinement is added as an analytic
    tail. Certifies ``I + tail <= C_UNIFORM (N T + 1 / (T N^2))``.
    """
    if N < 1:
        raise ValueError("N must be at least 1")
    return _branching(N, 1.0 / N, T, levels, dim, K.C_UNIFORM,
                      N * T + 1.0 / (T * N * N), "uniform", certify)


def nonuniform_branching(N: int, r: float, T: float, levels: int = 2, dim: int = 2,
                         certify: bool = True) -> Construction:
    """Like :func:`uniform_branching` but each cell only irrigates the
    centered sub-square of side ``r <= 1/N``, with density ``1 / (N r)^d``.

    Certifies ``I + tail <= C_NONUNIFORM (N T + r^2 / T)``.
    """
    if N < 1:
        raise ValueError("N must be at least 1")
    if not 0 < r <= 1.0 / N * (1 + 1e-12):
        raise ValueError("r must lie in (0, 1/N]")
    r = min(r, 1.0 / N)
    return _branching(N, r, T, levels, dim, K.C_NONUNIFORM, N * T + r * r / T,
                      "nonuniform", certify)


def _branching(N, r, T, levels, dim, C, ref, kind, certify):
    if T <= 0:
        raise ValueError("T must be positive")
    plan, centers, Phi, tail = _cells_plan(N, r, T, levels, dim)
    e = internal_energy(plan)
    cert = Certificate(kind, e.perimeter, e.kinetic, e.perimeter + e.kinetic + tail, ref, C, tail,
                       extra={"N": N, "r": r, "T": T})
    if certify:
        _check_valid(plan)
        _certify(cert)
    density = GridDensity.centered_boxes(centers, r, np.full(len(centers), Phi))
    return Construction(plan, cert, density, {"N": N, "r": r, "T": T, "levels": levels})


def trace_norm_sq(density: GridDensity, N: int = 1, resolution: float = 16.0) -> tuple[float, float]:
    """``||density - 1||^2`` in ``H^(-1/2)`` with its tail bound.

    ``N`` is the period of the density (modes off ``N Z^d`` vanish). The
    table is truncated at ``K_max ~ resolution / min side``.
    """
    side = float(np.min(density.sides))
    if side >= 1.0 - 1e-12:
        return 0.0, 0.0
    K_max = max(N, int(math.ceil(resolution / side)))
    if density.dim == 2:
        K_max = min(K_max, N * 1200)
    tab = fourier_of_measure(density, K_max, period=N)
    value, tail = h_negative_norm_sq(tab, 0.5)
    return float(value), float(tail)


def composite_energy(con: Construction, lam: float) -> dict:
    """``E = I + lam (||mu_T - 1||^2 + ||mu_-T - 1||^2)`` for a symmetric
    construction, using its limiting trace density."""
    N = int(con.params.get("N", 1))
    if con.trace_density is None:
        raise ValueError("construction has no trace density")
    value, tail = trace_norm_sq(con.trace_density, N)
    c = con.certificate
    I = c.perimeter + c.kinetic + c.tail
    return {"I": I, "norm_sq": value, "norm_tail": tail,
            "E": I + 2.0 * lam * (value + tail)}


# ---------------------------------------------------------------------------
# parameter choice
# ---------------------------------------------------------------------------


def uniform_cell_count(T: float) -> int:
    """``round(T^(-2/3))``, the balance of ``N T`` and ``1 / (T N^2)``."""
    return max(1, round(T ** (-2.0 / 3.0)))


def choose_parameters(lam: float, T: float) -> tuple[int, float, str]:
    """Cell count, sub-square size and regime of the scaling constructions.

    ``thick`` for ``T >= 1``; ``small-lambda`` for ``lam <= T^2 / 10`` with
    ``N = 1`` and ``r = (lam T)^(1/3)``; otherwise ``branching`` with
    ``N = round(lam^(2/7) T^(-4/7))`` and ``r = min(lam^(1/7) T^(5/7), 1/N)``,
    or the uniform choice ``N = round(T^(-2/3))``, ``r = 1/N`` when that is
    predicted to be cheaper.
    """
    if lam <= 0 or T <= 0:
        raise ValueError("lam and T must be positive")
    if T >= 1:
        return 1, 1.0, "thick"
    if lam <= T * T / 10.0:
        return 1, min(1.0, (lam * T) ** (1.0 / 3.0)), "small-lambda"
    if T ** (1.0 / 3.0) <= lam ** (2.0 / 7.0) * T ** (3.0 / 7.0):
        N = uniform_cell_count(T)
        return N, 1.0 / N, "branching"
    N = max(1, round(lam ** (2.0 / 7.0) * T ** (-4.0 / 7.0)))
    r = min(lam ** (1.0 / 7.0) * T ** (5.0 / 7.0), 1.0 / N)
    return N, r, "branching"


def scaling_construction(lam: float, T: float, levels: int = 2, certify: bool = True) -> Construction:
    """The construction selected by :func:`choose_parameters`, certified on
    its full energy against ``C_SCALING`` times the predicted scaling."""
    N, r, regime = choose_parameters(lam, T)
    con = nonuniform_branching(N, r, T, levels=levels, certify=certify)
    E = composite_energy(con, lam)
    if regime == "thick":
        ref = T
    elif regime == "small-lambda":
        # the perimeter of the single trunk costs at least T
        ref = T + lam ** (2.0 / 3.0) * T ** (-1.0 / 3.0)
    else:
        ref = min(T ** (1.0 / 3.0), lam ** (2.0 / 7.0) * T ** (3.0 / 7.0))
    cert = Certificate("scaling", con.certificate.perimeter, con.certificate.kinetic, E["E"],
                       ref, K.C_SCALING, con.certificate.tail,
                       extra={"N": N, "r": r, "regime": regime, "lambda": lam, "T": T,
                              "norm_sq": E["norm_sq"], "norm_tail": E["norm_tail"]})
    if certify:
        _certify(cert)
    return Construction(con.plan, cert, con.trace_density, {**con.params, "regime": regime})


# ---------------------------------------------------------------------------
# dyadic interpolation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DyadicSchedule:
    """Times ``t_k``, grids ``N_k = 2^k N_0`` and mesh sizes ``r_k = 1/N_k``.

    ``t_0 = 0`` and ``t_k = t_(k-1) + (1 - delta) T delta^(k-1)``; the last
    level ``K`` is the first with ``r_K < r_min`` (or ``K = K_max``).
    """

    delta: float
    T: float
    N0: int
    K: int

    def __post_init__(self):
        if not 0.25 < self.delta < 0.5:
            raise ValueError("delta must lie in (1/4, 1/2)")
        if self.T <= 0 or self.N0 < 1 or self.K < 0:
            raise ValueError("invalid schedule")

    @classmethod
    def build(cls, T, delta, r_min=1e-6, K_max=40):
        N0 = max(1, round(T ** (-2.0 / 3.0)))
        K = 0
        while 1.0 / (N0 * 2**K) >= r_min and K < K_max:
            K += 1
        return cls(delta, T, N0, K)

    @property
    def times(self) -> np.ndarray:
        k = np.arange(self.K + 1)
        return self.T * (1.0 - self.delta**k)

    @property
    def grids(self) -> np.ndarray:
        return self.N0 * 2 ** np.arange(self.K + 1, dtype=np.int64)

    @property
    def mesh(self) -> np.ndarray:
        return 1.0 / self.grids


def discretize_on_grid(mu: DiscreteMeasure, N: int) -> DiscreteMeasure:
    """Move the mass of every cell of the ``N^d`` grid to its center.

    A coordinate exactly on a cell boundary belongs to the lower cell.
    """
    x = mu.positions * N
    j = np.floor(x).astype(np.int64)
    on_edge = (x == j) & (j > 0)
    j = np.where(on_edge, j - 1, j) % N
    code = j[:, 0] if mu.dim == 1 else j[:, 0] * N + j[:, 1]
    uniq, inv = np.unique(code, return_inverse=True)
    mass = np.zeros(len(uniq))
    np.add.at(mass, inv, mu.masses)
    if mu.dim == 1:
        cells = uniq[:, None]
    else:
        cells = np.column_stack([uniq // N, uniq % N])
    return DiscreteMeasure((cells + 0.5) / N, mass)


def dyadic_interpolation(mu_minus: DiscreteMeasure, mu_plus: DiscreteMeasure, T: float,
                         delta: float = 0.3, eta: float = 0.5, r_min: float = 1e-6,
                         K_max: int = 40, certify: bool = True) -> Construction:
    """Discretized displacement interpolation between two probability measures.

    An optimal plan between the endpoints gives the interpolant ``mu^t`` on
    ``[-T, T]``. At the times ``+-t_k`` of a :class:`DyadicSchedule`,
    ``mu^t`` is collapsed onto the centers of the ``N_k`` grid, and
    consecutive levels are joined by sparse optimal plans. A final sparse
    plan closes each side onto the exact endpoint. For ``T >= 1`` the
    building block with ``r = 1`` is used instead.

    The certificate holds ``E_cin`` and ``P`` on ``(0, T)``, ``W^2`` of the
    endpoints and the per-stage support counts, and checks
    ``P <= C T^(1/3)``, ``E_cin - (1 + eta) W^2 / (4T) <= (C / eta) T^(1/3)``
    and ``M(t) <= M(t_k) + M(t_(k+1))`` with ``C = C_DYADIC``.
    """
    for mu in (mu_minus, mu_plus):
        if abs(mu.total_mass() - 1.0) > MASS_TOL:
            raise ValueError("endpoints must be probability measures")
    if mu_minus.dim != mu_plus.dim:
        raise ValueError("dimension mismatch")
    if not 0 < eta < 1:
        raise ValueError("eta must lie in (0, 1)")
    if T <= 0:
        raise ValueError("T must be positive")
    W2 = w2_periodic_discrete(mu_minus, mu_plus).cost
    if T >= 1:
        con = building_block(1.0, 1.0, T, mu_minus, mu_plus, origin=np.zeros(mu_plus.dim),
                             certify=certify)
        return con
    sched = DyadicSchedule.build(T, delta, r_min, K_max)
    pi = w2_periodic_discrete(mu_minus, mu_plus)
    b = _Builder(mu_plus.dim)
    support = []
    level_ids = {}

    def level(sign, k):
        t = sign * sched.times[k]
        s = (t + T) / (2.0 * T)
        if k == 0:
            s = 0.5
        disc = discretize_on_grid(mccann_interpolate(pi, mu_minus, mu_plus, s), int(sched.grids[k]))
        return disc

    # nodes of every level; level 0 is shared by both sides
    measures = {(1, 0): level(1, 0)}
    level_ids[(1, 0)] = [b.node(0.0, x) for x in measures[(1, 0)].positions]
    measures[(-1, 0)] = measures[(1, 0)]
    level_ids[(-1, 0)] = level_ids[(1, 0)]
    for sign in (1, -1):
        end = mu_plus if sign > 0 else mu_minus
        for k in range(1, sched.K + 2):
            if k <= sched.K:
                m = level(sign, k)
                t = sign * sched.times[k]
            else:
                m, t = end, sign * T
            measures[(sign, k)] = m
            level_ids[(sign, k)] = [b.node(t, x) for x in m.positions]
            prev = measures[(sign, k - 1)]
            plan = w2_periodic_discrete(prev, m)
            a_ids, b_ids = level_ids[(sign, k - 1)], level_ids[(sign, k)]
            for i, j, w in zip(plan.rows, plan.cols, plan.masses):
                if sign > 0:
                    b.edge(a_ids[i], b_ids[j], w)
                else:
                    b.edge(b_ids[j], a_ids[i], w)
            if sign > 0:
                t0 = sched.times[k - 1]
                t1 = sched.times[k] if k <= sched.K else T
                support.append({"k": k - 1, "t0": float(t0), "t1": float(t1),
                                "M_k": len(prev), "M_k1": len(m), "plan_support": plan.support_size})
    plan = b.plan(T)
    for st in support:
        st["M_mid"] = len(trace(plan, 0.5 * (st["t0"] + st["t1"])))
    support_ok = all(st["M_mid"] <= st["M_k"] + st["M_k1"] for st in support)
    e = internal_energy(plan, 0.0, T)
    excess = e.kinetic - (1.0 + eta) * W2 / (4.0 * T)
    scale = T ** (1.0 / 3.0)
    cert_P = Certificate("dyadic-perimeter", e.perimeter, e.kinetic, e.perimeter, scale, K.C_DYADIC)
    cert_E = Certificate("dyadic-kinetic", e.perimeter, e.kinetic, excess, scale / eta, K.C_DYADIC)
    cert = Certificate(
        "dyadic", e.perimeter, e.kinetic, max(cert_P.ratio, cert_E.ratio), 1.0, K.C_DYADIC,
        extra={"W2": W2, "kinetic_excess": excess, "perimeter_ratio": cert_P.ratio,
               "kinetic_ratio": cert_E.ratio, "support_ok": support_ok, "stages": support,
               "delta": delta, "eta": eta, "T": T, "N0": sched.N0, "K": sched.K})
    if certify:
        _check_valid(plan)
        if not support_ok:
            raise CertificationError("per-stage support bound violated")
        _certify(cert)
    return Construction(plan, cert, params={"T": T, "delta": delta, "eta": eta,
                                            "N0": sched.N0, "K": sched.K})


# ---------------------------------------------------------------------------
# shear competitor
# ---------------------------------------------------------------------------


def shear_competitor(plan: BranchedPlan, eta: float, eps: float, axis: int = 1,
                     certify: bool = True):
    """Replace the plan near both boundaries by two sheared half copies.

    On ``T - eps < |t| <= T`` every branch is split into two halves moving
    with the extra velocities ``+-(eta / eps) e_axis`` (the displacement
    grows linearly from zero at ``|t| = T - eps``). The traces at ``+-T``
    become the average of the two translates by ``+-eta e_axis``.

    Returns
    -------
    new_plan : BranchedPlan
    delta_I : float
        ``I(new) - I(plan)``; certified against
        ``C_SHEAR (P(plan, eps) + eta^2 / eps)`` where ``P(plan, eps)`` is
        the perimeter on both boundary layers.
    transform : callable
        Maps the Fourier table of ``mu_T - 1`` to that of the new trace.
    """
    if not 0 < eps < plan.T:
        raise ValueError("eps must lie in (0, T)")
    if axis < 1 or axis > plan.dim:
        raise ValueError("axis out of range")
    T = plan.T
    e = np.zeros(plan.dim)
    e[axis - 1] = 1.0
    cut = T - eps
    if eta == 0:
        new = plan
    else:
        new = _shear(plan, eta, eps, e, cut)
    I0 = internal_energy(plan).total
    I1 = internal_energy(new).total
    layer = internal_energy(plan, cut, T).perimeter + internal_energy(plan, -T, -cut).perimeter
    ref = layer + 2.0 * eta * eta / eps
    cert = Certificate("shear", 0.0, 0.0, I1 - I0, ref, K.C_SHEAR,
                       extra={"eta": eta, "eps": eps, "axis": axis})
    if certify:
        _check_valid(new)
        _certify(cert)

    def transform(tab: FourierTable) -> FourierTable:
        return shear_damping(tab, eta, axis)

    return new, I1 - I0, transform, cert


def _shear(plan, eta, eps, e, cut):
    times = plan.times
    # cut every edge crossing |t| = cut
    t_list = list(times)
    p_list = list(plan.positions)
    tails, heads, flux = [], [], []
    disp = plan.edge_displacements()
    for k, (a, b) in enumerate(zip(plan.tails, plan.heads)):
        ta, tb = times[a], times[b]
        pts = [c for c in (-cut, cut) if ta < c < tb]
        chain = [a]
        for c in pts:
            s = (c - ta) / (tb - ta)
            t_list.append(c)
            p_list.append(plan.positions[a] + s * disp[k])
            chain.append(len(t_list) - 1)
        chain.append(b)
        for u, v in zip(chain[:-1], chain[1:]):
            tails.append(u)
            heads.append(v)
            flux.append(plan.fluxes[k])
    t_arr = np.array(t_list)
    P = np.array(p_list)
    outer = np.abs(t_arr) > cut + 1e-15
    n = len(t_arr)
    copy = {1: np.arange(n), -1: np.arange(n)}
    shift = (np.abs(t_arr) - cut).clip(0)[:, None] * (eta / eps) * e
    extra = np.flatnonzero(outer)
    copy[-1][extra] = n + np.arange(len(extra))
    new_t = [t_arr, t_arr[extra]]
    new_p = [P + shift, P[extra] - shift[extra]]
    T2, H2, F2 = [], [], []
    for u, v, f in zip(tails, heads, flux):
        if outer[u] or outer[v]:
            for sgn in (1, -1):
                T2.append(copy[sgn][u])
                H2.append(copy[sgn][v])
                F2.append(f / 2.0)
        else:
            T2.append(u)
            H2.append(v)
            F2.append(f)
    return BranchedPlan(np.concatenate(new_t), np.concatenate(new_p), T2, H2, F2, plan.T)


__all__ = [
    "CertificationError", "Certificate", "Construction", "building_block",
    "uniform_cell_atoms", "refinement_tail", "uniform_branching", "nonuniform_branching",
    "trace_norm_sq", "composite_energy", "uniform_cell_count", "choose_parameters", "scaling_construction",
    "DyadicSchedule", "discretize_on_grid", "dyadic_interpolation", "shear_competitor",
]
