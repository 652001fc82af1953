"""Branched transport plans on the flat torus and their internal energy.

A plan is stored as a finite graph in time-space: nodes carry a time and a
torus position, edges carry a constant mass flux and move affinely between
their endpoints. Everything here is a pure function of immutable values.
"""

from __future__ import annotations

import json
import math
from collections import defaultdict, deque
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

KIRCHHOFF_TOL = 1e-12
MERGE_TOL = 1e-12


# ---------------------------------------------------------------------------
# torus geometry
# ---------------------------------------------------------------------------

def reduce_torus(x):
    """Reduce coordinates to [0, 1)."""
    y = np.mod(np.asarray(x, dtype=float), 1.0)
    # np.mod(-1e-18, 1) == 1.0 in floating point
    return np.where(y >= 1.0, 0.0, y)


def periodic_displacement(x, y, tie="negative"):
    """Minimal displacement ``y - x`` on the torus, coordinatewise.

    Exactly antipodal coordinates (difference 1/2) are resolved by ``tie``:
    ``"negative"`` gives -1/2 (lexicographically smallest lift), ``"positive"``
    gives +1/2.
    """
    d = np.asarray(y, dtype=float) - np.asarray(x, dtype=float)
    if tie == "negative":
        return d - np.floor(d + 0.5)
    if tie == "positive":
        return d - np.ceil(d - 0.5)
    raise ValueError(f"unknown tie rule {tie!r}")


@dataclass(frozen=True)
class TorusPoint:
    """A point of the d-torus, d in {1, 2}, stored reduced to [0, 1)."""

    coords: tuple

    def __post_init__(self):
        c = tuple(float(v) for v in reduce_torus(np.atleast_1d(self.coords)))
        if len(c) not in (1, 2):
            raise ValueError("only d = 1 and d = 2 are supported")
        object.__setattr__(self, "coords", c)

    @property
    def dim(self) -> int:
        return len(self.coords)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.coords, dtype=dtype)


def periodic_distance(x, y) -> float:
    """Distance on the torus, ``min_z |x - y - z|`` over integer shifts."""
    xa = np.atleast_1d(np.asarray(x, dtype=float))
    ya = np.atleast_1d(np.asarray(y, dtype=float))
    if xa.shape != ya.shape:
        raise ValueError(f"dimension mismatch: {xa.shape} vs {ya.shape}")
    return float(np.linalg.norm(periodic_displacement(xa, ya)))


# ---------------------------------------------------------------------------
# measures
# ---------------------------------------------------------------------------

def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


def _merge_groups(positions: np.ndarray, tol: float) -> np.ndarray:
    """Label atoms so that atoms closer than ``tol`` share a label."""
    n = len(positions)
    labels = np.arange(n)
    if n < 2:
        return labels
    tree = cKDTree(positions, boxsize=1.0)
    pairs = tree.query_pairs(r=tol, output_type="ndarray")
    if len(pairs) == 0:
        return labels
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i, j in pairs:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)
    return np.array([find(i) for i in range(n)])


@dataclass(frozen=True)
class DiscreteMeasure:
    """Weighted atoms on the d-torus.

    Parameters
    ----------
    positions : array-like, shape (n, d)
        Atom positions, reduced to [0, 1) on construction.
    masses : array-like, shape (n,)
        Strictly positive masses.
    """

    positions: np.ndarray
    masses: np.ndarray

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        if pos.ndim == 1:
            pos = pos[:, None]
        mass = np.asarray(self.masses, dtype=float).reshape(-1)
        if pos.shape[0] != mass.shape[0]:
            raise ValueError("positions and masses have different lengths")
        if pos.shape[1] not in (1, 2):
            raise ValueError("only d = 1 and d = 2 are supported")
        if np.any(~(mass > 0)):
            raise ValueError("atom masses must be strictly positive")
        object.__setattr__(self, "positions", _frozen(reduce_torus(pos)))
        object.__setattr__(self, "masses", _frozen(mass))

    @classmethod
    def from_atoms(cls, positions, masses, tol: float = MERGE_TOL, dim=None):
        """Build a measure, dropping zero masses and merging coincident atoms."""
        pos = np.asarray(positions, dtype=float)
        if pos.ndim == 1:
            pos = pos[:, None] if dim in (None, 1) else pos.reshape(-1, dim)
        mass = np.asarray(masses, dtype=float).reshape(-1)
        keep = mass > 0
        pos, mass = reduce_torus(pos[keep]), mass[keep]
        if len(mass) == 0:
            d = dim or (pos.shape[1] if pos.ndim == 2 else 1)
            return cls(np.zeros((0, d)), np.zeros(0))
        labels = _merge_groups(pos, tol)
        uniq, inv = np.unique(labels, return_inverse=True)
        if len(uniq) == len(labels):
            return cls(pos, mass)
        merged = np.zeros(len(uniq))
        np.add.at(merged, inv, mass)
        first = np.array([np.flatnonzero(inv == k)[0] for k in range(len(uniq))])
        return cls(pos[first], merged)

    @classmethod
    def uniform_grid(cls, n: int, dim: int = 2, total: float = 1.0):
        """``n**dim`` atoms at the centers of the cells of the uniform n-grid."""
        c = (np.arange(n) + 0.5) / n
        if dim == 1:
            pos = c[:, None]
        else:
            gx, gy = np.meshgrid(c, c, indexing="ij")
            pos = np.column_stack([gx.ravel(), gy.ravel()])
        return cls(pos, np.full(len(pos), total / len(pos)))

    @property
    def dim(self) -> int:
        return self.positions.shape[1]

    def __len__(self):
        return len(self.masses)

    def total_mass(self) -> float:
        return math.fsum(self.masses)

    def normalized(self) -> "DiscreteMeasure":
        m = self.masses / self.total_mass()
        # put the rounding residue on the heaviest atom so the sum is exact
        k = int(np.argmax(m))
        m[k] += 1.0 - math.fsum(m)
        return DiscreteMeasure(self.positions, m)

    def translated(self, v) -> "DiscreteMeasure":
        return DiscreteMeasure(self.positions + np.asarray(v, dtype=float), self.masses)

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "atoms": [
                {"x": [float(c) for c in p], "mass": float(m)}
                for p, m in zip(self.positions, self.masses)
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DiscreteMeasure":
        dim = int(data["dim"])
        atoms = data["atoms"]
        pos = np.array([a["x"] for a in atoms], dtype=float).reshape(-1, dim)
        return cls(pos, [a["mass"] for a in atoms])


# ---------------------------------------------------------------------------
# plans
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EnergyBreakdown:
    """Perimeter, kinetic and boundary parts of an energy."""

    perimeter: float
    kinetic: float
    boundary: float = 0.0

    @property
    def total(self) -> float:
        return self.perimeter + self.kinetic + self.boundary

    def __add__(self, other: "EnergyBreakdown") -> "EnergyBreakdown":
        return EnergyBreakdown(
            self.perimeter + other.perimeter,
            self.kinetic + other.kinetic,
            self.boundary + other.boundary,
        )

    def to_dict(self) -> dict:
        return {
            "perimeter": self.perimeter,
            "kinetic": self.kinetic,
            "boundary": self.boundary,
            "total": self.total,
        }


@dataclass(frozen=True)
class ModelConfig:
    """Penalty ``lam``, half-height ``T`` and perimeter power of a model.

    The perimeter power defaults to ``(d - 1) / d``: 1/2 for the
    three-dimensional functional, 0 for the toy model.
    """

    lam: float
    T: float
    dim: int = 2
    perimeter_power: float | None = None

    def __post_init__(self):
        if not (self.lam > 0 and self.T > 0):
            raise ValueError("lam and T must be positive")
        if self.dim not in (1, 2):
            raise ValueError("only d = 1 and d = 2 are supported")
        if self.perimeter_power is None:
            object.__setattr__(self, "perimeter_power", (self.dim - 1) / self.dim)
        if not 0 <= self.perimeter_power < 1:
            raise ValueError("perimeter power must lie in [0, 1)")


@dataclass(frozen=True)
class Violation:
    kind: str
    index: int
    detail: str = ""


@dataclass(frozen=True)
class BranchedPlan:
    """A finite time-space graph with constant-flux affine edges.

    Parameters
    ----------
    times : array-like, shape (n_nodes,)
    positions : array-like, shape (n_nodes, d)
        Reduced to [0, 1) on construction.
    tails, heads : array-like of int, shape (n_edges,)
        Node indices; edges should point forward in time.
    fluxes : array-like, shape (n_edges,)
    T : float
        Horizon; node times are expected in [-T, T].
    """

    times: np.ndarray
    positions: np.ndarray
    tails: np.ndarray
    heads: np.ndarray
    fluxes: np.ndarray
    T: float
    meta: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        if pos.ndim == 1:
            pos = pos[:, None]
        object.__setattr__(self, "times", _frozen(self.times))
        object.__setattr__(self, "positions", _frozen(reduce_torus(pos)))
        object.__setattr__(self, "tails", _frozen(np.asarray(self.tails).reshape(-1), int))
        object.__setattr__(self, "heads", _frozen(np.asarray(self.heads).reshape(-1), int))
        object.__setattr__(self, "fluxes", _frozen(np.asarray(self.fluxes).reshape(-1)))
        object.__setattr__(self, "T", float(self.T))
        if not (len(self.tails) == len(self.heads) == len(self.fluxes)):
            raise ValueError("edge arrays have different lengths")
        if len(self.times) != len(self.positions):
            raise ValueError("node arrays have different lengths")

    @property
    def dim(self) -> int:
        return self.positions.shape[1]

    @property
    def n_nodes(self) -> int:
        return len(self.times)

    @property
    def n_edges(self) -> int:
        return len(self.fluxes)

    @property
    def t_start(self) -> float:
        return float(self.times.min())

    @property
    def t_end(self) -> float:
        return float(self.times.max())

    def edge_displacements(self) -> np.ndarray:
        return periodic_displacement(self.positions[self.tails], self.positions[self.heads])

    def edge_durations(self) -> np.ndarray:
        return self.times[self.heads] - self.times[self.tails]

    def edge_velocities(self) -> np.ndarray:
        return self.edge_displacements() / self.edge_durations()[:, None]

    def translated(self, v) -> "BranchedPlan":
        return BranchedPlan(
            self.times, self.positions + np.asarray(v, dtype=float),
            self.tails, self.heads, self.fluxes, self.T,
        )

    # -- serialization --------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "T": self.T,
            "nodes": [
                {"t": float(t), "x": [float(c) for c in p]}
                for t, p in zip(self.times, self.positions)
            ],
            "edges": [
                {"tail": int(a), "head": int(b), "flux": float(f)}
                for a, b, f in zip(self.tails, self.heads, self.fluxes)
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> "BranchedPlan":
        dim = int(data["dim"])
        nodes, edges = data["nodes"], data["edges"]
        pos = np.array([n["x"] for n in nodes], dtype=float).reshape(-1, dim)
        return cls(
            [n["t"] for n in nodes], pos,
            [e["tail"] for e in edges], [e["head"] for e in edges],
            [e["flux"] for e in edges], data["T"],
        )

    @classmethod
    def from_json(cls, text: str) -> "BranchedPlan":
        return cls.from_dict(json.loads(text))


def trace(plan: BranchedPlan, t: float, tol: float = MERGE_TOL) -> DiscreteMeasure:
    """The measure carried by the plan at time ``t``.

    Edges are taken as half-open ``(t_tail, t_head]``, except at the first node
    time where ``[t_tail, t_head)`` is used, so node times are not counted
    twice. Atoms closer than ``tol`` are merged.
    """
    if not -plan.T - 1e-15 <= t <= plan.T + 1e-15:
        raise ValueError(f"t = {t} outside [-T, T] with T = {plan.T}")
    tt = plan.times[plan.tails]
    th = plan.times[plan.heads]
    if t <= plan.t_start:
        alive = (tt <= t) & (t < th)
    else:
        alive = (tt < t) & (t <= th)
    if not np.any(alive):
        return DiscreteMeasure(np.zeros((0, plan.dim)), np.zeros(0))
    s = ((t - tt[alive]) / (th[alive] - tt[alive]))[:, None]
    disp = plan.edge_displacements()[alive]
    pos = plan.positions[plan.tails[alive]] + s * disp
    return DiscreteMeasure.from_atoms(pos, plan.fluxes[alive], tol=tol, dim=plan.dim)


def internal_energy(plan: BranchedPlan, a: float | None = None, b: float | None = None,
                    power: float | None = None) -> EnergyBreakdown:
    """Perimeter and kinetic energy of ``plan`` on the time window ``(a, b)``.

    ``perimeter = sum_e |I_e| * flux_e**power`` and
    ``kinetic = sum_e |I_e| * flux_e * |v_e|**2`` where ``I_e`` is the part of
    the edge's time span inside ``(a, b)`` and ``v_e`` its periodic velocity.
    ``power`` defaults to ``(d - 1) / d``.
    """
    a = -plan.T if a is None else float(a)
    b = plan.T if b is None else float(b)
    if not (-plan.T - 1e-15 <= a < b <= plan.T + 1e-15):
        raise ValueError(f"invalid interval ({a}, {b}) for T = {plan.T}")
    if power is None:
        power = (plan.dim - 1) / plan.dim
    if plan.n_edges == 0:
        return EnergyBreakdown(0.0, 0.0)
    dt = plan.edge_durations()
    if np.any(dt <= 0):
        raise ValueError("plan has non-causal edges")
    tt = plan.times[plan.tails]
    th = plan.times[plan.heads]
    overlap = np.clip(np.minimum(b, th) - np.maximum(a, tt), 0.0, None)
    phi = plan.fluxes
    speed2 = np.sum(plan.edge_displacements() ** 2, axis=1) / dt**2
    per = phi**power if power != 0 else np.ones_like(phi)
    return EnergyBreakdown(
        math.fsum(overlap * per),
        math.fsum(overlap * phi * speed2),
    )


def _adjacency(plan: BranchedPlan):
    out_edges = defaultdict(list)
    in_edges = defaultdict(list)
    for e, (u, v) in enumerate(zip(plan.tails, plan.heads)):
        out_edges[int(u)].append(e)
        in_edges[int(v)].append(e)
    return out_edges, in_edges


def is_forest(plan: BranchedPlan) -> bool:
    """True when the undirected edge graph has no cycle."""
    parent = list(range(plan.n_nodes))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for u, v in zip(plan.tails, plan.heads):
        ru, rv = find(int(u)), find(int(v))
        if ru == rv:
            return False
        parent[ru] = rv
    return True


def validate(plan: BranchedPlan, require_forest: bool = False,
             tol: float = KIRCHHOFF_TOL) -> list[Violation]:
    """Check the structural invariants of a plan; returns the violations found.

    Checked: node indices, node times inside ``[-T, T]``, strictly forward
    edges, positive fluxes, Kirchhoff balance at nodes with both incoming and
    outgoing edges, and that mass only enters at the first node time and only
    leaves at the last one. With ``require_forest`` the undirected graph must
    also be loop-free.
    """
    out: list[Violation] = []
    n = plan.n_nodes
    bad_idx = (plan.tails < 0) | (plan.tails >= n) | (plan.heads < 0) | (plan.heads >= n)
    for e in np.flatnonzero(bad_idx):
        out.append(Violation("UnknownNode", int(e)))
    if out:
        return out
    for i in np.flatnonzero((plan.times < -plan.T - 1e-12) | (plan.times > plan.T + 1e-12)):
        out.append(Violation("TimeOutOfRange", int(i), f"t = {plan.times[i]}"))
    dt = plan.edge_durations()
    for e in np.flatnonzero(~(dt > 0)):
        out.append(Violation("NonCausalEdge", int(e), f"dt = {dt[e]}"))
    for e in np.flatnonzero(~(plan.fluxes > 0)):
        out.append(Violation("NonPositiveFlux", int(e), f"flux = {plan.fluxes[e]}"))

    inflow = np.zeros(n)
    outflow = np.zeros(n)
    np.add.at(inflow, plan.heads, plan.fluxes)
    np.add.at(outflow, plan.tails, plan.fluxes)
    has_in = np.zeros(n, bool)
    has_out = np.zeros(n, bool)
    has_in[plan.heads] = True
    has_out[plan.tails] = True
    t0, t1 = (plan.t_start, plan.t_end) if n else (0.0, 0.0)
    for i in range(n):
        if has_in[i] and has_out[i]:
            if abs(inflow[i] - outflow[i]) > tol:
                out.append(Violation("KirchhoffViolation", i,
                                     f"in = {inflow[i]!r}, out = {outflow[i]!r}"))
        elif has_out[i] and plan.times[i] > t0:
            out.append(Violation("MassSource", i, f"source at t = {plan.times[i]}"))
        elif has_in[i] and plan.times[i] < t1:
            out.append(Violation("MassSink", i, f"sink at t = {plan.times[i]}"))
    if require_forest and not is_forest(plan):
        out.append(Violation("Loop", -1, "edge graph contains a cycle"))
    return out


def forward_subsystem(plan: BranchedPlan, node: int) -> BranchedPlan:
    """The part of ``plan`` reachable forward in time from ``node``.

    Mass leaving ``node`` is followed downstream; at every node it splits in
    the proportions of the original outgoing fluxes, so on trees the fluxes
    are unchanged.
    """
    if not 0 <= node < plan.n_nodes:
        raise KeyError(f"node {node} not in plan")
    out_edges, _ = _adjacency(plan)
    seen = {node}
    queue = deque([node])
    while queue:
        u = queue.popleft()
        for e in out_edges[u]:
            v = int(plan.heads[e])
            if v not in seen:
                seen.add(v)
                queue.append(v)
    order = sorted(seen, key=lambda i: (plan.times[i], i))
    carried = defaultdict(float)
    carried[node] = math.fsum(plan.fluxes[e] for e in out_edges[node])
    new_edges = []
    for u in order:
        total = math.fsum(plan.fluxes[e] for e in out_edges[u])
        if total <= 0:
            continue
        for e in out_edges[u]:
            f = carried[u] * plan.fluxes[e] / total
            v = int(plan.heads[e])
            carried[v] += f
            new_edges.append((u, v, f))
    index = {old: k for k, old in enumerate(order)}
    return BranchedPlan(
        plan.times[order], plan.positions[order],
        [index[u] for u, _, _ in new_edges], [index[v] for _, v, _ in new_edges],
        [f for _, _, f in new_edges], plan.T,
    )


def node_masses(plan: BranchedPlan) -> np.ndarray:
    """Mass sitting at each node (max of its inflow and outflow)."""
    inflow = np.zeros(plan.n_nodes)
    outflow = np.zeros(plan.n_nodes)
    np.add.at(inflow, plan.heads, plan.fluxes)
    np.add.at(outflow, plan.tails, plan.fluxes)
    return np.maximum(inflow, outflow)


def concat_plans(plans, T=None) -> BranchedPlan:
    """Disjoint union of plans with the same dimension."""
    plans = list(plans)
    times, pos, tails, heads, flux = [], [], [], [], []
    offset = 0
    for p in plans:
        times.append(p.times)
        pos.append(p.positions)
        tails.append(p.tails + offset)
        heads.append(p.heads + offset)
        flux.append(p.fluxes)
        offset += p.n_nodes
    T = max(p.T for p in plans) if T is None else T
    return BranchedPlan(np.concatenate(times), np.concatenate(pos),
                        np.concatenate(tails), np.concatenate(heads),
                        np.concatenate(flux), T)


def mirror_plan(plan: BranchedPlan) -> BranchedPlan:
    """Reflect a plan living on ``[0, T]`` to a symmetric plan on ``[-T, T]``.

    Nodes at ``t = 0`` are shared by the two halves.
    """
    n = plan.n_nodes
    at_zero = np.abs(plan.times) <= 1e-15
    if np.any(plan.times < -1e-15):
        raise ValueError("mirror_plan expects node times in [0, T]")
    mirror_index = np.empty(n, dtype=int)
    extra = np.flatnonzero(~at_zero)
    mirror_index[at_zero] = np.flatnonzero(at_zero)
    mirror_index[extra] = n + np.arange(len(extra))
    times = np.concatenate([plan.times, -plan.times[extra]])
    times[np.flatnonzero(at_zero)] = 0.0
    pos = np.concatenate([plan.positions, plan.positions[extra]])
    tails = np.concatenate([plan.tails, mirror_index[plan.heads]])
    heads = np.concatenate([plan.heads, mirror_index[plan.tails]])
    flux = np.concatenate([plan.fluxes, plan.fluxes])
    return BranchedPlan(times, pos, tails, heads, flux, plan.T)


def composite_energy_1d(plan: BranchedPlan, lam: float) -> EnergyBreakdown:
    """Toy-model energy: unit perimeter per branch plus ``lam`` times the
    squared periodic Wasserstein distances of both end traces to Lebesgue."""
    from .transport import w2_periodic_1d, LEBESGUE

    if plan.dim != 1:
        raise ValueError("the toy model lives on the 1-torus")
    e = internal_energy(plan, plan.t_start, plan.t_end, power=0.0)
    top, _ = w2_periodic_1d(LEBESGUE, trace(plan, plan.t_end))
    bottom, _ = w2_periodic_1d(LEBESGUE, trace(plan, plan.t_start))
    return EnergyBreakdown(e.perimeter, e.kinetic, lam * (top + bottom))


@dataclass(frozen=True)
class GridDensity:
    """Piecewise-constant density made of axis-aligned boxes on the torus.

    Box ``b`` spans ``[lo[b], hi[b])`` (with ``0 <= lo < hi <= 1`` on every
    axis) and carries ``masses[b]`` spread uniformly over it. Boxes are
    assumed disjoint.
    """

    lo: np.ndarray
    hi: np.ndarray
    masses: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        if lo.ndim == 1:
            lo, hi = lo[:, None], hi[:, None]
        mass = np.asarray(self.masses, dtype=float).reshape(-1)
        if lo.shape != hi.shape or lo.shape[0] != mass.shape[0]:
            raise ValueError("box arrays have inconsistent shapes")
        if lo.shape[1] not in (1, 2):
            raise ValueError("only d = 1 and d = 2 are supported")
        if np.any(hi <= lo) or np.any(lo < 0) or np.any(hi > 1):
            raise ValueError("boxes must satisfy 0 <= lo < hi <= 1")
        if np.any(mass < 0):
            raise ValueError("box masses must be nonnegative")
        object.__setattr__(self, "lo", _frozen(lo))
        object.__setattr__(self, "hi", _frozen(hi))
        object.__setattr__(self, "masses", _frozen(mass))

    @classmethod
    def lebesgue(cls, dim: int = 1) -> "GridDensity":
        return cls(np.zeros((1, dim)), np.ones((1, dim)), [1.0])

    @classmethod
    def centered_boxes(cls, centers, side, masses) -> "GridDensity":
        """Boxes of common ``side`` around ``centers`` (must not wrap)."""
        c = np.asarray(centers, dtype=float)
        if c.ndim == 1:
            c = c[:, None]
        return cls(c - side / 2, c + side / 2, masses)

    @property
    def dim(self) -> int:
        return self.lo.shape[1]

    @property
    def sides(self) -> np.ndarray:
        return self.hi - self.lo

    @property
    def centers(self) -> np.ndarray:
        return (self.hi + self.lo) / 2

    def total_mass(self) -> float:
        return math.fsum(self.masses)

    def atoms(self) -> DiscreteMeasure:
        """Collapse every box to an atom at its center."""
        keep = self.masses > 0
        return DiscreteMeasure(self.centers[keep], self.masses[keep])

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "boxes": [
                {"lo": [float(v) for v in a], "hi": [float(v) for v in b], "mass": float(m)}
                for a, b, m in zip(self.lo, self.hi, self.masses)
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GridDensity":
        dim = int(data["dim"])
        boxes = data["boxes"]
        lo = np.array([b["lo"] for b in boxes], dtype=float).reshape(-1, dim)
        hi = np.array([b["hi"] for b in boxes], dtype=float).reshape(-1, dim)
        return cls(lo, hi, [b["mass"] for b in boxes])


def measure_from_dict(data: dict):
    """Load either a DiscreteMeasure (``atoms``) or a GridDensity (``boxes``)."""
    if "boxes" in data:
        return GridDensity.from_dict(data)
    return DiscreteMeasure.from_dict(data)
