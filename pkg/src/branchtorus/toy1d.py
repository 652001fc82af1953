"""The toy model: branched transport in one horizontal dimension.

Branches cost one unit of perimeter per unit time regardless of their
mass, and the boundary traces are penalized by ``lam`` times the squared
periodic Wasserstein distance to Lebesgue. Minimizers are symmetric in time
and split at ``t = 0`` into independent subtrees, each irrigating an
interval of length equal to its mass; subtrees reduce by scaling to a
two-parameter family.

Trees are nested tuples: ``None`` is a straight leaf and
``(sigma, f, left, right)`` a trunk that uses the fraction ``sigma`` of the
remaining time before splitting into a left child of mass fraction ``f``
and a right child of fraction ``1 - f``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .constants import BRANCH_C0, BRANCH_CHILD_C, C_EQUIPARTITION
from .core_model import (BranchedPlan, composite_energy_1d, internal_energy,
                         mirror_plan, periodic_displacement)

# ---------------------------------------------------------------------------
# closed forms
# ---------------------------------------------------------------------------


def segment_energy(N: int, lam: float, T: float) -> float:
    """Energy ``2 (N T + lam / (12 N^2))`` of N equidistant vertical segments."""
    if N < 1:
        raise ValueError("N must be at least 1")
    return 2.0 * (N * T + lam / (12.0 * N * N))


def optimal_segment_count(lam: float, T: float) -> tuple[int, float]:
    """Integer minimizer of :func:`segment_energy`.

    The continuous minimizer is ``(lam / (6 T))^(1/3)``; the function is
    convex in N so its floor and ceiling are the only candidates.
    """
    if lam <= 0 or T <= 0:
        raise ValueError("lam and T must be positive")
    x = (lam / (6.0 * T)) ** (1.0 / 3.0)
    cands = {1, max(1, math.floor(x)), max(1, math.ceil(x))}
    best = min(sorted(cands), key=lambda n: segment_energy(n, lam, T))
    return best, segment_energy(best, lam, T)


@dataclass(frozen=True)
class SubtreeProblem:
    """Cell problem ``E(Phi, T, lam, xbar)``: a subtree of mass ``Phi`` rooted
    at offset ``xbar`` from the barycenter of the interval it irrigates."""

    Phi: float
    T: float
    lam: float
    xbar: float = 0.0

    def __post_init__(self):
        if not (self.Phi > 0 and self.T > 0 and self.lam > 0):
            raise ValueError("Phi, T and lam must be positive")

    @property
    def T_lam(self) -> float:
        return self.T + 1.0 / self.lam

    def offset_shift(self) -> float:
        """Extra energy ``Phi xbar^2 / T_lam`` caused by the offset."""
        return self.Phi * self.xbar**2 / self.T_lam

    def lower_bound(self) -> float:
        """``T + Phi^3 / (12 T_lam)`` plus the offset shift."""
        return self.T + self.Phi**3 / (12.0 * self.T_lam) + self.offset_shift()

    def segment_value(self) -> float:
        return self.T + self.lam * self.Phi**3 / 12.0 + self.offset_shift()


def rescale(problem: SubtreeProblem, r: float) -> tuple[SubtreeProblem, float]:
    """Scaled problem ``(r^(-2/3) Phi, T / r, r lam)`` and the factor ``r``.

    ``E(problem) = r * E(scaled)``. Offsets must be removed first (use
    :meth:`SubtreeProblem.offset_shift`).
    """
    if r <= 0:
        raise ValueError("r must be positive")
    if problem.xbar != 0:
        raise ValueError("remove the offset before rescaling")
    return SubtreeProblem(problem.Phi * r ** (-2.0 / 3.0), problem.T / r, problem.lam * r), r


def branching_threshold(Phi: float, T: float, lam: float, c: float = BRANCH_C0) -> float:
    """Minimal admissible child mass fraction ``c (1 + lam T) / (lam^2 Phi^3)``.

    With the default constant a value above 1 means that the node cannot
    branch at all.
    """
    return c * (1.0 + lam * T) / (lam * lam * Phi**3)


# ---------------------------------------------------------------------------
# tree energies
# ---------------------------------------------------------------------------


def tree_energy(tree, Phi: float, tau: float, lam: float):
    """Energy of a subtree with zero offset, with its sensitivities.

    Returns
    -------
    E, dE/dPhi, dE/dtau, gradient : float, float, float, list
        ``gradient`` lists the derivatives with respect to ``(sigma, f)`` of
        every split, in pre-order.
    """
    if tree is None:
        return tau + lam * Phi**3 / 12.0, lam * Phi**2 / 4.0, 1.0, []
    sigma, f, left, right = tree
    s = sigma * tau
    u = tau - s
    w = u + 1.0 / lam
    cross = f * (1.0 - f) * Phi**3 / (4.0 * w)
    EL, EL_phi, EL_tau, gL = tree_energy(left, f * Phi, u, lam)
    ER, ER_phi, ER_tau, gR = tree_energy(right, (1.0 - f) * Phi, u, lam)
    E = s + EL + ER + cross
    dsigma = tau - tau * (EL_tau + ER_tau) + tau * cross / w
    df = Phi * EL_phi - Phi * ER_phi + (1.0 - 2.0 * f) * Phi**3 / (4.0 * w)
    dphi = f * EL_phi + (1.0 - f) * ER_phi + 3.0 * cross / Phi
    dtau = sigma + (1.0 - sigma) * (EL_tau + ER_tau - cross / w)
    return E, dphi, dtau, [dsigma, df] + gL + gR


def _flatten(tree) -> list:
    if tree is None:
        return []
    sigma, f, left, right = tree
    return [sigma, f] + _flatten(left) + _flatten(right)


def _rebuild(shape, params, pos=0):
    if shape is None:
        return None, pos
    _, _, left, right = shape
    sigma, f = params[pos], params[pos + 1]
    lt, pos = _rebuild(left, params, pos + 2)
    rt, pos = _rebuild(right, params, pos)
    return (float(sigma), float(f), lt, rt), pos


def count_splits(tree) -> int:
    if tree is None:
        return 0
    return 1 + count_splits(tree[2]) + count_splits(tree[3])


def _collapse(tree, tol=1e-9):
    """Replace splits whose trunk reaches the boundary by plain leaves."""
    if tree is None:
        return None
    sigma, f, left, right = tree
    if sigma >= 1.0 - tol:
        return None
    return (sigma, f, _collapse(left, tol), _collapse(right, tol))


def _child_thresholds_ok(tree, Phi, tau, lam, c=BRANCH_CHILD_C) -> bool:
    if tree is None:
        return True
    sigma, f, left, right = tree
    u = (1.0 - sigma) * tau
    thr = branching_threshold(Phi, u, lam, c)
    if min(f, 1.0 - f) < thr * (1.0 - 1e-9):
        return False
    return (_child_thresholds_ok(left, f * Phi, u, lam, c)
            and _child_thresholds_ok(right, (1.0 - f) * Phi, u, lam, c))


# ---------------------------------------------------------------------------
# search
# ---------------------------------------------------------------------------


class _TableSolver:
    """Dynamic programming over (mass, remaining time) for a fixed ``lam``.

    ``F[d][i, k]`` approximates the best energy of a subtree of mass
    ``phis[i]`` with remaining time ``us[k]`` using at most ``d`` nested
    splits. Children that fall between mass nodes are interpolated in
    log-log coordinates, so the tables only steer the search; energies of
    returned trees are always recomputed in closed form.
    """

    def __init__(self, lam, T, depth, grid, prune=True, u_ratio=1e-4):
        self.lam, self.T, self.depth, self.G, self.prune = lam, T, depth, grid, prune
        self.us = T * u_ratio ** (np.arange(grid) / max(grid - 1, 1))
        self.fs = np.arange(1, grid + 1) / (2.0 * grid)
        P = max(grid, 48)
        self.phi_lo = max((0.5 / grid) ** max(depth, 1) * 1e-2, 1e-12)
        self.log_phis = np.linspace(math.log(self.phi_lo), 0.0, P)
        self.phis = np.exp(self.log_phis)
        self.F = [None]
        for d in range(1, depth):
            self.F.append(self._level(d))

    def leaf(self, phi, u):
        return u + self.lam * phi**3 / 12.0

    def interp(self, d, phi, k):
        """Approximate best energy with ``d`` levels at masses ``phi`` and
        remaining-time indices ``k`` (arrays of the same shape)."""
        if d == 0:
            return self.leaf(phi, self.us[k])
        table = self.F[d]
        x = (np.log(np.maximum(phi, 1e-300)) - self.log_phis[0]) / (self.log_phis[1] - self.log_phis[0])
        i0 = np.clip(np.floor(x).astype(int), 0, len(self.phis) - 2)
        t = np.clip(x - i0, 0.0, 1.0)
        lo = np.log(table[i0, k])
        hi = np.log(table[i0 + 1, k])
        val = np.exp(lo + t * (hi - lo))
        out = np.where(phi < self.phis[0], self.leaf(phi, self.us[k]), val)
        return np.minimum(out, self.leaf(phi, self.us[k]))

    def split_values(self, d, phi, j):
        """Energies of all grid splits of mass(es) ``phi`` at time index ``j``
        using ``d - 1`` levels for the children; shape ``phi.shape + (K, L)``."""
        phi = np.asarray(phi, dtype=float)
        ks = np.arange(j, len(self.us))
        u = self.us[ks]
        ph = phi[..., None, None]
        f = self.fs[None, :]
        K = np.broadcast_to(ks[:, None], (len(ks), len(self.fs)))
        kk = np.broadcast_to(K, ph.shape[:-2] + K.shape)
        w = u[:, None] + 1.0 / self.lam
        vals = ((self.us[j] - u)[:, None]
                + self.interp(d - 1, f * ph, kk)
                + self.interp(d - 1, (1.0 - f) * ph, kk)
                + f * (1.0 - f) * ph**3 / (4.0 * w))
        if self.prune:
            thr = (1.0 + self.lam * u[:, None]) / (self.lam**2 * ph**3)
            ok = (BRANCH_C0 * thr <= 1.0) & (f >= BRANCH_CHILD_C * thr)
            vals = np.where(ok, vals, np.inf)
        return vals, ks

    def _level(self, d):
        table = np.empty((len(self.phis), len(self.us)))
        for j in range(len(self.us)):
            vals, _ = self.split_values(d, self.phis, j)
            best = vals.reshape(len(self.phis), -1).min(axis=1)
            table[:, j] = np.minimum(best, self.leaf(self.phis, self.us[j]))
        return table

    def reconstruct(self, phi, j=0, d=None):
        d = self.depth if d is None else d
        if d == 0:
            return None
        vals, ks = self.split_values(d, np.array(phi), j)
        flat = int(np.argmin(vals))
        kk, ll = divmod(flat, vals.shape[-1])
        if not vals.flat[flat] < self.leaf(phi, self.us[j]) * (1.0 - 1e-12):
            return None
        k = ks[kk]
        f = self.fs[ll]
        sigma = (self.us[j] - self.us[k]) / self.us[j]
        return (float(sigma), float(f),
                self.reconstruct(f * phi, k, d - 1),
                self.reconstruct((1.0 - f) * phi, k, d - 1))


def polish_tree(tree, Phi, tau, lam):
    """Continuous refinement of all ``(sigma, f)`` of a fixed tree shape."""
    if tree is None:
        return None
    x0 = np.array(_flatten(tree))

    def fun(x):
        t, _ = _rebuild(tree, x)
        E, _, _, g = tree_energy(t, Phi, tau, lam)
        return E, np.array(g)

    bounds = [(0.0, 1.0) if i % 2 == 0 else (1e-9, 1.0 - 1e-9) for i in range(len(x0))]
    res = minimize(fun, x0, jac=True, method="L-BFGS-B", bounds=bounds,
                   options={"ftol": 1e-16, "gtol": 1e-13, "maxiter": 5000})
    t, _ = _rebuild(tree, res.x)
    if fun(res.x)[0] > fun(x0)[0]:
        return tree
    return _collapse(t)


_TABLE_CACHE: dict = {}


def _cached_solver(lam, T, depth, grid, prune):
    # normalized problems with equal (lam, T) up to 12 digits share tables
    key = (float(f"{lam:.12e}"), float(f"{T:.12e}"), depth, grid, prune)
    if key not in _TABLE_CACHE:
        if len(_TABLE_CACHE) > 256:
            _TABLE_CACHE.clear()
        _TABLE_CACHE[key] = _TableSolver(lam, T, depth, grid, prune)
    return _TABLE_CACHE[key]


def _search_normalized(T, lam, depth, grid, prune):
    """Best tree for the unit-mass problem with horizon ``T``."""
    if depth == 0:
        return None
    if prune and branching_threshold(1.0, 0.0, lam) > 1.0:
        # even a split at the boundary is ruled out
        return None
    solver = _cached_solver(lam, T, depth, grid, prune)
    tree = solver.reconstruct(1.0)
    if tree is None:
        return None
    tree = polish_tree(tree, 1.0, T, lam)
    if prune and tree is not None and not _child_thresholds_ok(tree, 1.0, T, lam):
        # the refined tree left the admissible set; keep the grid optimum
        tree = solver.reconstruct(1.0)
    return tree


@dataclass(frozen=True)
class SubtreeSolution:
    E: float
    E_lower: float
    tree: object
    plan: BranchedPlan
    flagged: bool = False

    @property
    def gap(self) -> float:
        return self.E - self.E_lower


def solve_E(problem: SubtreeProblem, depth: int = 3, branch_grid: int = 32,
            prune: bool = True) -> SubtreeSolution:
    """Numerical minimization of the cell problem over binary trees.

    The problem is normalized to unit mass by scaling, a dynamic program on
    a geometric time grid and a uniform fraction grid proposes a tree of at
    most ``depth`` nested splits, and all split parameters are then refined
    on the closed-form energy. The returned energy is the exact energy of
    the returned tree, hence an upper bound; ``E_lower`` is the Lagrangian
    lower bound.
    """
    if depth < 0:
        raise ValueError("depth must be nonnegative")
    if branch_grid < 2:
        raise ValueError("branch_grid must be at least 2")
    base = SubtreeProblem(problem.Phi, problem.T, problem.lam)
    r = problem.Phi**1.5
    unit, _ = rescale(base, r)
    tree = _search_normalized(unit.T, unit.lam, depth, branch_grid, prune)
    if prune and tree is not None:
        full = _search_normalized(unit.T, unit.lam, 1, branch_grid, False)
        pruned_val = tree_energy(tree, 1.0, unit.T, unit.lam)[0]
        if full is not None and tree_energy(full, 1.0, unit.T, unit.lam)[0] < 0.99 * pruned_val:
            tree = _search_normalized(unit.T, unit.lam, depth, branch_grid, False)
    E0 = r * tree_energy(tree, 1.0, unit.T, unit.lam)[0]
    E0 = min(E0, base.segment_value()) if tree is None else E0
    E = E0 + problem.offset_shift()
    plan = subtree_plan(tree, problem)
    lower = problem.lower_bound()
    return SubtreeSolution(E, lower, tree, plan, flagged=E < lower * (1 - 1e-12))


# ---------------------------------------------------------------------------
# plan assembly
# ---------------------------------------------------------------------------


class _PlanBuilder:
    def __init__(self, lam, T):
        self.lam, self.T = lam, T
        self.times, self.pos, self.tails, self.heads, self.flux = [], [], [], [], []
        self.intervals = {}

    def node(self, t, x):
        self.times.append(t)
        self.pos.append(x)
        return len(self.times) - 1

    def edge(self, a, b, phi):
        self.tails.append(a)
        self.heads.append(b)
        self.flux.append(phi)

    def emit(self, tree, Phi, start, t0, P, a):
        """Subtree of mass Phi leaving node ``start`` (time t0, lifted position P)
        and irrigating the interval ``[a, a + Phi]``."""
        c = a + Phi / 2.0
        tau = self.T - t0
        w = tau + 1.0 / self.lam
        if tree is None or t0 >= self.T:
            end = self.node(self.T, c + (P - c) * (1.0 / self.lam) / w)
            self.edge(start, end, Phi)
            self.intervals[end] = (a, a + Phi)
            return
        sigma, f, left, right = tree
        s = sigma * tau
        if s > 0:
            Q = c + (P - c) * (w - s) / w
            mid = self.node(t0 + s, Q)
            self.edge(start, mid, Phi)
        else:
            Q, mid = P, start
        self.emit(left, f * Phi, mid, t0 + s, Q, a)
        self.emit(right, (1.0 - f) * Phi, mid, t0 + s, Q, a + f * Phi)

    def plan(self):
        return BranchedPlan(self.times, np.array(self.pos)[:, None], self.tails,
                            self.heads, self.flux, self.T)


def subtree_plan(tree, problem: SubtreeProblem) -> BranchedPlan:
    """Plan on ``[0, T]`` of a subtree rooted at ``xbar`` irrigating
    ``[-Phi/2, Phi/2]`` (positions reduced mod 1)."""
    b = _PlanBuilder(problem.lam, problem.T)
    root = b.node(0.0, problem.xbar)
    b.emit(tree, problem.Phi, root, 0.0, problem.xbar, -problem.Phi / 2.0)
    return b.plan()


def toy_plan(trees, lam: float, T: float) -> BranchedPlan:
    """Symmetric plan on ``[-T, T]`` with root ``i`` of mass ``1/N`` at the
    barycenter of ``[i/N, (i+1)/N)`` carrying ``trees[i]``."""
    N = len(trees)
    b = _PlanBuilder(lam, T)
    for i, tree in enumerate(trees):
        c = (i + 0.5) / N
        root = b.node(0.0, c)
        b.emit(tree, 1.0 / N, root, 0.0, c, i / N)
    return mirror_plan(b.plan())


@dataclass(frozen=True)
class ToySolution:
    """Result of :func:`solve_toy`."""

    E_upper: float
    E_lower: float
    N: int
    tree: object
    plan: BranchedPlan
    lam: float
    T: float
    branchings: int = 0
    candidates: dict = field(default_factory=dict, repr=False)

    @property
    def is_pure_segments(self) -> bool:
        return self.branchings == 0


def toy_lower_bound(lam: float, T: float) -> float:
    """``min_N 2 (N T + 1 / (12 N^2 T_lam))`` with ``T_lam = T + 1/lam``."""
    T_lam = T + 1.0 / lam
    x = (1.0 / (6.0 * T * T_lam)) ** (1.0 / 3.0)
    cands = {1, max(1, math.floor(x)), max(1, math.ceil(x))}
    return min(2.0 * (n * T + 1.0 / (12.0 * n * n * T_lam)) for n in cands)


def solve_toy(lam: float, T: float, depth: int = 3, grid: int = 32, prune: bool = True,
              N_max: int = 100_000) -> ToySolution:
    """Minimize the toy energy over configurations of N equal roots at
    ``t = 0``, each carrying the same optimized subtree.

    The energy with N roots is ``2 N E(1/N, T, lam)``; N increases until the
    lower bound ``2 (N T + 1/(12 N^2 T_lam))`` exceeds the best value found.
    """
    if lam <= 0 or T <= 0:
        raise ValueError("lam and T must be positive")
    T_lam = T + 1.0 / lam
    best = None
    cands = {}
    N = 1
    N_seg, _ = optimal_segment_count(lam, T)
    while N <= N_max:
        lb = 2.0 * (N * T + 1.0 / (12.0 * N * N * T_lam))
        if best is not None and lb >= best[0] and N > N_seg:
            break
        sol = solve_E(SubtreeProblem(1.0 / N, T, lam), depth, grid, prune)
        E = 2.0 * N * sol.E
        cands[N] = E
        if best is None or E < best[0] * (1.0 - 1e-14):
            best = (E, N, sol.tree)
        N += 1
    E, N, tree = best
    plan = toy_plan([tree] * N, lam, T)
    return ToySolution(E, toy_lower_bound(lam, T), N, tree, plan, lam, T,
                       N * count_splits(tree), cands)


def toy_energy_of_plan(plan: BranchedPlan, lam: float) -> float:
    """Eulerian toy energy of a plan on ``[-T, T]``."""
    return composite_energy_1d(plan, lam).total


# ---------------------------------------------------------------------------
# Lagrangian description
# ---------------------------------------------------------------------------


def _lifted_positions(plan: BranchedPlan) -> np.ndarray:
    """Node positions on the real line, continuous along edges.

    Every connected component is lifted from its earliest node.
    """
    n = plan.n_nodes
    lifted = np.full(n, np.nan)
    adj = [[] for _ in range(n)]
    disp = plan.edge_displacements()[:, 0]
    for e, (a, b) in enumerate(zip(plan.tails, plan.heads)):
        adj[a].append((b, disp[e]))
        adj[b].append((a, -disp[e]))
    for start in np.argsort(plan.times, kind="stable"):
        if not np.isnan(lifted[start]):
            continue
        lifted[start] = plan.positions[start, 0]
        stack = [start]
        while stack:
            u = stack.pop()
            for v, d in adj[u]:
                if np.isnan(lifted[v]):
                    lifted[v] = lifted[u] + d
                    stack.append(v)
    return lifted


@dataclass(frozen=True)
class _Leaves:
    """Final atoms of a forward plan and the intervals they irrigate."""

    nodes: np.ndarray
    y: np.ndarray          # lifted end positions
    lo: np.ndarray         # irrigated intervals [lo, hi), lifted consistently
    hi: np.ndarray
    lifted: np.ndarray     # lifted node positions, aligned with y


def _leaf_intervals(plan: BranchedPlan) -> _Leaves:
    """Optimal monotone assignment of Lebesgue to the atoms at ``t = T``.

    Leaves are the nodes at the final time. For each cyclic rotation of
    their order the zero-mean shift is optimal; the best rotation wins.
    """
    lifted = _lifted_positions(plan)
    T = plan.t_end
    leaves = np.flatnonzero(np.isclose(plan.times, T, rtol=0, atol=1e-14))
    phi = np.zeros(plan.n_nodes)
    np.add.at(phi, plan.heads, plan.fluxes)
    phi = phi[leaves]
    y = lifted[leaves]
    base = y - np.floor(y)
    order = np.lexsort((leaves, base))
    leaves, phi, y, base = leaves[order], phi[order], y[order], base[order]
    n = len(leaves)
    comp = _components(plan)
    best = None
    for r in range(n):
        idx = np.concatenate([np.arange(r, n), np.arange(r)])
        yy = np.concatenate([base[r:], base[:r] + 1.0])
        pp = phi[idx]
        q = np.concatenate([[0.0], np.cumsum(pp)[:-1]])
        theta = math.fsum(pp * yy) - math.fsum(pp * (q + pp / 2.0))
        lo = theta + q
        hi = lo + pp
        # int_lo^hi (y - x)^2 dx
        cost = math.fsum(((yy - lo) ** 3 - (yy - hi) ** 3) / 3.0)
        # leaves of one tree keep their relative lift: one integer shift per component
        shift = np.round(yy - lifted[leaves[idx]])
        c = comp[leaves[idx]]
        consistent = all(np.ptp(shift[c == v]) == 0 for v in np.unique(c))
        key = (not consistent, cost)
        if best is None or key[0] < best[0][0] or (key[0] == best[0][0] and cost < best[0][1] - 1e-15):
            best = (key, idx, yy, lo, hi)
    _, idx, yy, lo, hi = best
    leaves = leaves[idx]
    # align each component's lift with the chosen lift of its leaves
    shift = np.zeros(plan.n_nodes)
    for k, node in enumerate(leaves):
        shift[comp == comp[node]] = yy[k] - lifted[node]
    return _Leaves(leaves, yy, lo, hi, lifted + shift)


def _components(plan: BranchedPlan) -> np.ndarray:
    parent = list(range(plan.n_nodes))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for a, b in zip(plan.tails, plan.heads):
        ra, rb = find(int(a)), find(int(b))
        if ra != rb:
            parent[ra] = rb
    return np.array([find(i) for i in range(plan.n_nodes)])


def _forward_half(plan: BranchedPlan) -> BranchedPlan:
    """Restriction of a plan on [-T, T] to [0, T] (nodes at t >= 0 only).

    Edges crossing t = 0 are cut there.
    """
    if plan.t_start >= 0:
        return plan
    times = list(plan.times)
    pos = list(plan.positions[:, 0])
    keep_nodes = {i for i in range(plan.n_nodes) if plan.times[i] >= 0}
    tails, heads, flux = [], [], []
    disp = plan.edge_displacements()[:, 0]
    for e, (a, b) in enumerate(zip(plan.tails, plan.heads)):
        ta, tb = plan.times[a], plan.times[b]
        if tb <= 0:
            continue
        if ta < 0:
            frac = -ta / (tb - ta)
            times.append(0.0)
            pos.append(plan.positions[a, 0] + frac * disp[e])
            a = len(times) - 1
            keep_nodes.add(a)
        tails.append(a)
        heads.append(b)
        flux.append(plan.fluxes[e])
    used = sorted(keep_nodes)
    index = {old: k for k, old in enumerate(used)}
    return BranchedPlan([times[i] for i in used], np.array([pos[i] for i in used])[:, None],
                        [index[a] for a in tails], [index[b] for b in heads], flux, plan.T)


def _leaf_paths(plan: BranchedPlan, leaves: _Leaves):
    """For every leaf, the (times, lifted positions) of its path from the root."""
    incoming = {}
    for a, b in zip(plan.tails, plan.heads):
        incoming.setdefault(int(b), []).append(int(a))
    paths = []
    for node in leaves.nodes:
        chain = [int(node)]
        while chain[-1] in incoming:
            preds = incoming[chain[-1]]
            if len(preds) != 1:
                raise ValueError("forward plan is not a forest")
            chain.append(preds[0])
        chain = chain[::-1]
        paths.append((plan.times[chain], leaves.lifted[chain], chain))
    return paths


@dataclass(frozen=True)
class LagrangianField:
    """Trajectories ``X(t, x)`` sampled on a time grid and at quadrature points.

    Parameters
    ----------
    times : array, shape (n_t,)
        Increasing times from the start to ``T_lam``; trajectories are affine
        between consecutive times.
    xs, weights : arrays, shape (n_x,)
        Initial (Lagrangian) labels and their quadrature weights.
    X : array, shape (n_t, n_x)
        Lifted positions.
    T : float
        Time after which perimeter is no longer counted.
    mirrored : bool
        The field describes one half of a time-symmetric configuration.
    """

    times: np.ndarray
    xs: np.ndarray
    weights: np.ndarray
    X: np.ndarray
    T: float
    mirrored: bool = False

    def __post_init__(self):
        if np.any(np.diff(self.X, axis=1) < -1e-12):
            raise ValueError("non-monotone field")

    def multiplicity(self, row: np.ndarray) -> np.ndarray:
        """Mass sharing each sample's position; a position held by a single
        sample has multiplicity 0."""
        order = np.argsort(row, kind="stable")
        r = row[order]
        brk = np.concatenate([[True], np.diff(r) > 1e-12])
        group = np.cumsum(brk) - 1
        mass = np.bincount(group, weights=self.weights[order])
        size = np.bincount(group)
        m = np.where(size[group] > 1, mass[group], 0.0)
        out = np.empty_like(m)
        out[order] = m
        return out


def lagrangian_field(plan: BranchedPlan, lam: float, nodes_per_leaf: int = 2) -> LagrangianField:
    """Field induced by a toy plan: particles follow the tree up to ``T`` and
    then move straight to their label, reached at ``T_lam = T + 1/lam``.

    Labels of a leaf are Gauss-Legendre nodes of the interval it irrigates
    in the optimal monotone assignment, which makes the quadrature exact.
    For a plan on ``[-T, T]`` the forward half is used and the field is
    marked as mirrored.
    """
    if nodes_per_leaf < 2:
        raise ValueError("need at least two labels per leaf")
    mirrored = plan.t_start < 0
    half = _forward_half(plan)
    leaves = _leaf_intervals(half)
    T = half.t_end
    T_lam = T + 1.0 / lam
    paths = _leaf_paths(half, leaves)
    gx, gw = np.polynomial.legendre.leggauss(nodes_per_leaf)
    t_grid = np.unique(np.concatenate([half.times, [T, T_lam]]))
    xs, ws, cols = [], [], []
    for (pt, px, _), lo, hi in zip(paths, leaves.lo, leaves.hi):
        x = lo + (hi - lo) * (gx + 1.0) / 2.0
        w = (hi - lo) * gw / 2.0
        before = np.interp(t_grid[t_grid <= T], pt, px)
        for xi, wi in zip(x, w):
            after = before[-1] + (t_grid[t_grid > T] - T) * lam * (xi - before[-1])
            xs.append(xi)
            ws.append(wi)
            cols.append(np.concatenate([before, after]))
    X = np.array(cols).T
    order = np.argsort(xs, kind="stable")
    return LagrangianField(t_grid, np.array(xs)[order], np.array(ws)[order], X[:, order], T, mirrored)


def lagrangian_energy(fld: LagrangianField, lam: float | None = None, T: float | None = None) -> float:
    """Perimeter ``int int 1/phi_X`` over ``t <= T`` plus ``int int |dX/dt|^2``
    over the whole time grid (which ends at ``T_lam``).

    Returns ``inf`` if some trajectory is alone at its position on a
    perimeter interval. Doubles the value for mirrored fields.
    """
    T = fld.T if T is None else T
    dt = np.diff(fld.times)
    dX = np.diff(fld.X, axis=0)
    kinetic = math.fsum((fld.weights[None, :] * dX**2 / dt[:, None]).ravel())
    perimeter = 0.0
    for k in range(len(dt)):
        if fld.times[k] >= T - 1e-15:
            break
        mid = 0.5 * (fld.X[k] + fld.X[k + 1])
        mult = fld.multiplicity(mid)
        if np.any(mult <= 0):
            return math.inf
        perimeter += dt[k] * math.fsum(fld.weights / mult)
    total = perimeter + kinetic
    return 2.0 * total if fld.mirrored else total


# ---------------------------------------------------------------------------
# cone property and equipartition
# ---------------------------------------------------------------------------


def cone_bounds(t: float, X_i: float, A_i, T_lam: float, s: float) -> tuple[float, float]:
    """Interval spanned at time ``s`` by the cone from ``(t, X_i)`` to
    ``A_i x {T_lam}``."""
    if s < t:
        raise ValueError("s must not precede t")
    if s > T_lam:
        raise ValueError("s must not exceed T_lam")
    a = (s - t) / (T_lam - t)
    b = (T_lam - s) / (T_lam - t)
    return a * A_i[0] + b * X_i, a * A_i[1] + b * X_i


@dataclass(frozen=True)
class ConeViolation:
    node: int
    time: float
    label: float
    position: float
    lower: float
    upper: float


def check_cone_property(plan: BranchedPlan, lam: float, tol: float = 1e-9) -> list[ConeViolation]:
    """Check that every forward subtree stays in its cone.

    For each node at ``t >= 0`` the labels irrigated through it form an
    interval ``A``; trajectories of those labels must lie in the cone from
    the node to ``A`` at time ``T_lam``. Trajectories and cone boundaries are
    piecewise affine with common kinks, so checking at node times, ``T`` and
    ``T_lam`` and at leaf-interval endpoints is exact. Plans on ``[-T, T]``
    are checked on their forward half.
    """
    half = _forward_half(plan)
    leaves = _leaf_intervals(half)
    T = half.t_end
    T_lam = T + 1.0 / lam
    paths = _leaf_paths(half, leaves)
    through = {}
    for k, (_, _, chain) in enumerate(paths):
        for node in chain:
            through.setdefault(node, []).append(k)
    out = []
    for node, ks in sorted(through.items()):
        t0 = half.times[node]
        if t0 < 0 or t0 >= T:
            continue
        A = (min(leaves.lo[k] for k in ks), max(leaves.hi[k] for k in ks))
        X0 = leaves.lifted[node]
        samples = np.unique(np.concatenate([half.times[half.times > t0], [T, T_lam]]))
        for k in ks:
            pt, px, _ = paths[k]
            for x in (leaves.lo[k], leaves.hi[k]):
                for s in samples:
                    if s <= T:
                        pos = float(np.interp(s, pt, px))
                    else:
                        y = px[-1]
                        pos = y + (s - T) * lam * (x - y)
                    lo, hi = cone_bounds(t0, X0, A, T_lam, s)
                    if pos < lo - tol or pos > hi + tol:
                        out.append(ConeViolation(int(node), float(s), float(x), pos, lo, hi))
    return out


def equipartition_residual(plan: BranchedPlan, power: float | None = None) -> tuple[float, float]:
    """Time-average of ``Lambda = dP/dt - dE_cin/dt`` and its largest deviation.

    Lambda is constant on each interval between consecutive node times; the
    average is weighted by interval length.
    """
    if power is None:
        power = (plan.dim - 1) / plan.dim
    ts = np.unique(plan.times)
    if len(ts) < 2:
        return 0.0, 0.0
    tt = plan.times[plan.tails]
    th = plan.times[plan.heads]
    speed2 = np.sum(plan.edge_displacements() ** 2, axis=1) / (th - tt) ** 2
    per = plan.fluxes**power if power else np.ones(plan.n_edges)
    kin = plan.fluxes * speed2
    lams, lens = [], []
    for a, b in zip(ts[:-1], ts[1:]):
        if b - a <= 1e-15:
            continue
        mid = 0.5 * (a + b)
        alive = (tt < mid) & (mid < th)
        lams.append(math.fsum(per[alive]) - math.fsum(kin[alive]))
        lens.append(b - a)
    lams, lens = np.array(lams), np.array(lens)
    bar = math.fsum(lams * lens) / math.fsum(lens)
    return bar, float(np.max(np.abs(lams - bar)))


def equipartition_bound_ok(plan: BranchedPlan, c: float = C_EQUIPARTITION) -> bool:
    """``|Lambda_bar| <= c I(mu) / T`` with I on the whole plan."""
    bar, _ = equipartition_residual(plan)
    I = internal_energy(plan, plan.t_start, plan.t_end).total
    return abs(bar) <= c * I / plan.T


def count_interior_branchings(plan: BranchedPlan) -> int:
    """Nodes strictly inside the time range with more than one outgoing edge."""
    out = np.bincount(plan.tails, minlength=plan.n_nodes)
    inner = (plan.times > plan.t_start) & (plan.times < plan.t_end)
    return int(np.sum((out > 1) & inner))


__all__ = [
    "segment_energy", "optimal_segment_count", "SubtreeProblem", "rescale",
    "branching_threshold", "tree_energy", "polish_tree", "solve_E", "SubtreeSolution",
    "subtree_plan", "toy_plan", "solve_toy", "ToySolution", "toy_lower_bound",
    "toy_energy_of_plan", "LagrangianField", "lagrangian_field", "lagrangian_energy",
    "cone_bounds", "check_cone_property", "ConeViolation", "equipartition_residual",
    "equipartition_bound_ok", "count_interior_branchings", "periodic_displacement",
]
