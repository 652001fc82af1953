"""Optimal transport on the torus with the squared periodic distance.

Discrete problems are solved by a transportation simplex whose basic
solutions live on a spanning tree of the bipartite graph, so optimal plans
have at most ``n + m - 1`` entries. One-dimensional problems reduce to a
scalar search over the rotation offset of the quantile functions.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from .core_model import DiscreteMeasure, GridDensity, periodic_displacement

MASS_TOL = 1e-10
MAX_TABLE = 4_000_000
LEBESGUE = GridDensity.lebesgue(1)


def cost_matrix(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Squared periodic distances between two point clouds of shape (n, d)."""
    disp = periodic_displacement(x[:, None, :], y[None, :, :])
    return np.sum(disp**2, axis=-1)


@dataclass(frozen=True)
class SparsePlan:
    """Transport plan stored by its support.

    ``rows[k] -> cols[k]`` carries ``masses[k] > 0``.
    """

    rows: np.ndarray
    cols: np.ndarray
    masses: np.ndarray
    cost: float
    shape: tuple

    @property
    def support_size(self) -> int:
        return len(self.masses)

    @property
    def entries(self) -> list:
        return [(int(i), int(j), float(p)) for i, j, p in zip(self.rows, self.cols, self.masses)]

    def dense(self) -> np.ndarray:
        out = np.zeros(self.shape)
        np.add.at(out, (self.rows, self.cols), self.masses)
        return out

    def to_dict(self) -> dict:
        return {
            "cost": self.cost,
            "support_size": self.support_size,
            "entries": [{"i": i, "j": j, "mass": p} for i, j, p in self.entries],
        }


# ---------------------------------------------------------------------------
# transportation simplex
# ---------------------------------------------------------------------------

def _initial_basis(a, b, C):
    """Least-cost rule; returns exactly ``n + m - 1`` basic cells (a tree)."""
    n, m = C.shape
    supply = a.astype(float).copy()
    demand = b.astype(float).copy()
    row_done = np.zeros(n, bool)
    col_done = np.zeros(m, bool)
    rows_left, cols_left = n, m
    basis = {}
    for idx in np.argsort(C, axis=None, kind="stable"):
        i, j = divmod(int(idx), m)
        if row_done[i] or col_done[j]:
            continue
        x = min(supply[i], demand[j])
        basis[(i, j)] = max(x, 0.0)
        if rows_left == 1 and cols_left == 1:
            break
        if (supply[i] <= demand[j] and rows_left > 1) or cols_left == 1:
            row_done[i] = True
            rows_left -= 1
            demand[j] -= x
            supply[i] = 0.0
        else:
            col_done[j] = True
            cols_left -= 1
            supply[i] -= x
            demand[j] = 0.0
    return basis


def _tree_path(adj, start, goal):
    """Node path from ``start`` to ``goal`` in a forest given as adjacency sets."""
    parent = {start: None}
    queue = deque([start])
    while queue:
        u = queue.popleft()
        if u == goal:
            break
        for w in adj[u]:
            if w not in parent:
                parent[w] = u
                queue.append(w)
    if goal not in parent:
        return None
    path = [goal]
    while path[-1] != start:
        path.append(parent[path[-1]])
    return path[::-1]


def _potentials(adj, C, n, m):
    u = np.full(n, np.nan)
    v = np.full(m, np.nan)
    u[0] = 0.0
    queue = deque([0])
    seen = {0}
    while queue:
        node = queue.popleft()
        for w in adj[node]:
            if w in seen:
                continue
            seen.add(w)
            if node < n:
                v[w - n] = C[node, w - n] - u[node]
            else:
                u[w] = C[w, node - n] - v[node - n]
            queue.append(w)
    return u, v


def transport_simplex(a, b, C, tol: float = 1e-13, max_iter: int | None = None):
    """Solve ``min <C, P>`` over couplings of ``a`` and ``b``.

    Dantzig pricing with lowest-index tie-breaking; after a run of degenerate
    pivots the entering rule switches to Bland's (first improving cell).

    Returns
    -------
    dict mapping (i, j) to the mass of every basic cell (zeros included).
    """
    n, m = C.shape
    basis = _initial_basis(a, b, C)
    adj = [set() for _ in range(n + m)]
    for i, j in basis:
        adj[i].add(n + j)
        adj[n + j].add(i)
    max_iter = max_iter or 50 * (n + m) * max(10, int(math.log2(n * m + 1)))
    degenerate_run = 0
    for _ in range(max_iter):
        u, v = _potentials(adj, C, n, m)
        red = C - u[:, None] - v[None, :]
        if degenerate_run < 20:
            k = int(np.argmin(red))
            if red.flat[k] >= -tol:
                return basis
        else:
            cand = np.flatnonzero(red.ravel() < -tol)
            if len(cand) == 0:
                return basis
            k = int(cand[0])
        i, j = divmod(k, m)
        path = _tree_path(adj, i, n + j)
        # cycle: entering (i, j) with +, then path edges alternate -, +, ...
        minus = []
        for s in range(0, len(path) - 1, 2):
            p, q = path[s], path[s + 1]
            minus.append((p, q - n) if p < n else (q, p - n))
        theta = min(basis[c] for c in minus)
        leaving = min((c for c in minus if basis[c] <= theta), key=lambda c: c[0] * m + c[1])
        degenerate_run = degenerate_run + 1 if theta <= 0 else 0
        for s in range(len(path) - 1):
            p, q = path[s], path[s + 1]
            cell = (p, q - n) if p < n else (q, p - n)
            basis[cell] += -theta if s % 2 == 0 else theta
        basis[(i, j)] = theta
        del basis[leaving]
        li, lj = leaving
        adj[li].discard(n + lj)
        adj[n + lj].discard(li)
        adj[i].add(n + j)
        adj[n + j].add(i)
    raise RuntimeError("transportation simplex did not converge")


def prune_support(rows, cols, masses, C):
    """Remove cycles from the support of a plan without increasing its cost.

    Each cycle is cancelled by shifting mass around it in its non-increasing
    cost direction until one entry vanishes, so the result is a forest with
    at most ``n + m - 1`` entries.
    """
    n, m = C.shape
    flow = {}
    for i, j, p in zip(rows, cols, masses):
        if p > 0:
            flow[(int(i), int(j))] = flow.get((int(i), int(j)), 0.0) + float(p)
    adj = [set() for _ in range(n + m)]
    kept = {}
    for (i, j), p in sorted(flow.items()):
        path = _tree_path(adj, n + j, i)
        if path is None:
            kept[(i, j)] = p
            adj[i].add(n + j)
            adj[n + j].add(i)
            continue
        # cycle: (i, j) with +, path from col j back to row i alternates -, +
        cells = [(i, j)]
        for s in range(len(path) - 1):
            a_, b_ = path[s], path[s + 1]
            cells.append((a_, b_ - n) if a_ < n else (b_, a_ - n))
        signs = np.array([1.0 if k % 2 == 0 else -1.0 for k in range(len(cells))])
        delta = sum(sg * C[c] for sg, c in zip(signs, cells))
        if delta > 0:
            signs = -signs
        current = dict(kept)
        current[(i, j)] = p
        theta = min(current[c] for c, sg in zip(cells, signs) if sg < 0)
        for c, sg in zip(cells, signs):
            current[c] += sg * theta
        zero = [c for c, sg in zip(cells, signs) if sg < 0 and current[c] <= theta * 1e-15]
        gone = min(zero, key=lambda c: c[0] * m + c[1])
        current[gone] = 0.0
        for c in cells:
            if c != (i, j):
                kept[c] = current[c]
        if gone != (i, j):
            del kept[gone]
            gi, gj = gone
            adj[gi].discard(n + gj)
            adj[n + gj].discard(gi)
            kept[(i, j)] = current[(i, j)]
            adj[i].add(n + j)
            adj[n + j].add(i)
    items = sorted((c, p) for c, p in kept.items() if p > 0)
    r = np.array([c[0] for c, _ in items], dtype=int)
    c_ = np.array([c[1] for c, _ in items], dtype=int)
    p = np.array([q for _, q in items], dtype=float)
    return r, c_, p


def _highs_plan(a, b, C):
    n, m = C.shape
    idx = np.arange(n * m)
    rows_eq = sparse.csr_matrix(
        (np.ones(2 * n * m), (np.concatenate([idx // m, n + idx % m]), np.concatenate([idx, idx]))),
        shape=(n + m, n * m))
    res = linprog(C.ravel(), A_eq=rows_eq, b_eq=np.concatenate([a, b]),
                  bounds=(0, None), method="highs-ds")
    if res.status != 0:
        raise RuntimeError(f"LP solver failed: {res.message}")
    x = res.x.reshape(n, m)
    r, c = np.nonzero(x > 0)
    return prune_support(r, c, x[r, c], C)


def solve_discrete(a, b, C, method: str = "auto") -> SparsePlan:
    """Sparse optimal plan for given marginals and cost matrix."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if abs(math.fsum(a) - math.fsum(b)) > MASS_TOL:
        raise ValueError(f"mass mismatch: {math.fsum(a)!r} vs {math.fsum(b)!r}")
    n, m = C.shape
    if n * m > MAX_TABLE:
        raise ValueError(f"problem too large: {n} x {m}")
    if method == "auto":
        method = "simplex" if n * m <= 40_000 else "highs"
    if method == "simplex":
        basis = transport_simplex(a, b, C)
        cells = sorted(c for c, p in basis.items() if p > 0)
        r = np.array([c[0] for c in cells], dtype=int)
        c_ = np.array([c[1] for c in cells], dtype=int)
        p = np.array([basis[c] for c in cells], dtype=float)
        r, c_, p = prune_support(r, c_, p, C)
    elif method == "highs":
        r, c_, p = _highs_plan(a, b, C)
    else:
        raise ValueError(f"unknown method {method!r}")
    cost = math.fsum(p * C[r, c_])
    return SparsePlan(r, c_, p, cost, (n, m))


def w2_periodic_discrete(mu: DiscreteMeasure, nu: DiscreteMeasure, method: str = "auto") -> SparsePlan:
    """Optimal plan between two atomic measures for the squared periodic distance.

    Raises
    ------
    ValueError
        If the total masses differ by more than 1e-10.
    """
    if mu.dim != nu.dim:
        raise ValueError("dimension mismatch")
    return solve_discrete(mu.masses, nu.masses, cost_matrix(mu.positions, nu.positions), method)


def dense_lp_cost(mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
    """Reference value from the HiGHS interior-point solver on the full LP."""
    C = cost_matrix(mu.positions, nu.positions)
    n, m = C.shape
    idx = np.arange(n * m)
    rows_eq = sparse.csr_matrix(
        (np.ones(2 * n * m), (np.concatenate([idx // m, n + idx % m]), np.concatenate([idx, idx]))),
        shape=(n + m, n * m))
    res = linprog(C.ravel(), A_eq=rows_eq, b_eq=np.concatenate([mu.masses, nu.masses]),
                  bounds=(0, None), method="highs-ipm",
                  options={"primal_feasibility_tolerance": 1e-10,
                           "dual_feasibility_tolerance": 1e-10})
    return float(res.fun)


def wasserstein_to_lebesgue_2d(sigma: DiscreteMeasure, M: int, method: str = "auto") -> float:
    """Squared periodic distance from ``sigma`` to the uniform ``M x M`` grid.

    The grid atoms sit at cell centers with equal masses summing to the mass
    of ``sigma``, so the value converges to the distance to Lebesgue as
    ``M`` grows (error of order ``1 / M**2``).
    """
    if M < 8:
        raise ValueError("grid resolution must be at least 8")
    if M > 2048 or len(sigma) * M * M > MAX_TABLE:
        raise ValueError(f"grid resolution {M} too large")
    grid = DiscreteMeasure.uniform_grid(M, dim=2, total=sigma.total_mass())
    return w2_periodic_discrete(sigma, grid, method).cost


def richardson_w2_to_lebesgue_2d(sigma: DiscreteMeasure, M: int) -> float:
    """Second-order extrapolation from resolutions ``M / 2`` and ``M``."""
    coarse = wasserstein_to_lebesgue_2d(sigma, M // 2)
    fine = wasserstein_to_lebesgue_2d(sigma, M)
    return (4.0 * fine - coarse) / 3.0


def mccann_interpolate(plan: SparsePlan, mu: DiscreteMeasure, nu: DiscreteMeasure, s: float) -> DiscreteMeasure:
    """Displacement interpolant at fraction ``s`` of a plan between ``mu`` and ``nu``.

    Mass moves along minimal periodic geodesics; an exactly antipodal pair is
    moved in the positive direction.
    """
    if not 0.0 <= s <= 1.0:
        raise ValueError("s must lie in [0, 1]")
    if s == 0.0:
        return mu
    if s == 1.0:
        return nu
    x = mu.positions[plan.rows]
    y = nu.positions[plan.cols]
    pos = x + s * periodic_displacement(x, y, tie="positive")
    return DiscreteMeasure.from_atoms(pos, plan.masses, dim=mu.dim)


# ---------------------------------------------------------------------------
# one-dimensional periodic transport
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class _Quantile:
    """Quantile function on [0, m) as linear pieces, jumps allowed between them."""

    q0: np.ndarray
    q1: np.ndarray
    x0: np.ndarray
    x1: np.ndarray

    @property
    def mass(self) -> float:
        return float(self.q1[-1])

    def periodic(self, theta: float) -> "_Quantile":
        """Pieces of ``q -> Q(q - theta)`` extended by ``Q(q + m) = Q(q) + 1``,
        covering at least [0, m]."""
        m = self.mass
        lo = math.floor(-theta / m) - 1
        hi = math.ceil((m - theta) / m) + 1
        js = np.arange(lo, hi + 1)
        q0 = (self.q0[None, :] + theta + js[:, None] * m).ravel()
        q1 = (self.q1[None, :] + theta + js[:, None] * m).ravel()
        x0 = (self.x0[None, :] + js[:, None]).ravel()
        x1 = (self.x1[None, :] + js[:, None]).ravel()
        return _Quantile(q0, q1, x0, x1)

    def eval_on(self, q_left, q_right):
        """Values at both ends of sub-intervals, using the piece that contains
        each sub-interval's midpoint."""
        mid = 0.5 * (q_left + q_right)
        k = np.clip(np.searchsorted(self.q0, mid, side="right") - 1, 0, len(self.q0) - 1)
        h = self.q1[k] - self.q0[k]
        slope = np.where(h > 0, (self.x1[k] - self.x0[k]) / np.where(h > 0, h, 1.0), 0.0)
        return (self.x0[k] + slope * (q_left - self.q0[k]),
                self.x0[k] + slope * (q_right - self.q0[k]))


def _quantile_of(measure) -> _Quantile:
    if isinstance(measure, DiscreteMeasure):
        if measure.dim != 1:
            raise ValueError("one-dimensional transport needs d = 1")
        order = np.argsort(measure.positions[:, 0], kind="stable")
        x = measure.positions[order, 0]
        cum = np.concatenate([[0.0], np.cumsum(measure.masses[order])])
        return _Quantile(cum[:-1], cum[1:], x, x)
    if isinstance(measure, GridDensity):
        if measure.dim != 1:
            raise ValueError("one-dimensional transport needs d = 1")
        keep = measure.masses > 0
        lo, hi, w = measure.lo[keep, 0], measure.hi[keep, 0], measure.masses[keep]
        order = np.argsort(lo, kind="stable")
        lo, hi, w = lo[order], hi[order], w[order]
        cum = np.concatenate([[0.0], np.cumsum(w)])
        return _Quantile(cum[:-1], cum[1:], lo, hi)
    raise TypeError(f"unsupported measure type {type(measure).__name__}")


def _offset_cost(Q1: _Quantile, Q2: _Quantile, theta: float) -> float:
    """``int_0^m (Q1(q) - Q2(q - theta))**2 dq`` with the periodic extension of Q2."""
    m = Q1.mass
    shifted = Q2.periodic(theta)
    pts = np.concatenate([[0.0, m], Q1.q0, Q1.q1, shifted.q0, shifted.q1])
    pts = np.unique(pts[(pts >= 0.0) & (pts <= m)])
    ql, qr = pts[:-1], pts[1:]
    a1, b1 = Q1.eval_on(ql, qr)
    a2, b2 = shifted.eval_on(ql, qr)
    a, b = a1 - a2, b1 - b2
    return math.fsum((qr - ql) * (a * a + a * b + b * b) / 3.0)


@dataclass(frozen=True)
class MonotoneMap:
    """Nondecreasing map ``x -> Q2(F1(x) - offset)`` with ``Psi - x`` periodic.

    ``F1`` is the cumulative distribution of the (atomless) source and ``Q2``
    the periodically extended quantile function of the target.
    """

    source: _Quantile
    target: _Quantile
    offset: float

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        base = np.floor(x)
        xr = x - base
        src = self.source
        k = np.clip(np.searchsorted(src.x0, xr, side="right") - 1, 0, len(src.x0) - 1)
        width = src.x1[k] - src.x0[k]
        q = src.q0[k] + (src.q1[k] - src.q0[k]) * np.clip((xr - src.x0[k]) / width, 0.0, 1.0)
        shifted = self.target.periodic(self.offset)
        y, _ = shifted.eval_on(q, q)
        # at a target atom the map is constant; eval_on with a zero-length
        # interval picks the piece starting at q, which is the right limit
        return y + base

    @property
    def breakpoints(self) -> np.ndarray:
        """Source positions where the map changes piece."""
        src = self.source
        shifted = self.target.periodic(self.offset)
        qs = np.concatenate([shifted.q0, shifted.q1])
        qs = np.unique(qs[(qs > 0) & (qs < src.mass)])
        k = np.clip(np.searchsorted(src.q0, qs, side="right") - 1, 0, len(src.q0) - 1)
        frac = (qs - src.q0[k]) / (src.q1[k] - src.q0[k])
        return src.x0[k] + frac * (src.x1[k] - src.x0[k])

    def mean_displacement(self, n: int = 20001) -> float:
        """``int_0^1 (Psi(x) - x) dx`` by the midpoint rule on ``n`` points."""
        x = (np.arange(n) + 0.5) / n
        return float(np.mean(self(x) - x))


def _source_is_atomless(Q: _Quantile) -> bool:
    return bool(np.all(Q.x1 > Q.x0))


def w2_periodic_1d(mu, nu, tol: float = 1e-14):
    """Squared periodic Wasserstein distance on the circle.

    Parameters
    ----------
    mu, nu : DiscreteMeasure or GridDensity
        One-dimensional measures of equal mass.

    Returns
    -------
    cost : float
    psi : MonotoneMap or None
        Optimal monotone map from ``mu`` to ``nu``; ``None`` when ``mu`` has
        atoms and no map exists.

    Notes
    -----
    The cost of the monotone coupling with rotation offset ``theta`` is a
    convex, piecewise-polynomial function of ``theta``. It is minimized by
    golden-section search over one period and then exactly on the piece
    containing the minimizer.
    """
    Q1, Q2 = _quantile_of(mu), _quantile_of(nu)
    m = Q1.mass
    if abs(m - Q2.mass) > MASS_TOL:
        raise ValueError("measures must have equal mass")
    if m == 0:
        return 0.0, None
    # rescale the target quantile parameter so both end at exactly m
    Q2 = _Quantile(Q2.q0 * m / Q2.mass, Q2.q1 * m / Q2.mass, Q2.x0, Q2.x1)

    def f(theta):
        return _offset_cost(Q1, Q2, theta)

    # the zero-mean offset lies within one period of the minimizer
    mean1 = math.fsum((Q1.q1 - Q1.q0) * (Q1.x0 + Q1.x1) / 2)
    mean2 = math.fsum((Q2.q1 - Q2.q0) * (Q2.x0 + Q2.x1) / 2)
    centre = (mean2 - mean1) * m
    lo, hi = centre - m, centre + m
    invphi = (math.sqrt(5) - 1) / 2
    c, d = hi - invphi * (hi - lo), lo + invphi * (hi - lo)
    fc, fd = f(c), f(d)
    while hi - lo > 1e-9 * m:
        if fc <= fd:
            hi, d, fd = d, c, fc
            c = hi - invphi * (hi - lo)
            fc = f(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + invphi * (hi - lo)
            fd = f(d)
    theta = 0.5 * (lo + hi)
    theta = _refine_on_piece(Q1, Q2, theta, f)
    cost = f(theta)
    psi = MonotoneMap(Q1, Q2, theta) if _source_is_atomless(Q1) else None
    return max(cost, 0.0), psi


def _offset_breakpoints(Q1: _Quantile, Q2: _Quantile, theta: float) -> np.ndarray:
    m = Q1.mass
    k1 = np.unique(np.concatenate([Q1.q0, Q1.q1]))
    k2 = np.unique(np.concatenate([Q2.q0, Q2.q1]))
    diffs = (k1[:, None] - k2[None, :]).ravel()
    js = np.arange(-3, 4)
    cand = (diffs[None, :] + js[:, None] * m).ravel()
    return np.unique(cand[np.abs(cand - theta) <= 2 * m])


def _refine_on_piece(Q1, Q2, theta, f):
    """Exact minimization of the cubic offset cost on the pieces adjacent to ``theta``."""
    bps = _offset_breakpoints(Q1, Q2, theta)
    k = np.searchsorted(bps, theta)
    best, best_val = theta, f(theta)
    for lo_i in (k - 2, k - 1, k):
        if lo_i < 0 or lo_i + 1 >= len(bps):
            continue
        a, b = bps[lo_i], bps[lo_i + 1]
        if b - a <= 0:
            continue
        xs = a + (b - a) * np.array([0.0, 1 / 3, 2 / 3, 1.0])
        ys = np.array([f(x) for x in xs])
        cands = [a, b]
        coef = np.linalg.solve(np.vander(np.array([0.0, 1 / 3, 2 / 3, 1.0]), 4), ys)
        for r in np.roots(np.polyder(coef)):
            if abs(r.imag) < 1e-12 and 0 <= r.real <= 1:
                cands.append(a + r.real * (b - a))
        for x in cands:
            v = f(x)
            if v < best_val:
                best, best_val = x, v
    return best


def w2_to_lebesgue_1d(measure) -> float:
    """Squared periodic distance of a unit-mass 1D measure to Lebesgue."""
    cost, _ = w2_periodic_1d(LEBESGUE, measure)
    return cost
