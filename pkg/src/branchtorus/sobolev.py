"""Negative Sobolev norms of signed measures on the torus, computed on the
Fourier side, and Riesz energies of piecewise-constant densities."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

from .core_model import DiscreteMeasure, GridDensity

MAX_ENTRIES = 10**8
ZERO_MODE_TOL = 1e-12


@dataclass(frozen=True)
class FourierTable:
    """Fourier coefficients of ``sigma - Lebesgue`` on a truncated lattice.

    The table holds every ``k`` with ``0 < |k|_inf <= K_max`` lying on the
    sublattice ``period * Z^d``; coefficients off that sublattice are known to
    vanish. ``tail`` describes how coefficients beyond ``K_max`` are bounded:
    ``("none",)`` when they are zero, ``("atoms", M)`` for ``|c_k| <= M``, and
    ``("boxes", M, B)`` for ``|c_k| <= min(M, B / |k|_inf)``.
    """

    dim: int
    K_max: int
    ks: np.ndarray
    values: np.ndarray
    zero_mode: complex = 0.0
    period: int = 1
    tail: tuple = ("none",)

    @property
    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.ks, axis=1)

    def coefficient(self, k) -> complex:
        k = np.asarray(k, dtype=int).reshape(-1)
        if not k.any():
            return self.zero_mode
        hit = np.flatnonzero(np.all(self.ks == k, axis=1))
        if len(hit):
            return complex(self.values[hit[0]])
        if np.max(np.abs(k)) <= self.K_max:
            return 0j
        raise KeyError(f"mode {k.tolist()} outside the table")

    @classmethod
    def from_modes(cls, dim: int, K_max: int, modes: dict, zero_mode: complex = 0.0):
        """Table of a trigonometric polynomial given as ``{k: c_k}``."""
        ks = _lattice(dim, K_max, 1)
        vals = np.zeros(len(ks), dtype=complex)
        index = {tuple(k): i for i, k in enumerate(ks.tolist())}
        for k, c in modes.items():
            k = tuple(int(v) for v in np.atleast_1d(k))
            if k not in index:
                raise ValueError(f"mode {k} outside the table")
            vals[index[k]] = c
        return cls(dim, K_max, ks, vals, complex(zero_mode), 1, ("none",))

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "K_max": self.K_max,
            "period": self.period,
            "zero_mode": {"re": float(np.real(self.zero_mode)), "im": float(np.imag(self.zero_mode))},
            "entries": [
                {"k": [int(v) for v in k], "re": float(c.real), "im": float(c.imag)}
                for k, c in zip(self.ks, self.values)
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "FourierTable":
        dim, K = int(data["dim"]), int(data["K_max"])
        ks = np.array([e["k"] for e in data["entries"]], dtype=int).reshape(-1, dim)
        vals = np.array([complex(e["re"], e["im"]) for e in data["entries"]])
        z = data.get("zero_mode", {"re": 0.0, "im": 0.0})
        return cls(dim, K, ks, vals, complex(z["re"], z["im"]), int(data.get("period", 1)),
                   ("unknown",))


def _lattice(dim: int, K_max: int, period: int) -> np.ndarray:
    J = K_max // period
    r = np.arange(-J, J + 1)
    if dim == 1:
        ks = r[:, None]
    else:
        a, b = np.meshgrid(r, r, indexing="ij")
        ks = np.column_stack([a.ravel(), b.ravel()])
    ks = ks[np.any(ks != 0, axis=1)]
    return ks * period


def fourier_of_measure(sigma, K_max: int, period: int = 1) -> FourierTable:
    """Fourier coefficients ``int exp(-2 pi i k.x) d(sigma - 1)`` for ``k != 0``.

    Parameters
    ----------
    sigma : DiscreteMeasure or GridDensity
        Atoms give ``sum_j m_j exp(-2 pi i k.x_j)``; boxes give the exact
        product of per-axis phase and sinc factors.
    K_max : int
        Truncation in the sup norm.
    period : int, optional
        Only modes in ``period * Z^d`` are tabulated. Use this when ``sigma``
        is invariant under translations by ``1 / period``; all other modes
        then vanish.
    """
    if K_max < 1:
        raise ValueError("K_max must be at least 1")
    dim = sigma.dim
    J = K_max // period
    if (2 * J + 1) ** dim > MAX_ENTRIES:
        raise ValueError(f"table with K_max = {K_max} exceeds {MAX_ENTRIES} entries")
    r = np.arange(-J, J + 1) * period
    if isinstance(sigma, DiscreteMeasure):
        pos, w = sigma.positions, sigma.masses
        factors = [np.exp(-2j * np.pi * np.outer(r, pos[:, a])) for a in range(dim)]
        tail = ("atoms", float(np.sum(np.abs(w))))
    elif isinstance(sigma, GridDensity):
        c, h, w = sigma.centers, sigma.sides, sigma.masses
        factors = [np.exp(-2j * np.pi * np.outer(r, c[:, a])) * np.sinc(np.outer(r, h[:, a]))
                   for a in range(dim)]
        tail = ("boxes", float(np.sum(w)), float(np.sum(w / (np.pi * h.min(axis=1)))))
    else:
        raise TypeError(f"unsupported measure type {type(sigma).__name__}")
    if dim == 1:
        grid = factors[0] @ w
    else:
        grid = (factors[0] * w) @ factors[1].T
    grid = np.asarray(grid).reshape((2 * J + 1,) * dim)
    ks = _lattice(dim, K_max, period)
    idx = tuple((ks[:, a] // period + J) for a in range(dim))
    vals = grid[idx]
    zero = complex(math.fsum(w) - 1.0)
    return FourierTable(dim, K_max, ks, vals, zero, period, tail)


def _check_zero_mode(tab: FourierTable):
    if abs(tab.zero_mode) > ZERO_MODE_TOL:
        raise ValueError(f"nonzero zero mode {tab.zero_mode}; the measure must have unit mass")


def _lattice_tail_sum(dim: int, J: int, period: int, s: float, amp) -> float:
    """Bound on ``sum_{|m|_inf > J} amp(period * |m|_inf)**2 * (period * |m|_inf)**(-s)``.

    Uses that the shell ``|m|_inf = j`` has 2 (d = 1) or 8j (d = 2) points.
    ``amp=None`` stands for a constant amplitude of 1.
    """
    count_power = dim - 1
    count = 2.0 if dim == 1 else 8.0
    if amp is None:
        expo = s - count_power
        if expo <= 1:
            return math.inf
        # sum_{j > J} j^{-expo} <= int_J^inf, with J >= 1; J = 0 adds the first shell
        head = 0.0
        if J == 0:
            head, J = count * period ** (-s), 1
        return head + count * period ** (-s) * J ** (1 - expo) / (expo - 1)
    M, B = amp
    j = np.arange(J + 1, J + 200_001, dtype=float)
    k = period * j
    a = np.minimum(M, B / k)
    head = math.fsum(count * j**count_power * a**2 * k ** (-s))
    # beyond the explicit shells amp <= B / k
    J2 = j[-1]
    expo = s + 2 - count_power
    rest = count * B**2 * period ** (-s - 2) * J2 ** (1 - expo) / (expo - 1)
    return head + rest


def h_negative_norm_sq(tab: FourierTable, gamma: float) -> tuple[float, float]:
    """``sum_{k != 0} |k|^(-2 gamma) |c_k|^2`` over the table, and a tail bound.

    Returns
    -------
    value : float
        The truncated sum.
    tail_bound : float
        Upper bound on the omitted modes; ``inf`` when the bound diverges, as
        for atoms in two dimensions with ``gamma = 1/2``.
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    _check_zero_mode(tab)
    if len(tab.ks) == 0:
        return 0.0, 0.0
    w = tab.norms ** (-2.0 * gamma)
    value = math.fsum(w * np.abs(tab.values) ** 2)
    J = tab.K_max // tab.period
    kind = tab.tail[0]
    if kind == "none":
        tail = 0.0
    elif kind == "atoms":
        tail = tab.tail[1] ** 2 * _lattice_tail_sum(tab.dim, J, tab.period, 2 * gamma, None)
    elif kind == "boxes":
        tail = _lattice_tail_sum(tab.dim, J, tab.period, 2 * gamma, tab.tail[1:])
    else:
        tail = math.inf
    return value, tail


def semigroup_norm_sq(tab: FourierTable, gamma: float) -> float:
    """``int_0^1 eta^(2 gamma) sum_{|k| <= 1/eta} |k| |c_k|^2 d eta`` over the table.

    The inner sum is a step function of ``eta`` with jumps at ``1/|k|``; the
    integral is accumulated exactly piece by piece.
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    _check_zero_mode(tab)
    if len(tab.ks) == 0:
        return 0.0
    r = tab.norms
    weight = r * np.abs(tab.values) ** 2
    order = np.argsort(r, kind="stable")
    r, weight = r[order], weight[order]
    levels, starts = np.unique(r, return_index=True)
    inner = np.cumsum(np.add.reduceat(weight, starts))  # sum over |k| <= level
    # on eta in (1/levels[i+1], 1/levels[i]] the inner sum is inner[i]
    upper = 1.0 / levels
    lower = np.append(1.0 / levels[1:], 0.0)
    p = 2.0 * gamma + 1.0
    upper = np.minimum(upper, 1.0)
    lower = np.minimum(lower, 1.0)
    return math.fsum(inner * (upper**p - lower**p) / p)


def shear_damping(tab: FourierTable, eta: float, axis: int) -> FourierTable:
    """Coefficients of ``(sigma(. - eta e) + sigma(. + eta e)) / 2``.

    ``axis`` is 1-based. Each coefficient is multiplied by ``cos(2 pi eta k.e)``.
    """
    if not 1 <= axis <= tab.dim:
        raise ValueError(f"axis must be in 1..{tab.dim}")
    if eta == 0:
        return tab
    factor = np.cos(2.0 * np.pi * eta * tab.ks[:, axis - 1])
    return replace(tab, values=tab.values * factor)


# ---------------------------------------------------------------------------
# Riesz energy
# ---------------------------------------------------------------------------

def _G(u, alpha):
    return np.abs(u) ** (2.0 - alpha) / ((1.0 - alpha) * (2.0 - alpha))


def _pair_1d(a1, b1, a2, b2, alpha):
    """``int_{a1}^{b1} int_{a2}^{b2} |x - y|^(-alpha) dy dx`` in closed form."""
    return (_G(b1 - a2, alpha) - _G(b1 - b2, alpha)
            + _G(a1 - b2, alpha) - _G(a1 - a2, alpha))


def _trapezoid(lo1, hi1, lo2, hi2):
    """Density of ``x - y`` for x, y uniform-length indicators (unnormalized):
    knots and values of the piecewise-linear convolution of the two boxes."""
    l1, l2 = hi1 - lo1, hi2 - lo2
    s = lo1 - hi2
    knots = np.array([s, s + min(l1, l2), s + max(l1, l2), s + l1 + l2])
    vals = np.array([0.0, min(l1, l2), min(l1, l2), 0.0])
    return knots, vals


_GL_X, _GL_W = roots_legendre(12)


def _rect_regular(x0, x1, y0, y1, f, depth=0):
    """Tensor Gauss-Legendre with subdivision when the origin is close."""
    cx, cy = 0.5 * (x0 + x1), 0.5 * (y0 + y1)
    hx, hy = 0.5 * (x1 - x0), 0.5 * (y1 - y0)
    dist = math.hypot(max(x0, 0.0, -x1), max(y0, 0.0, -y1))
    size = math.hypot(x1 - x0, y1 - y0)
    if dist < 0.75 * size and depth < 12:
        return sum(_rect_regular(a, b, c, d, f, depth + 1)
                   for a, b in ((x0, cx), (cx, x1)) for c, d in ((y0, cy), (cy, y1)))
    X = cx + hx * _GL_X
    Y = cy + hy * _GL_X
    XX, YY = np.meshgrid(X, Y, indexing="ij")
    return hx * hy * float(_GL_W @ f(XX, YY) @ _GL_W)


def _rect_corner(x0, x1, y0, y1, f, alpha):
    """Integral over a rectangle having the origin as a corner, via Duffy maps
    of its two triangles; the radial factor ``u^(1 - alpha)`` is absorbed by
    Gauss-Jacobi nodes."""
    # corner at origin: one of x0, x1 is 0 and one of y0, y1 is 0
    ax = x1 if x0 == 0 else x0
    ay = y1 if y0 == 0 else y0
    tj, wj = roots_jacobi(16, 0.0, 1.0 - alpha)
    u = 0.5 * (tj + 1.0)
    wu = wj * 0.5 ** (2.0 - alpha)
    v = 0.5 * (_GL_X + 1.0)
    wv = 0.5 * _GL_W
    total = 0.0
    U, V = np.meshgrid(u, v, indexing="ij")
    for A, B, swap in ((ax, ay, False), (ay, ax, True)):
        # triangle with vertices 0, (A, 0), (A, B) in (first, second) coordinates
        p, q = A * U, B * U * V
        x, y = (q, p) if swap else (p, q)
        rad = (A * A + (B * V) ** 2) ** (-alpha / 2.0)
        vals = f(x, y, radial=False) * rad * abs(A * B)
        total += float(wu @ vals @ wv)
    return total


def _pair_2d(box1, box2, alpha):
    k1, v1 = _trapezoid(box1[0][0], box1[1][0], box2[0][0], box2[1][0])
    k2, v2 = _trapezoid(box1[0][1], box1[1][1], box2[0][1], box2[1][1])

    def weight(z, knots, vals):
        return np.interp(z, knots, vals, left=0.0, right=0.0)

    def f(x, y, radial=True):
        w = weight(x, k1, v1) * weight(y, k2, v2)
        if radial:
            return w * (x * x + y * y) ** (-alpha / 2.0)
        return w

    xs = np.unique(np.concatenate([k1, [0.0] if k1[0] < 0 < k1[-1] else []]))
    ys = np.unique(np.concatenate([k2, [0.0] if k2[0] < 0 < k2[-1] else []]))
    total = 0.0
    for x0, x1 in zip(xs[:-1], xs[1:]):
        for y0, y1 in zip(ys[:-1], ys[1:]):
            if x1 - x0 <= 0 or y1 - y0 <= 0:
                continue
            if (x0 == 0 or x1 == 0) and (y0 == 0 or y1 == 0):
                total += _rect_corner(x0, x1, y0, y1, f, alpha)
            else:
                total += _rect_regular(x0, x1, y0, y1, f)
    return total


def riesz_energy(sigma: GridDensity, alpha: float) -> float:
    """``V_alpha(sigma) = int int |x - y|^(-alpha) d sigma(x) d sigma(y)``.

    Distances are Euclidean in the unit cube (no periodization). Box pairs
    are integrated in closed form for d = 1; for d = 2 the density of
    ``x - y`` is a product of trapezoids and the singular part near the
    origin is handled by Duffy maps with Gauss-Jacobi weights.
    """
    if isinstance(sigma, DiscreteMeasure):
        raise ValueError("the Riesz energy of an atomic measure is infinite")
    if not 0 < alpha < sigma.dim:
        raise ValueError(f"alpha must lie in (0, {sigma.dim})")
    lo, hi, m = sigma.lo, sigma.hi, sigma.masses
    dens = m / np.prod(hi - lo, axis=1)
    n = len(m)
    if sigma.dim == 1:
        I = _pair_1d(lo[:, None, 0], hi[:, None, 0], lo[None, :, 0], hi[None, :, 0], alpha)
        return float(np.sum(dens[:, None] * dens[None, :] * I))
    total = 0.0
    for i in range(n):
        for j in range(i, n):
            if dens[i] == 0 or dens[j] == 0:
                continue
            val = dens[i] * dens[j] * _pair_2d((lo[i], hi[i]), (lo[j], hi[j]), alpha)
            total += val if i == j else 2.0 * val
    return total
