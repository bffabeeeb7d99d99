"""Composite Gauss-Legendre grids on the slow axis.

Functions live as stacks of derivative rows sampled at the nodes, so the
expansion machinery never differentiates numerically: derivatives come
from the producing recurrence and integrals from exact per-panel
antiderivative matrices (Legendre basis, exact for the polynomial degree
the nodes represent). Forward and backward cumulatives are built
independently so tail integrals keep full absolute accuracy.
"""

from __future__ import annotations

import numpy as np
from numpy.polynomial.legendre import leggauss, legvander

from .jets import jet_mul

__all__ = ["GLGrid", "SlowFunc"]

_panel_cache = {}


def _panel_ops(n):
    """Reference-interval node set and the exact quadrature machinery."""
    if n in _panel_cache:
        return _panel_cache[n]
    t, w = leggauss(n)
    P = legvander(t, n)  # columns P_0 .. P_n at the nodes
    k = np.arange(n)
    # modal analysis: values at nodes -> Legendre coefficients, exact here
    M = ((2 * k[:, None] + 1) / 2.0) * (w[None, :] * P[:, :n].T)
    A_f = np.empty((n, n))
    A_b = np.empty((n, n))
    A_f[:, 0] = t + 1.0
    A_b[:, 0] = 1.0 - t
    for kk in range(1, n):
        diff = (P[:, kk + 1] - P[:, kk - 1]) / (2 * kk + 1)
        A_f[:, kk] = diff
        A_b[:, kk] = -diff
    ops = (t, w, M, A_f @ M, A_b @ M)
    _panel_cache[n] = ops
    return ops


class GLGrid:
    """Piecewise Gauss-Legendre grid with prescribed interior breakpoints.

    Panels never exceed unit width; requested breakpoints (support edges,
    cutoff radii) land exactly on panel boundaries so boundary evaluation
    is pure interpolation, never extrapolation across a kink.
    """

    def __init__(self, lo, hi, must_break=(), refine=(), nodes_per_panel=32):
        if hi <= lo:
            raise ValueError("empty grid interval")
        self.n = int(nodes_per_panel)
        lo, hi = float(lo), float(hi)
        pts = {lo, hi}
        pts.update(float(b) for b in must_break if lo < b < hi)
        # refine: (point, scale) pairs marking C-infinity-but-nonanalytic
        # spots (bump edges, taper ends). Panels graded geometrically into
        # the point keep 32-node accuracy at machine level; a bare break
        # (scale 0) suffices where the pieces on either side are analytic.
        for item in refine:
            s, scale = (item, 1.0) if np.isscalar(item) else (float(item[0]), float(item[1]))
            cand = [s]
            if scale > 0.0:
                for k in range(8):
                    d = scale * 0.5**k
                    cand.extend((s - d, s + d))
            pts.update(c for c in cand if lo < c < hi)
        pts = sorted(pts)
        kept = [pts[0]]
        for p in pts[1:]:
            if p - kept[-1] > 1e-12:
                kept.append(p)
        kept[-1] = hi
        edges = [kept[0]]
        for right in kept[1:]:
            left = edges[-1]
            pieces = max(1, int(np.ceil((right - left) - 1e-12)))
            edges.extend(np.linspace(left, right, pieces + 1)[1:].tolist())
        self.breaks = np.asarray(edges)
        t, w, M, Cf, Cb = _panel_ops(self.n)
        self._M = M
        self._Cf = Cf
        self._Cb = Cb
        h = np.diff(self.breaks)
        self.x = (0.5 * (self.breaks[:-1] + self.breaks[1:])[:, None] + 0.5 * h[:, None] * t).ravel()
        self.w = (0.5 * h[:, None] * w).ravel()
        self.npanels = self.breaks.size - 1

    def quad(self, values):
        return float(np.dot(self.w, values))

    def _panel_totals(self, values):
        return (np.asarray(values) * self.w).reshape(self.npanels, self.n).sum(axis=1)

    def cumulative_from_left(self, values):
        v = np.asarray(values).reshape(self.npanels, self.n)
        h = np.diff(self.breaks)
        local = (v @ self._Cf.T) * (0.5 * h[:, None])
        offs = np.concatenate([[0.0], np.cumsum(self._panel_totals(values))[:-1]])
        return (local + offs[:, None]).ravel()

    def cumulative_from_right(self, values):
        v = np.asarray(values).reshape(self.npanels, self.n)
        h = np.diff(self.breaks)
        local = (v @ self._Cb.T) * (0.5 * h[:, None])
        tot = self._panel_totals(values)
        offs = np.concatenate([np.cumsum(tot[::-1])[::-1][1:], [0.0]])
        return (local + offs[:, None]).ravel()

    def eval_matrix(self, points):
        """Rows interpolating node values to arbitrary points (exact for
        the per-panel polynomial space)."""
        pts = np.atleast_1d(np.asarray(points, dtype=float))
        rows = np.zeros((pts.size, self.x.size))
        idx = np.clip(np.searchsorted(self.breaks, pts, side="right") - 1, 0, self.npanels - 1)
        for i, (xp, p) in enumerate(zip(pts, idx)):
            a, b = self.breaks[p], self.breaks[p + 1]
            if not (a - 1e-12 <= xp <= b + 1e-12):
                raise ValueError(f"point {xp} outside grid")
            tloc = np.clip(2.0 * (xp - a) / (b - a) - 1.0, -1.0, 1.0)
            rows[i, p * self.n : (p + 1) * self.n] = legvander(np.array([tloc]), self.n - 1)[0] @ self._M
        return rows


class SlowFunc:
    """Function of the slow variable with its derivative stack.

    rows[k] holds the plain k-th derivative at the grid nodes. Depth is
    whatever the producing recurrence supplied; binary operations keep the
    common depth.
    """

    __slots__ = ("grid", "rows")

    def __init__(self, grid, rows):
        self.grid = grid
        self.rows = np.atleast_2d(np.asarray(rows, dtype=float))
        if self.rows.shape[1] != grid.x.size:
            raise ValueError("row length does not match grid")

    @classmethod
    def constant(cls, grid, value, depth=0):
        rows = np.zeros((depth + 1, grid.x.size))
        rows[0] = value
        return cls(grid, rows)

    @classmethod
    def from_jets(cls, grid, jet_rows):
        return cls(grid, jet_rows)

    @property
    def depth(self):
        return self.rows.shape[0] - 1

    def values(self):
        return self.rows[0]

    def copy(self):
        return SlowFunc(self.grid, self.rows.copy())

    def _common(self, other):
        d = min(self.rows.shape[0], other.rows.shape[0])
        return self.rows[:d], other.rows[:d]

    def __add__(self, other):
        a, b = self._common(other)
        return SlowFunc(self.grid, a + b)

    def __sub__(self, other):
        a, b = self._common(other)
        return SlowFunc(self.grid, a - b)

    def __mul__(self, scalar):
        return SlowFunc(self.grid, self.rows * float(scalar))

    __rmul__ = __mul__

    def __neg__(self):
        return SlowFunc(self.grid, -self.rows)

    def product(self, other):
        a, b = self._common(other)
        return SlowFunc(self.grid, jet_mul(a, b))

    def diff(self, order=1):
        if order > self.depth:
            raise ValueError(
                f"derivative order {order} exceeds stored depth {self.depth}"
            )
        return SlowFunc(self.grid, self.rows[order:])

    def integrate_from_left(self):
        """Antiderivative vanishing at the left edge; gains one depth."""
        top = self.grid.cumulative_from_left(self.rows[0])
        return SlowFunc(self.grid, np.vstack([top, self.rows]))

    def integrate_from_right(self):
        """x -> integral from x to the right edge; derivative is -f."""
        top = self.grid.cumulative_from_right(self.rows[0])
        return SlowFunc(self.grid, np.vstack([top, -self.rows]))

    def inner(self, other):
        return self.grid.quad(self.rows[0] * other.rows[0])

    def norm_sq(self):
        return self.grid.quad(self.rows[0] ** 2)

    def at(self, points, order=0):
        if order > self.depth:
            raise ValueError("derivative order exceeds stored depth")
        E = self.grid.eval_matrix(points)
        vals = E @ self.rows[order]
        return float(vals[0]) if np.isscalar(points) or np.ndim(points) == 0 else vals
