"""Transfer-matrix route to the band structure, independent of any series.

At energy lam the cell equation -u'' + eps^2 (a(xi) - lam) u = 0 is
integrated over one period from the canonical initial data. The trace of
the resulting matrix decides band (|trace| < 2) versus gap (> 2); its
roots against +-2 are the numeric band edges used to validate the
perturbation series, and its eigenvectors give the decaying/growing
solutions the eigenvalue oracle glues together.
"""

from __future__ import annotations

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

__all__ = [
    "monodromy",
    "discriminant",
    "multipliers",
    "bloch_solutions",
    "band_edges_numeric",
    "cell_solution",
    "BlochPair",
    "CellSolution",
    "NumericEdges",
]


def _max_step(a, eps, lam):
    m = max(1.0, eps**2 * (a.sup_norm_bound() + abs(lam)))
    return 1.0 / (50.0 * np.sqrt(m))


def _integrate_cell(a, eps, lam, dense=False, rtol=1e-12, atol=1e-14):
    def rhs(xi, y):
        q = eps**2 * (a(xi) - lam)
        return [y[1], q * y[0], y[3], q * y[2]]

    sol = solve_ivp(
        rhs,
        (0.0, 1.0),
        [1.0, 0.0, 0.0, 1.0],
        method="DOP853",
        rtol=rtol,
        atol=atol,
        max_step=_max_step(a, eps, lam),
        dense_output=dense,
    )
    if not sol.success:
        raise RuntimeError(f"cell integration failed: {sol.message}")
    return sol


def monodromy(a, eps, lam, rtol=1e-12, atol=1e-14):
    """Period map of the cell equation, columns = the two canonical
    solutions evaluated at xi = 1."""
    y = _integrate_cell(a, eps, lam, rtol=rtol, atol=atol).y[:, -1]
    return np.array([[y[0], y[2]], [y[1], y[3]]])


def discriminant(a, eps, lam, rtol=1e-12):
    M = monodromy(a, eps, lam, rtol=rtol)
    return M[0, 0] + M[1, 1]


def multipliers(a, eps, lam, rtol=1e-12):
    """Characteristic multipliers (kappa, 1/kappa).

    kappa is the branch continuous from lam -> -inf where it grows
    without bound: modulus >= 1 always, real with the sign of the trace
    in a gap, unimodular complex inside a band.
    """
    D = discriminant(a, eps, lam, rtol=rtol)
    if abs(D) >= 2.0:
        root = np.sqrt(D * D - 4.0)
        kappa = (D + np.sign(D) * root) / 2.0
    else:
        kappa = (D + 1j * np.sqrt(4.0 - D * D)) / 2.0
    return kappa, 1.0 / kappa


class CellSolution:
    """Canonical cell solutions at one energy, evaluable on the whole line.

    Values inside [0, 1] come from the dense integration; outside, the
    period map is applied exactly, so no long-range integration ever
    happens: u(xi + m) is the matrix power acting on the data at the
    fractional part.
    """

    def __init__(self, a, eps, lam, rtol=1e-12):
        self.eps = eps
        self.lam = lam
        sol = _integrate_cell(a, eps, lam, dense=True, rtol=rtol)
        self._dense = sol.sol
        y = sol.y[:, -1]
        self.matrix = np.array([[y[0], y[2]], [y[1], y[3]]])
        self._powers = {0: np.eye(2)}

    def _power(self, m):
        if m in self._powers:
            return self._powers[m]
        M = self.matrix
        Minv = np.array(
            [[M[1, 1], -M[0, 1]], [-M[1, 0], M[0, 0]]]
        )  # det is 1, so this is exact
        k = max(self._powers)
        j = min(self._powers)
        while k < m:
            self._powers[k + 1] = M @ self._powers[k]
            k += 1
        while j > m:
            self._powers[j - 1] = Minv @ self._powers[j]
            j -= 1
        return self._powers[m]

    def at(self, xi):
        """Stack [phi1, phi1', phi2, phi2'] at the given points."""
        xi = np.atleast_1d(np.asarray(xi, dtype=float))
        out = np.empty((4, xi.size))
        m = np.floor(xi).astype(int)
        frac = xi - m
        for i in range(xi.size):
            base = self._dense(frac[i])  # data of both solutions at the fraction
            B = np.array([[base[0], base[2]], [base[1], base[3]]])
            full = B @ self._power(m[i])
            out[:, i] = [full[0, 0], full[1, 0], full[0, 1], full[1, 1]]
        return out

    def wronskian_residual(self):
        M = self.matrix
        return abs(M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0] - 1.0)


def cell_solution(a, eps, lam, rtol=1e-12):
    return CellSolution(a, eps, lam, rtol=rtol)


class BlochPair:
    """Decaying/growing solutions at a gap energy.

    theta(+1) shrinks by 1/kappa per period to the right; theta(-1)
    grows by kappa, i.e. decays to the left. Their Wronskian is
    (kappa - 1/kappa) * phi2(1).
    """

    def __init__(self, cellsol, kappa):
        self.cell = cellsol
        self.kappa = kappa
        M = cellsol.matrix
        self.data_plus = np.array([M[0, 1], 1.0 / kappa - M[0, 0]])
        self.data_minus = np.array([M[0, 1], kappa - M[0, 0]])
        self.wronskian = (kappa - 1.0 / kappa) * M[0, 1]

    def data(self, side):
        return self.data_plus if side > 0 else self.data_minus

    def theta(self, side, xi):
        c = self.data(side)
        vals = self.cell.at(xi)
        u = c[0] * vals[0] + c[1] * vals[2]
        du = c[0] * vals[1] + c[1] * vals[3]
        return u, du


def bloch_solutions(a, eps, lam, tol=1e-9, rtol=1e-12):
    """Decaying solution pair at a spectral-gap energy; refuses energies
    inside the essential spectrum."""
    cs = CellSolution(a, eps, lam, rtol=rtol)
    D = cs.matrix[0, 0] + cs.matrix[1, 1]
    if abs(D) < 2.0 - tol:
        raise ValueError(
            f"energy {lam} lies inside a spectral band (|trace| = {abs(D):.6f} < 2)"
        )
    root = np.sqrt(max(D * D - 4.0, 0.0))
    kappa = (D + np.sign(D) * root) / 2.0
    return BlochPair(cs, kappa)


class NumericEdges:
    """Numeric edges of the gap above band n (for n = 0, the single
    bottom edge, stored in both slots)."""

    def __init__(self, n, lower, upper, resolved=True):
        self.n = n
        self.lower = lower
        self.upper = upper
        self.resolved = resolved

    @property
    def edge(self):
        return self.lower

    @property
    def width(self):
        return self.upper - self.lower


def _edge_scale(eps, n):
    return max(1.0, np.pi**2 * n**2 / eps**2)


def band_edges_numeric(a, eps, n, method="matrix", rtol=1e-12, grid0=129):
    """Numeric edges of the gap above band n, with no series input.

    method='matrix' (default) solves the cell eigenproblem with the
    boundary parity the edges carry, on a truncated trig basis large
    enough that the discarded tail is below roundoff; a Rayleigh-quotient
    pass in the shifted variable removes the dense-solver's absolute
    floor. It resolves gaps far narrower than the trace-root route can.

    method='discriminant' bisects trace = +-2 as an independent
    cross-check. Its edge error is limited by the quadratic flatness of
    the trace across a narrow gap, so it is only trustworthy for wide
    gaps; a gap it cannot see comes back as a degenerate pair with
    resolved=False rather than an error.
    """
    if n < 0:
        raise ValueError("band index must be >= 0")
    if method == "matrix":
        return _edges_by_matrix(a, eps, n)
    if method != "discriminant":
        raise ValueError(f"unknown method {method!r}")
    xtol = 1e-12 * _edge_scale(eps, n)

    if n == 0:
        def f(lam):
            return discriminant(a, eps, lam, rtol=rtol) - 2.0

        hi = 0.0
        tries = 0
        while f(hi) >= 0.0:
            hi += 1.0
            tries += 1
            if tries > 50:
                raise RuntimeError("could not find a point inside the first band")
        lo = -(a.sup_norm_bound() + 1.0)
        while f(lo) <= 0.0:
            lo *= 2.0
            if lo < -1e8:
                raise RuntimeError("could not bracket the bottom edge from below")
        edge = brentq(f, lo, hi, xtol=xtol, rtol=4 * np.finfo(float).eps)
        return NumericEdges(0, edge, edge)

    from .potentials import fourier_pair

    an, bn = fourier_pair(a, n)
    B = 4.0 * np.hypot(an, bn) + 1.0
    center = np.pi**2 * n**2 / eps**2
    sgn = -1.0 if n % 2 else 1.0

    def g(lam):
        return sgn * discriminant(a, eps, lam, rtol=rtol)

    for expand in range(4):
        half = B * 2.0**expand
        grid = np.linspace(center - half, center + half, grid0)
        vals = np.array([g(x) for x in grid])
        imax = int(np.argmax(vals))
        if vals[imax] > 2.0:
            break
        # zoom toward the maximum in case the gap is much narrower than
        # the grid spacing
        zoomed = False
        locut = grid[max(imax - 1, 0)]
        hicut = grid[min(imax + 1, grid.size - 1)]
        for _ in range(6):
            grid = np.linspace(locut, hicut, 65)
            vals = np.array([g(x) for x in grid])
            imax = int(np.argmax(vals))
            if vals[imax] > 2.0:
                zoomed = True
                break
            locut = grid[max(imax - 1, 0)]
            hicut = grid[min(imax + 1, grid.size - 1)]
        if zoomed:
            break
    if vals[imax] <= 2.0:
        return NumericEdges(n, grid[imax], grid[imax], resolved=False)

    lam_in = grid[imax]

    def h(lam):
        return g(lam) - 2.0

    lo_out = None
    for k in range(1, 60):
        cand = lam_in - B * 1.35 ** (k - 1) / 8.0
        if h(cand) < 0.0:
            lo_out = cand
            break
    hi_out = None
    for k in range(1, 60):
        cand = lam_in + B * 1.35 ** (k - 1) / 8.0
        if h(cand) < 0.0:
            hi_out = cand
            break
    if lo_out is None or hi_out is None:
        raise RuntimeError(f"could not bracket the edges of gap {n}")
    lower = brentq(h, lo_out, lam_in, xtol=xtol, rtol=4 * np.finfo(float).eps)
    upper = brentq(h, lam_in, hi_out, xtol=xtol, rtol=4 * np.finfo(float).eps)
    return NumericEdges(n, lower, upper)


def _edges_by_matrix(a, eps, n):
    """Cell eigenproblem on the parity sector containing the gap-n edges.

    The operator is assembled already shifted by pi^2 n^2, so the edge
    eigenvalues are the small ones and their Rayleigh quotients carry no
    large-diagonal cancellation. The basis grows until the edge vectors
    have negligible mass on the top modes.
    """
    from .potentials import CellFunction

    p = n % 2
    nmax = a.n_max()
    acf = a.as_cell_function()
    r2 = np.sqrt(2.0)
    K = n + 2 * nmax + 20
    for _ in range(4):
        ks = list(range(p, K + 1, 2))
        fns = []
        kindex = []
        for k in ks:
            if k == 0:
                fns.append(CellFunction.harmonic(0, cos_amp=1.0))
                kindex.append(0)
            else:
                fns.append(CellFunction.harmonic(k, cos_amp=r2))
                kindex.append(k)
                fns.append(CellFunction.harmonic(k, sin_amp=r2))
                kindex.append(k)
        B = len(fns)
        M = np.zeros((B, B))
        cap = K + 2 * nmax + 2
        for j, f in enumerate(fns):
            af = acf.product(f, cap)
            for i, g in enumerate(fns):
                M[i, j] = eps**2 * af.inner(g)
            M[j, j] += np.pi**2 * (kindex[j] ** 2 - n**2)
        M = 0.5 * (M + M.T)
        evals, vecs = np.linalg.eigh(M)
        if n == 0:
            sel = [int(np.argmin(evals))]
        else:
            sel = list(np.argsort(np.abs(evals))[:2])
            sel.sort(key=lambda i: evals[i])
        tail = max(
            float(np.sqrt(np.sum(vecs[np.asarray(kindex) > K - 2 * nmax - 1, i] ** 2)))
            for i in sel
        )
        if tail < 1e-13:
            break
        K += 16
    refined = []
    for i in sel:
        v = vecs[:, i]
        refined.append(float(v @ (M @ v) / (v @ v)))
    if n == 0:
        lam = (np.pi**2 * n**2 + refined[0]) / eps**2
        return NumericEdges(0, lam, lam)
    lo = (np.pi**2 * n**2 + refined[0]) / eps**2
    hi = (np.pi**2 * n**2 + refined[1]) / eps**2
    # Rayleigh-quotient error within the pair ~ (eps_mach*|M|)^2 / splitting,
    # so splittings above a few eps_mach*|M| are certified, not merely seen.
    norm = float(np.max(np.abs(M)))
    resolved = (refined[1] - refined[0]) > 16 * np.finfo(float).eps * norm
    return NumericEdges(n, lo, hi, resolved=resolved)
