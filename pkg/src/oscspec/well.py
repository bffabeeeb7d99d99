"""Discrete spectrum and zero-energy structure of the compact impurity well.

The impurity vanishes identically outside its support radius, so every
tail of -u'' + (V - lam) u = 0 is available in closed form: a pure
exponential at negative energy, an affine function at zero energy. ODE
integration therefore never leaves the support, and each half is
integrated inward from its own tail, which is the stable (growing)
direction. Matching happens at x = 0.
"""

from __future__ import annotations

from math import comb

import numpy as np
from scipy.integrate import solve_ivp

from .grids import GLGrid, SlowFunc

__all__ = [
    "BoundState",
    "LineSolution",
    "ZeroEnergyData",
    "discrete_spectrum",
    "resonance_check",
    "solve_shifted_well",
    "solve_zero_energy",
    "support_grid",
]

_RTOL = 1e-12
_ATOL = 1e-14
RESONANT_TOL = 1e-8
MARGINAL_TOL = 1e-5


def support_grid(V, span, must_break=(0.0,), refine=()):
    """Quadrature grid on [-span, span] graded into V's non-analytic points.

    Extra (point, scale) pairs in `refine` get the same treatment; anything
    landing outside the span is dropped by the grid itself.
    """
    if span < V.x0:
        raise ValueError("span must cover the support of V")
    return GLGrid(
        -span, span, must_break=tuple(must_break), refine=tuple(V.edges) + tuple(refine)
    )


def _sup_norm(V):
    xs = np.linspace(-V.x0, V.x0, 801)
    return float(np.max(np.abs(V(xs))))


def _shoot(V, lam, x_from, x_to, y0, sup):
    def rhs(x, y):
        return [y[1], (V(x) - lam) * y[0]]

    # step cap keeps narrow taper features of V visible to the controller
    h = min(0.02 * V.x0, 0.25 / np.sqrt(max(1.0, sup + abs(lam))))
    sol = solve_ivp(
        rhs,
        (x_from, x_to),
        y0,
        method="DOP853",
        rtol=_RTOL,
        atol=_ATOL,
        max_step=h,
        dense_output=True,
    )
    if not sol.success:
        raise RuntimeError(f"well integration failed: {sol.message}")
    return sol


def _sign_changes(u):
    s = np.sign(u)
    s = s[s != 0.0]
    return int(np.sum(s[1:] * s[:-1] < 0.0))


def _count_below(V, lam, sup):
    """Number of well eigenvalues strictly below lam (lam < 0)."""
    kap = np.sqrt(-lam)
    sol = _shoot(V, lam, -V.x0, V.x0, [1.0, kap], sup)
    ts = np.linspace(-V.x0, V.x0, 4097)
    inner = _sign_changes(sol.sol(ts)[0])
    u, du = sol.y[0, -1], sol.y[1, -1]
    # beyond the support the solution is a two-exponential combination;
    # it picks up one more zero exactly when the growing part flips sign
    return inner + (1 if u * (kap * u + du) < 0.0 else 0)


def _count_negative(V, sup):
    """Total number of negative eigenvalues, read off at zero energy."""
    sol = _shoot(V, 0.0, -V.x0, V.x0, [1.0, 0.0], sup)
    ts = np.linspace(-V.x0, V.x0, 4097)
    inner = _sign_changes(sol.sol(ts)[0])
    u, du = sol.y[0, -1], sol.y[1, -1]
    return inner + (1 if u * du < 0.0 else 0)


def _mismatch(V, lam, sup):
    """Scale-free Wronskian of the two tail-decaying halves at x = 0.

    The raw logarithmic-derivative difference has poles at zeros of
    either half; the hypot-normalized Wronskian carries the same roots
    without them.
    """
    kap = np.sqrt(-lam)
    yL = _shoot(V, lam, -V.x0, 0.0, [1.0, kap], sup).y[:, -1]
    yR = _shoot(V, lam, V.x0, 0.0, [1.0, -kap], sup).y[:, -1]
    w = yL[0] * yR[1] - yL[1] * yR[0]
    return w / (np.hypot(*yL) * np.hypot(*yR)), yL, yR


def _refine(V, lo, hi, sup):
    """Secant iteration on the matching mismatch inside an isolating
    bracket; falls back to bisection whenever a step leaves it."""
    flo = _mismatch(V, lo, sup)[0]
    fhi = _mismatch(V, hi, sup)[0]
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if flo * fhi > 0.0:
        raise RuntimeError("matching function does not change sign over the bracket")
    a, fa, b, fb = lo, flo, hi, fhi
    for _ in range(100):
        if fb != fa:
            x = b - fb * (b - a) / (fb - fa)
        else:
            x = 0.5 * (lo + hi)
        if not (lo < x < hi):
            x = 0.5 * (lo + hi)
        fx = _mismatch(V, x, sup)[0]
        if fx == 0.0:
            return x
        if fx * flo < 0.0:
            hi = x
        else:
            lo, flo = x, fx
        a, fa = b, fb
        b, fb = x, fx
        if abs(b - a) <= 1e-14 * max(1.0, abs(b)):
            break
    return b


class LineSolution:
    """One solution of -u'' + (V - lam) u = 0 on the whole line.

    Dense pieces cover the support; outside it the two-exponential (or
    affine, at zero energy) closed form takes over. jets() returns plain
    derivatives of any order, rows >= 2 produced by the equation itself,
    so nothing is ever differentiated numerically.
    """

    def __init__(self, V, lam, pieces, left_tail, right_tail):
        self.V = V
        self.lam = lam
        self.pieces = pieces  # (lo, hi, dense, scale), cover [-x0, x0]
        self.left_tail = left_tail
        self.right_tail = right_tail

    def scaled(self, c):
        pieces = [(lo, hi, d, c * s) for (lo, hi, d, s) in self.pieces]
        lt = (self.left_tail[0],) + tuple(c * v for v in self.left_tail[1:])
        rt = (self.right_tail[0],) + tuple(c * v for v in self.right_tail[1:])
        return LineSolution(self.V, self.lam, pieces, lt, rt)

    def _tail_rows(self, rows, x, mask, tail, left):
        kind = tail[0]
        x0 = self.V.x0
        if kind == "affine":
            _, A, B = tail
            ref = -x0 if left else x0
            rows[0, mask] = A + B * (x[mask] - ref)
            if rows.shape[0] > 1:
                rows[1, mask] = B
            return
        _, c_dec, c_gro = tail
        kap = np.sqrt(-self.lam)
        if left:
            # decaying part vanishes toward -inf: exp(+kap (x + x0))
            e_dec = np.exp(kap * (x[mask] + x0))
            e_gro = np.exp(-kap * (x[mask] + x0))
            s_dec, s_gro = kap, -kap
        else:
            e_dec = np.exp(-kap * (x[mask] - x0))
            e_gro = np.exp(kap * (x[mask] - x0))
            s_dec, s_gro = -kap, kap
        for k in range(rows.shape[0]):
            rows[k, mask] = c_dec * s_dec**k * e_dec + c_gro * s_gro**k * e_gro

    def jets(self, x, depth):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        rows = np.zeros((depth + 1, x.size))
        x0 = self.V.x0
        left = x < -x0
        right = x > x0
        core = ~(left | right)
        if np.any(core):
            xc = x[core]
            sub = np.zeros((2, xc.size))
            done = np.zeros(xc.size, dtype=bool)
            for lo, hi, dense, scale in self.pieces:
                m = ~done & (xc >= lo - 1e-12) & (xc <= hi + 1e-12)
                if np.any(m):
                    sub[:, m] = scale * dense.sol(xc[m])
                    done[m] = True
            if not np.all(done):
                raise ValueError("point inside the support not covered by any piece")
            crows = np.zeros((depth + 1, xc.size))
            crows[0] = sub[0]
            if depth >= 1:
                crows[1] = sub[1]
            if depth >= 2:
                Vj = self.V.jets(xc, depth - 2)
                for k in range(depth - 1):
                    acc = -self.lam * crows[k]
                    for j in range(k + 1):
                        acc = acc + comb(k, j) * Vj[j] * crows[k - j]
                    crows[k + 2] = acc
            rows[:, core] = crows
        if np.any(left):
            self._tail_rows(rows, x, left, self.left_tail, left=True)
        if np.any(right):
            self._tail_rows(rows, x, right, self.right_tail, left=False)
        return rows

    def value(self, x):
        scalar = np.isscalar(x) or np.ndim(x) == 0
        v = self.jets(x, 0)[0]
        return float(v[0]) if scalar else v

    def derivative(self, x):
        scalar = np.isscalar(x) or np.ndim(x) == 0
        v = self.jets(x, 1)[1]
        return float(v[0]) if scalar else v

    def slow(self, grid, depth):
        return SlowFunc.from_jets(grid, self.jets(grid.x, depth))


def _exp_tail_coefs(kap, u, du, left):
    """Split boundary data into (decaying, growing) exponential parts."""
    if left:
        return (u + du / kap) / 2.0, (u - du / kap) / 2.0
    return (u - du / kap) / 2.0, (u + du / kap) / 2.0


def _companion_of(line, sup):
    """Second solution at the same energy with unit Wronskian.

    Anchored where |u| peaks, so the anchor data stay well scaled; both
    halves are integrated outward, the growing direction.
    """
    V, lam = line.V, line.lam
    # interior window: anchoring at a support edge would degenerate one piece
    ts = np.linspace(-0.95 * V.x0, 0.95 * V.x0, 2001)
    uvals = line.value(ts)
    xa = float(ts[int(np.argmax(np.abs(uvals)))])
    ua = line.value(xa)
    y0 = [0.0, 1.0 / ua]
    solR = _shoot(V, lam, xa, V.x0, y0, sup)
    solL = _shoot(V, lam, xa, -V.x0, y0, sup)
    pieces = [(-V.x0, xa, solL, 1.0), (xa, V.x0, solR, 1.0)]
    uR, duR = solR.y[0, -1], solR.y[1, -1]
    uL, duL = solL.y[0, -1], solL.y[1, -1]
    if lam < 0.0:
        kap = np.sqrt(-lam)
        right = ("exp",) + _exp_tail_coefs(kap, uR, duR, left=False)
        left = ("exp",) + _exp_tail_coefs(kap, uL, duL, left=True)
    else:
        right = ("affine", uR, duR)
        left = ("affine", uL, duL)
    return LineSolution(V, lam, pieces, left, right)


class BoundState:
    """Normalized eigenfunction of the well with its eigenvalue."""

    def __init__(self, index, lam, residual, line):
        self.index = index
        self.lam = lam
        self.kappa = float(np.sqrt(-lam))
        self.residual = residual
        self.line = line
        self._companion = None

    def value(self, x):
        return self.line.value(x)

    def derivative(self, x):
        return self.line.derivative(x)

    def jets(self, x, depth):
        return self.line.jets(x, depth)

    def slow(self, grid, depth):
        return self.line.slow(grid, depth)

    def companion(self):
        if self._companion is None:
            self._companion = _companion_of(self.line, _sup_norm(self.line.V))
        return self._companion

    def companion_slow(self, grid, depth):
        return self.companion().slow(grid, depth)


def _build_state(V, index, lam, sup):
    x0 = V.x0
    kap = np.sqrt(-lam)
    solL = _shoot(V, lam, -x0, 0.0, [1.0, kap], sup)
    solR = _shoot(V, lam, x0, 0.0, [1.0, -kap], sup)
    yL = solL.y[:, -1]
    yR = solR.y[:, -1]
    residual = abs(yL[0] * yR[1] - yL[1] * yR[0]) / (np.hypot(*yL) * np.hypot(*yR))
    cR = float(yL @ yR) / float(yR @ yR)
    line = LineSolution(
        V,
        lam,
        [(-x0, 0.0, solL, 1.0), (0.0, x0, solR, cR)],
        ("exp", 1.0, 0.0),
        ("exp", cR, 0.0),
    )
    grid = GLGrid(-x0, x0, must_break=(0.0,), refine=V.edges)
    core = grid.quad(line.value(grid.x) ** 2)
    nrm2 = core + (1.0**2 + cR**2) / (2.0 * kap)
    c = np.sign(cR) / np.sqrt(nrm2)
    return BoundState(index, lam, residual, line.scaled(c))


def discrete_spectrum(V, max_states=None, drop_threshold=False):
    """All eigenvalues below zero with their eigenfunctions, lowest first.

    Bracketing bisects the eigenvalue count (zeros of the left-decaying
    solution, tail-corrected), refinement is secant on the matching
    Wronskian at x = 0. Tails never enter the ODE: they are attached in
    closed form, which is the limit the usual truncated-domain recipe
    approaches as its box grows.

    A state hugging the continuum threshold cannot be bracketed from
    above; by default that raises, with drop_threshold=True the scan
    stops and returns the strictly isolable states (the threshold
    neighborhood is the zero-energy probe's business).
    """
    sup = _sup_norm(V)
    total = _count_negative(V, sup)
    if max_states is not None:
        total = min(total, max_states)
    if total == 0:
        return []
    xs = np.linspace(-V.x0, V.x0, 1601)
    floor = float(np.min(V(xs))) - 1e-9
    if floor >= 0.0:
        return []
    seen = [(floor, 0)]
    states = []
    for k in range(total):
        lo = max((l for l, c in seen if c <= k), default=floor)
        hi_candidates = [l for l, c in seen if c >= k + 1]
        hi = min(hi_candidates) if hi_candidates else -1e-12 * max(1.0, sup)
        while _count_below(V, hi, sup) < k + 1:
            hi *= 0.1
            if hi > -1e-15:
                if drop_threshold:
                    return states
                raise RuntimeError(
                    f"state {k} sits too close to the continuum threshold to isolate"
                )
        seen.append((hi, _count_below(V, hi, sup)))
        while hi - lo > 1e-3 * max(1.0, abs(lo)):
            mid = 0.5 * (lo + hi)
            c = _count_below(V, mid, sup)
            seen.append((mid, c))
            if c <= k:
                lo = mid
            else:
                hi = mid
        lam = _refine(V, lo, hi, sup)
        states.append(_build_state(V, k, lam, sup))
    return states


class ZeroEnergyData:
    """Outcome of the threshold-resonance probe.

    status is 'resonant', 'marginal', or 'none'; slope is the signed
    scale-free derivative of the left-flat solution at the right support
    edge (its zero is the resonance), ratio its magnitude. At (or near)
    resonance the bounded solution psi0 comes normalized so the two
    plateau values satisfy beta_+^2 + beta_-^2 = 1 with beta_+ > 0.
    """

    def __init__(self, status, ratio, slope, beta_plus, beta_minus, psi0, V):
        self.status = status
        self.ratio = ratio
        self.slope = slope
        self.beta_plus = beta_plus
        self.beta_minus = beta_minus
        self.psi0 = psi0
        self.V = V
        self._companion = None

    def slow(self, grid, depth):
        if self.psi0 is None:
            raise ValueError("no bounded zero-energy solution: status is 'none'")
        return self.psi0.slow(grid, depth)

    def companion(self):
        if self.psi0 is None:
            raise ValueError("no bounded zero-energy solution: status is 'none'")
        if self._companion is None:
            self._companion = _companion_of(self.psi0, _sup_norm(self.V))
        return self._companion

    def companion_slow(self, grid, depth):
        return self.companion().slow(grid, depth)


def resonance_check(V):
    """Probe for a bounded zero-energy solution.

    Integrates from the left support edge with flat data; a vanishing
    slope at the right edge means the solution stays bounded (constant)
    there too. Classification thresholds on |slope|/sup|u|: below 1e-8
    resonant, below 1e-5 marginal, otherwise none.
    """
    sup = _sup_norm(V)
    sol = _shoot(V, 0.0, -V.x0, V.x0, [1.0, 0.0], sup)
    ts = np.linspace(-V.x0, V.x0, 2001)
    umax = float(np.max(np.abs(sol.sol(ts)[0])))
    u, du = float(sol.y[0, -1]), float(sol.y[1, -1])
    slope = du / umax
    ratio = abs(slope)
    if ratio < RESONANT_TOL:
        status = "resonant"
    elif ratio < MARGINAL_TOL:
        status = "marginal"
    else:
        status = "none"
    if status == "none":
        return ZeroEnergyData(status, ratio, slope, None, None, None, V)
    sgn = 1.0 if u >= 0.0 else -1.0
    c = sgn / np.hypot(1.0, u)
    psi0 = LineSolution(
        V,
        0.0,
        [(-V.x0, V.x0, sol, c)],
        ("affine", c, 0.0),
        ("affine", c * u, 0.0),  # residual slope dropped: plateau is exact
    )
    return ZeroEnergyData(status, ratio, slope, c * u, c, psi0, V)


def _project_out(f, psi):
    return f - psi * (psi.inner(f) / psi.norm_sq())


def solve_shifted_well(state, f):
    """Bounded solution of (-d^2/dx^2 + V - lam) u = f, orthogonal to the
    eigenfunction; f must satisfy the solvability condition (f, psi) = 0.

    Variation of parameters with the eigenfunction and its unit-Wronskian
    companion. The companion-weighted cumulative switches between the
    left- and right-anchored antiderivatives at the companion anchor, so
    the growing branch is never multiplied by a wide-range integral.
    """
    grid = f.grid
    d = f.depth
    psi = state.slow(grid, d)
    fperp = _project_out(f, psi)
    tilde = state.companion_slow(grid, d)
    P = psi.product(fperp)
    gl = P.integrate_from_left()
    gr = P.integrate_from_right()
    ts = np.linspace(-state.line.V.x0, state.line.V.x0, 2001)
    xa = float(ts[int(np.argmax(np.abs(state.value(ts))))])
    T = gr.copy()
    mask = grid.x <= xa
    T.rows[0, mask] = -gl.rows[0, mask]
    Q = tilde.product(fperp)
    H = Q.integrate_from_left()
    H = H - SlowFunc.constant(grid, H.at(xa), depth=H.depth)
    u = tilde.product(T) + psi.product(H)
    return _project_out(u, psi)


def solve_zero_energy(zdata, f, support_tol=1e-10, orth_tol=1e-9, radius=None):
    """Bounded solution of -u'' + V u = f at the resonance threshold.

    Valid only for f supported inside |x| <= radius (the well by default;
    a larger radius is allowed since the solution formula only needs f to
    vanish where the result must be flat) and orthogonal to the bounded
    solution; both prerequisites are checked. The result is constant
    beyond the source region, with the two plateau constants tied by
    beta_- u(right) + beta_+ u(left) = 0.
    """
    if zdata.psi0 is None:
        raise ValueError("no bounded zero-energy solution: status is 'none'")
    grid = f.grid
    d = f.depth
    x0 = zdata.V.x0 if radius is None else float(radius)
    if x0 < zdata.V.x0:
        raise ValueError("radius cannot cut into the support of V")
    outside = np.abs(grid.x) > x0 * (1.0 + 1e-12)
    fmax = float(np.max(np.abs(f.values()))) or 1.0
    if np.any(outside) and np.max(np.abs(f.values()[outside])) > support_tol * fmax:
        raise ValueError("source is not supported inside the well")
    psi = zdata.slow(grid, d)
    til = zdata.companion_slow(grid, d)
    ip = psi.inner(f)
    scale = np.sqrt(psi.norm_sq() * f.norm_sq()) or 1.0
    if abs(ip) > orth_tol * scale:
        raise ValueError(
            f"source is not orthogonal to the bounded solution: {ip:.3e}"
        )
    F1 = til.product(f).integrate_from_left()
    F2 = psi.product(f).integrate_from_right()
    total = til.inner(f)
    return psi.product(F1) + til.product(F2) - psi * (0.5 * total)
