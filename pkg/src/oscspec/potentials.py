"""Potential representations: the fast periodic background and the compact impurity.

The periodic background is stored as a finite trigonometric series
a(xi) = sum_n (c_n cos 2 pi n xi + s_n sin 2 pi n xi), zero mean by
construction. The half-amplitude Fourier pair used throughout the edge
formulas is (a_n, b_n) = (c_n/2, s_n/2); `fourier_pair` documents and
applies this mapping.

Cell-side functions (1-periodic or 1-antiperiodic) are stored on the
half-frequency trig basis cos(pi k xi), sin(pi k xi): periodic content
occupies even k, antiperiodic content odd k. All cell operators downstream
act diagonally on this basis and every cell inner product is an exact
Parseval sum, so no quadrature in xi is ever performed.
"""

from __future__ import annotations

import warnings

import numpy as np

from .jets import jet_const, jet_exp, jet_mul, jet_reciprocal

__all__ = [
    "CellFunction",
    "PeriodicPotential",
    "CompactPotential",
    "fourier_pair",
    "normalize_zero_mean",
    "support_radius",
    "make_compact",
]

# default hard cutoff for cell-side mode content
MODE_CUTOFF = 64
# relative tail mass beyond which truncation warns instead of staying silent
TAIL_WARN = 1e-8


class CellFunction:
    """Finite trig series on [0,1] with definite periodicity parity.

    cos_c[k], sin_c[k] multiply cos(pi k xi), sin(pi k xi). parity
    'periodic' allows only even k (u(0)=u(1), u'(0)=u'(1)); 'antiperiodic'
    only odd k (u(0)=-u(1), u'(0)=-u'(1)). sin_c[0] is unused and kept 0.
    """

    __slots__ = ("cos_c", "sin_c", "parity")

    def __init__(self, cos_c, sin_c, parity):
        if parity not in ("periodic", "antiperiodic"):
            raise ValueError("parity must be 'periodic' or 'antiperiodic'")
        cos_c = np.atleast_1d(np.asarray(cos_c, dtype=float))
        sin_c = np.atleast_1d(np.asarray(sin_c, dtype=float))
        size = max(cos_c.size, sin_c.size)
        self.cos_c = np.zeros(size)
        self.sin_c = np.zeros(size)
        self.cos_c[: cos_c.size] = cos_c
        self.sin_c[: sin_c.size] = sin_c
        self.sin_c[0] = 0.0
        self.parity = parity
        bad = self._offparity_mass()
        if bad > 1e-12 * max(1.0, self.norm()):
            raise ValueError(f"coefficients violate parity {parity!r} (mass {bad:.3e})")
        self._clear_offparity()

    # -- construction helpers -------------------------------------------------

    @classmethod
    def zero(cls, parity="periodic"):
        return cls([0.0], [0.0], parity)

    @classmethod
    def harmonic(cls, k, cos_amp=0.0, sin_amp=0.0):
        parity = "periodic" if k % 2 == 0 else "antiperiodic"
        c = np.zeros(k + 1)
        s = np.zeros(k + 1)
        c[k] = cos_amp
        if k > 0:
            s[k] = sin_amp
        return cls(c, s, parity)

    def copy(self):
        return CellFunction(self.cos_c.copy(), self.sin_c.copy(), self.parity)

    def _parity_mask(self, size):
        k = np.arange(size)
        want_even = self.parity == "periodic"
        return (k % 2 == 0) == want_even

    def _offparity_mass(self):
        mask = ~self._parity_mask(self.cos_c.size)
        return float(np.sum(np.abs(self.cos_c[mask])) + np.sum(np.abs(self.sin_c[mask])))

    def _clear_offparity(self):
        mask = ~self._parity_mask(self.cos_c.size)
        self.cos_c[mask] = 0.0
        self.sin_c[mask] = 0.0

    # -- basic queries --------------------------------------------------------

    def kmax(self):
        nz = np.nonzero((self.cos_c != 0.0) | (self.sin_c != 0.0))[0]
        return int(nz[-1]) if nz.size else 0

    def norm_sq(self):
        """L2(0,1)^2 via Parseval."""
        w = np.full(self.cos_c.size, 0.5)
        w[0] = 1.0
        return float(np.sum(w * (self.cos_c**2 + self.sin_c**2)))

    def norm(self):
        return float(np.sqrt(self.norm_sq()))

    def mean(self):
        """Integral over [0,1]; exact for either parity."""
        if self.parity == "periodic":
            return float(self.cos_c[0])
        k = np.arange(self.sin_c.size)
        odd = k % 2 == 1
        with np.errstate(divide="ignore", invalid="ignore"):
            w = np.where(odd, 2.0 / (np.pi * np.maximum(k, 1)), 0.0)
        return float(np.sum(self.sin_c * w))

    def __call__(self, xi):
        xi = np.asarray(xi, dtype=float)
        k = np.arange(self.cos_c.size)
        phase = np.pi * np.outer(np.atleast_1d(xi), k)
        vals = np.cos(phase) @ self.cos_c + np.sin(phase) @ self.sin_c
        return float(vals[0]) if xi.ndim == 0 else vals

    def deriv_at(self, xi):
        return self.diff()(xi)

    # -- algebra --------------------------------------------------------------

    def _aligned(self, other):
        if self.parity != other.parity:
            raise ValueError("parity mismatch in cell-function sum")
        size = max(self.cos_c.size, other.cos_c.size)
        a = np.zeros((2, size))
        b = np.zeros((2, size))
        a[0, : self.cos_c.size] = self.cos_c
        a[1, : self.sin_c.size] = self.sin_c
        b[0, : other.cos_c.size] = other.cos_c
        b[1, : other.sin_c.size] = other.sin_c
        return a, b

    def __add__(self, other):
        a, b = self._aligned(other)
        return CellFunction(a[0] + b[0], a[1] + b[1], self.parity)

    def __sub__(self, other):
        a, b = self._aligned(other)
        return CellFunction(a[0] - b[0], a[1] - b[1], self.parity)

    def __mul__(self, scalar):
        return CellFunction(self.cos_c * scalar, self.sin_c * scalar, self.parity)

    __rmul__ = __mul__

    def __neg__(self):
        return self * (-1.0)

    def diff(self):
        """d/dxi, exact on the basis."""
        k = np.arange(self.cos_c.size)
        return CellFunction(np.pi * k * self.sin_c, -np.pi * k * self.cos_c, self.parity)

    def product(self, other, kcut=None):
        """Pointwise product; parity combines like even/odd frequency sums.

        kcut caps the output bandwidth (default MODE_CUTOFF); a discarded
        tail above TAIL_WARN relative mass triggers a warning.
        """
        parity = "periodic" if (self.parity == other.parity) else "antiperiodic"
        ka = np.arange(self.cos_c.size)
        kb = np.arange(other.cos_c.size)
        ksum = ka[:, None] + kb[None, :]
        kdif = np.abs(ka[:, None] - kb[None, :])
        size = int(ksum.max()) + 1
        cos_out = np.zeros(size)
        sin_out = np.zeros(size)

        cc = np.outer(self.cos_c, other.cos_c)
        ss = np.outer(self.sin_c, other.sin_c)
        sc = np.outer(self.sin_c, other.cos_c)
        cs = np.outer(self.cos_c, other.sin_c)

        np.add.at(cos_out, kdif, 0.5 * (cc + ss))
        np.add.at(cos_out, ksum, 0.5 * (cc - ss))
        # sin(pi(j-k)xi) carries sign(j-k); the diagonal contributes nothing
        sgn = np.sign(ka[:, None] - kb[None, :])
        np.add.at(sin_out, kdif, 0.5 * sgn * (sc - cs))
        np.add.at(sin_out, ksum, 0.5 * (sc + cs))

        sin_out[0] = 0.0
        out = CellFunction(cos_out, sin_out, parity)
        cap = MODE_CUTOFF if kcut is None else kcut
        if out.kmax() > cap:
            out = out.truncated(cap)
        return out

    def truncated(self, kcap):
        if kcap >= self.cos_c.size - 1:
            return self.copy()
        total = self.norm()
        tail = float(
            np.sqrt(
                0.5 * (np.sum(self.cos_c[kcap + 1 :] ** 2) + np.sum(self.sin_c[kcap + 1 :] ** 2))
            )
        )
        if total > 0 and tail > TAIL_WARN * total:
            warnings.warn(
                f"cell-function truncation at k={kcap} discards relative mass "
                f"{tail / total:.3e}",
                stacklevel=2,
            )
        return CellFunction(self.cos_c[: kcap + 1], self.sin_c[: kcap + 1], self.parity)

    def inner(self, other):
        """Exact L2(0,1) inner product; operands must share parity."""
        if self.parity != other.parity:
            raise ValueError("inner product across parities is not supported")
        n = min(self.cos_c.size, other.cos_c.size)
        w = np.full(n, 0.5)
        if n:
            w[0] = 1.0
        return float(
            np.sum(w * (self.cos_c[:n] * other.cos_c[:n] + self.sin_c[:n] * other.sin_c[:n]))
        )

    def zero_mean(self):
        if self.parity != "periodic":
            raise ValueError("zero_mean applies to periodic functions")
        out = self.copy()
        out.cos_c[0] = 0.0
        return out

    def boundary_residual(self):
        """Residual of the parity boundary conditions; ~0 by construction."""
        sgn = 1.0 if self.parity == "periodic" else -1.0
        d = self.diff()
        return abs(self(0.0) - sgn * self(1.0)) + abs(d(0.0) - sgn * d(1.0))


class PeriodicPotential:
    """Zero-mean trig polynomial cell background of period 1.

    cosine_coeffs[i], sine_coeffs[i] multiply cos(2 pi (i+1) xi) and
    sin(2 pi (i+1) xi); no constant slot exists, so the mean vanishes
    identically.
    """

    def __init__(self, cosine_coeffs=(), sine_coeffs=()):
        self.cosine_coeffs = tuple(float(c) for c in cosine_coeffs)
        self.sine_coeffs = tuple(float(s) for s in sine_coeffs)
        if not all(np.isfinite(self.cosine_coeffs + self.sine_coeffs)):
            raise ValueError("potential coefficients must be finite")
        if not any(c != 0.0 for c in self.cosine_coeffs + self.sine_coeffs):
            raise ValueError("periodic potential must be nonzero")

    def n_max(self):
        return max(len(self.cosine_coeffs), len(self.sine_coeffs))

    def coeff(self, n):
        """(cos, sin) amplitudes of the 2 pi n harmonic; (0, 0) out of range."""
        c = self.cosine_coeffs[n - 1] if 1 <= n <= len(self.cosine_coeffs) else 0.0
        s = self.sine_coeffs[n - 1] if 1 <= n <= len(self.sine_coeffs) else 0.0
        return c, s

    def __call__(self, xi):
        xi = np.asarray(xi, dtype=float)
        out = np.zeros(np.atleast_1d(xi).shape, dtype=float)
        x1 = np.atleast_1d(xi)
        for n in range(1, self.n_max() + 1):
            c, s = self.coeff(n)
            out += c * np.cos(2 * np.pi * n * x1) + s * np.sin(2 * np.pi * n * x1)
        return float(out[0]) if xi.ndim == 0 else out

    def as_cell_function(self):
        """The same series on the half-frequency basis (even k = 2n)."""
        k = 2 * self.n_max()
        cos_c = np.zeros(k + 1)
        sin_c = np.zeros(k + 1)
        for n in range(1, self.n_max() + 1):
            c, s = self.coeff(n)
            cos_c[2 * n] = c
            sin_c[2 * n] = s
        return CellFunction(cos_c, sin_c, "periodic")

    def sup_norm_bound(self):
        return float(
            sum(abs(c) for c in self.cosine_coeffs) + sum(abs(s) for s in self.sine_coeffs)
        )


def fourier_pair(a, n):
    """Half-amplitude Fourier pair of the background at frequency 2 pi n.

    With storage a = sum (c_n cos + s_n sin), the projection integrals
    int a cos(2 pi n xi) dxi and int a sin(2 pi n xi) dxi equal c_n/2 and
    s_n/2; out-of-range n reads as (0, 0).
    """
    if n < 1:
        raise ValueError("harmonic index must be >= 1")
    c, s = a.coeff(n)
    return c / 2.0, s / 2.0


def normalize_zero_mean(cosine_coeffs=(), sine_coeffs=(), constant=0.0):
    """Split off the constant term; the caller adds it back to every energy.

    Returns (PeriodicPotential, shift). Rejects an identically constant
    input since no oscillating part would remain.
    """
    try:
        pot = PeriodicPotential(cosine_coeffs, sine_coeffs)
    except ValueError as exc:
        raise ValueError(f"no oscillating part remains after removing the mean: {exc}") from exc
    return pot, float(constant)


# ---------------------------------------------------------------------------
# compact impurity potentials


def _jet_affine(x, depth, scale=1.0):
    out = np.zeros((depth + 1, x.size))
    out[0] = scale * x
    if depth >= 1:
        out[1] = scale
    return out


def _jet_absx(x, depth, scale=1.0):
    out = np.zeros((depth + 1, x.size))
    out[0] = scale * np.abs(x)
    if depth >= 1:
        out[1] = scale * np.sign(x)
    return out


def _sigma_jets(t, depth):
    """Jets of exp(-1/t), extended by 0 for t <= 0."""
    t = np.asarray(t, dtype=float)
    out = np.zeros((depth + 1, t.size))
    pos = t > 1e-3  # below this exp(-1/t) underflows to exactly 0 anyway
    if np.any(pos):
        out[:, pos] = jet_exp(-jet_reciprocal(_jet_affine(t[pos], depth)))
    return out


def _smoothstep_jets(t, depth):
    """C-infinity step: 0 for t <= 0, 1 for t >= 1."""
    t = np.asarray(t, dtype=float)
    lo = _sigma_jets(t, depth)
    hi = _sigma_jets(1.0 - t, depth)
    for k in range(1, depth + 1, 2):  # chain rule of the reflection
        hi[k] = -hi[k]
    return jet_mul(lo, jet_reciprocal(lo + hi))


def taper_jets(x, depth, lo, hi):
    """Jets of the even taper equal to 1 for |x| <= lo, 0 for |x| >= hi."""
    x = np.asarray(x, dtype=float)
    w = hi - lo
    step = _smoothstep_jets((np.abs(x) - lo) / w, depth)
    for k in range(1, depth + 1):
        step[k] /= w**k
    neg = x < 0
    for k in range(1, depth + 1, 2):  # mirror to x < 0
        step[k, neg] = -step[k, neg]
    return jet_const(1.0, depth, x.size) - step


def _bump_jets(x, depth, radius):
    """Jets of exp(1 - 1/(1-(x/radius)^2)) inside |x| < radius, 0 outside."""
    out = np.zeros((depth + 1, x.size))
    inside = np.abs(x) < radius * (1.0 - 1e-12)
    if np.any(inside):
        u = _jet_affine(x[inside], depth, 1.0 / radius)
        w = jet_mul(u, u)
        w[0] -= 1.0  # (x/r)^2 - 1, strictly negative inside
        out[:, inside] = np.e * jet_exp(jet_reciprocal(w))
    return out


class CompactPotential:
    """Smooth impurity potential vanishing for |x| >= x0.

    Built by `make_compact`; holds a jet evaluator so the expansion
    machinery can request any number of exact derivatives.
    """

    def __init__(self, x0, jet_fn, kind, params, edges=None):
        if x0 <= 0:
            raise ValueError("support radius must be positive")
        self.x0 = float(x0)
        self._jet_fn = jet_fn
        self.kind = kind
        self.params = dict(params)
        # (point, grading scale) pairs where the profile is smooth but not
        # analytic; quadrature grids must grade panels into these points
        self.edges = tuple(edges) if edges is not None else ((-self.x0, self.x0), (self.x0, self.x0))
        self._validate()

    def _validate(self):
        probe = np.linspace(-self.x0 * 0.98, self.x0 * 0.98, 401)
        vals = self(probe)
        if not np.all(np.isfinite(vals)):
            raise ValueError("potential evaluates to non-finite values")
        scale = float(np.max(np.abs(vals)))
        if scale == 0.0:
            raise ValueError("compact potential is identically zero")
        outside = np.concatenate(
            [np.linspace(self.x0, 2 * self.x0, 101), -np.linspace(self.x0, 2 * self.x0, 101)]
        )
        if np.max(np.abs(self(outside))) > 1e-10 * max(1.0, scale):
            raise ValueError("potential does not vanish outside the declared support")

    def jets(self, x, depth):
        return self._jet_fn(np.asarray(x, dtype=float), depth)

    def __call__(self, x):
        scalar = np.isscalar(x) or np.ndim(x) == 0
        vals = self.jets(np.atleast_1d(x), 0)[0]
        return float(vals[0]) if scalar else vals

    def l1_norm(self):
        # composite midpoint at 4096 points is plenty for a bookkeeping norm
        xs = np.linspace(-self.x0, self.x0, 4097)
        mid = 0.5 * (xs[1:] + xs[:-1])
        return float(np.sum(np.abs(self(mid))) * (xs[1] - xs[0]))


def support_radius(V):
    """Declared support radius; construction already verified the samples."""
    return V.x0


def _taper_edges(plateau, x0):
    # both ends of the taper band are exp(-1/t)-type smooth joins
    s = x0 - plateau
    return ((-x0, s), (-plateau, s), (plateau, s), (x0, s))


def make_compact(kind, params, x0):
    """Impurity factory.

    kinds: 'bump' (amplitude), 'sech_well' (depth, scale, plateau),
    'flat_well' (depth, plateau), 'poly_bump' (coeffs), 'gauss_bump'
    (amplitude, sigma, plateau), 'table' (x, values). Analytic kinds
    supply exact jets; 'table' is cubic-spline grade and refuses
    derivative orders beyond that.
    """
    x0 = float(x0)
    params = dict(params)

    if kind == "bump":
        amp = float(params.get("amplitude", 1.0))

        def jet_fn(x, depth):
            return amp * _bump_jets(x, depth, x0)

        return CompactPotential(x0, jet_fn, kind, {"amplitude": amp})

    if kind == "sech_well":
        well_depth = float(params.get("depth", 2.0))
        scale = float(params.get("scale", 1.0))
        plateau = float(params.get("plateau", 0.8)) * x0

        def jet_fn(x, depth):
            # sech^2(sx) = 4 m / (1+m)^2 with m = exp(-2s|x|), overflow-free
            m = jet_exp(_jet_absx(x, depth, -2.0 * scale))
            den = jet_const(1.0, depth, x.size) + m
            sech2 = 4.0 * jet_mul(m, jet_reciprocal(jet_mul(den, den)))
            return -well_depth * jet_mul(sech2, taper_jets(x, depth, plateau, x0))

        return CompactPotential(
            x0,
            jet_fn,
            kind,
            {"depth": well_depth, "scale": scale, "plateau": plateau / x0},
            edges=_taper_edges(plateau, x0),
        )

    if kind == "flat_well":
        well_depth = float(params.get("depth", 1.0))
        plateau = float(params.get("plateau", 0.9)) * x0
        if not 0.0 < plateau < x0:
            raise ValueError("plateau fraction must lie strictly inside (0, 1)")

        def jet_fn(x, depth):
            return -well_depth * taper_jets(x, depth, plateau, x0)

        return CompactPotential(
            x0,
            jet_fn,
            kind,
            {"depth": well_depth, "plateau": plateau / x0},
            edges=_taper_edges(plateau, x0),
        )

    if kind == "poly_bump":
        coeffs = [float(c) for c in params.get("coeffs", [1.0])]

        def jet_fn(x, depth):
            bump = _bump_jets(x, depth, x0)
            xvar = _jet_affine(x, depth)
            poly = jet_const(0.0, depth, x.size)
            for c in reversed(coeffs):
                poly = jet_mul(poly, xvar)
                poly[0] += c
            return jet_mul(poly, bump)

        return CompactPotential(x0, jet_fn, kind, {"coeffs": coeffs})

    if kind == "gauss_bump":
        amp = float(params.get("amplitude", 1.0))
        sigma = float(params.get("sigma", 1.0))
        plateau = float(params.get("plateau", 0.8)) * x0

        def jet_fn(x, depth):
            u = _jet_affine(x, depth, 1.0 / sigma)
            g = jet_exp(-jet_mul(u, u))
            return amp * jet_mul(g, taper_jets(x, depth, plateau, x0))

        return CompactPotential(
            x0,
            jet_fn,
            kind,
            {"amplitude": amp, "sigma": sigma},
            edges=_taper_edges(plateau, x0),
        )

    if kind == "table":
        from scipy.interpolate import CubicSpline

        xs = np.asarray(params["x"], dtype=float)
        vs = np.asarray(params["values"], dtype=float)
        spline = CubicSpline(xs, vs, bc_type="natural")

        def jet_fn(x, depth):
            if depth > 2:
                raise ValueError(
                    "tabulated potentials carry only spline-grade smoothness; "
                    f"derivative order {depth} unavailable"
                )
            out = np.zeros((depth + 1, x.size))
            inside = (x > xs[0]) & (x < xs[-1]) & (np.abs(x) < x0)
            for k in range(depth + 1):
                out[k, inside] = spline(x[inside], nu=k)
            return out

        knots = [(float(t), 0.0) for t in xs if -x0 < t < x0]
        return CompactPotential(
            x0,
            jet_fn,
            kind,
            {"x": xs.tolist(), "values": vs.tolist()},
            edges=tuple(knots) + ((-x0, 0.0), (x0, 0.0)),
        )

    raise ValueError(f"unknown compact-potential kind {kind!r}")
