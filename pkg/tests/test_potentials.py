import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oscspec.potentials import (
    CellFunction,
    CompactPotential,
    PeriodicPotential,
    fourier_pair,
    make_compact,
    normalize_zero_mean,
    support_radius,
    taper_jets,
)

GL = np.polynomial.legendre.leggauss(240)
QX = 0.5 * (GL[0] + 1.0)
QW = 0.5 * GL[1]


def quad01(f):
    return float(np.sum(QW * f(QX)))


def random_cell(rng, parity, kmax=9):
    c = rng.standard_normal(kmax + 1)
    s = rng.standard_normal(kmax + 1)
    k = np.arange(kmax + 1)
    keep = (k % 2 == 0) if parity == "periodic" else (k % 2 == 1)
    return CellFunction(c * keep, s * keep, parity)


# -- fourier pair conventions -------------------------------------------------


def test_fourier_pair_pure_cosine():
    a = PeriodicPotential([1.0])
    assert fourier_pair(a, 1) == (0.5, 0.0)
    assert fourier_pair(a, 2) == (0.0, 0.0)


def test_fourier_pair_pure_sine():
    a = PeriodicPotential([], [1.0])
    assert fourier_pair(a, 1) == (0.0, 0.5)


def test_fourier_pair_matches_projection_integrals():
    rng = np.random.default_rng(3)
    a = PeriodicPotential(rng.standard_normal(3), rng.standard_normal(3))
    for n in (1, 2, 3, 4):
        an, bn = fourier_pair(a, n)
        assert abs(an - quad01(lambda t: a(t) * np.cos(2 * np.pi * n * t))) < 1e-12
        assert abs(bn - quad01(lambda t: a(t) * np.sin(2 * np.pi * n * t))) < 1e-12


def test_fourier_pair_rejects_bad_index():
    a = PeriodicPotential([1.0])
    with pytest.raises(ValueError):
        fourier_pair(a, 0)


# -- periodic potential -------------------------------------------------------


def test_periodic_mean_vanishes():
    rng = np.random.default_rng(7)
    for _ in range(10):
        a = PeriodicPotential(rng.standard_normal(4), rng.standard_normal(4))
        assert abs(quad01(a)) < 1e-12


def test_periodic_parseval():
    """Sum of squared half-amplitudes doubles to the L2 mass."""
    rng = np.random.default_rng(9)
    for _ in range(10):
        a = PeriodicPotential(rng.standard_normal(5), rng.standard_normal(5))
        pairs = [fourier_pair(a, n) for n in range(1, 6)]
        lhs = 2.0 * sum(an**2 + bn**2 for an, bn in pairs)
        assert abs(lhs - quad01(lambda t: a(t) ** 2)) < 1e-10


def test_periodic_rejects_zero_and_nonfinite():
    with pytest.raises(ValueError):
        PeriodicPotential([0.0], [0.0])
    with pytest.raises(ValueError):
        PeriodicPotential([np.inf])


def test_normalize_zero_mean_splits_constant():
    a, shift = normalize_zero_mean([1.0, 0.5], [], constant=-3.0)
    assert shift == -3.0
    assert abs(quad01(a)) < 1e-12
    with pytest.raises(ValueError):
        normalize_zero_mean([], [], constant=2.0)


def test_as_cell_function_doubles_index():
    a = PeriodicPotential([0.0, 1.0], [0.25])
    cf = a.as_cell_function()
    assert cf.parity == "periodic"
    assert cf.cos_c[4] == 1.0 and cf.sin_c[2] == 0.25
    xs = np.linspace(0, 1, 41)
    assert np.allclose(cf(xs), a(xs), atol=1e-13)


# -- cell functions -----------------------------------------------------------


def test_cell_parity_enforced():
    with pytest.raises(ValueError):
        CellFunction([0.0, 1.0], [0.0], "periodic")
    with pytest.raises(ValueError):
        CellFunction([1.0], [0.0], "antiperiodic")


def test_cell_boundary_conditions():
    rng = np.random.default_rng(1)
    for parity, sgn in (("periodic", 1.0), ("antiperiodic", -1.0)):
        u = random_cell(rng, parity)
        d = u.diff()
        assert abs(u(0.0) - sgn * u(1.0)) < 1e-12
        assert abs(d(0.0) - sgn * d(1.0)) < 1e-11
        assert u.boundary_residual() < 1e-11


def test_cell_inner_is_quadrature():
    rng = np.random.default_rng(2)
    u = random_cell(rng, "antiperiodic")
    v = random_cell(rng, "antiperiodic")
    assert abs(u.inner(v) - quad01(lambda t: u(t) * v(t))) < 1e-11
    assert abs(u.norm_sq() - quad01(lambda t: u(t) ** 2)) < 1e-11


def test_cell_inner_rejects_mixed_parity():
    rng = np.random.default_rng(2)
    u = random_cell(rng, "periodic")
    v = random_cell(rng, "antiperiodic")
    with pytest.raises(ValueError):
        u.inner(v)


def test_cell_mean_antiperiodic():
    u = CellFunction([0.0, 0.0], [0.0, 1.0], "antiperiodic")
    # integral of sin(pi xi) over one unit
    assert abs(u.mean() - 2.0 / np.pi) < 1e-14


def test_cell_product_pointwise():
    rng = np.random.default_rng(4)
    cases = [("periodic", "periodic"), ("periodic", "antiperiodic"), ("antiperiodic", "antiperiodic")]
    xs = np.linspace(0.0, 1.0, 97)
    for pa, pb in cases:
        u = random_cell(rng, pa, 7)
        v = random_cell(rng, pb, 8)
        p = u.product(v)
        want = "periodic" if pa == pb else "antiperiodic"
        assert p.parity == want
        assert np.max(np.abs(p(xs) - u(xs) * v(xs))) < 1e-11


def test_cell_diff_pointwise():
    rng = np.random.default_rng(6)
    u = random_cell(rng, "antiperiodic")
    xs = np.linspace(0.0, 1.0, 11)
    h = 1e-6
    fd = (u(xs + h) - u(xs - h)) / (2 * h)
    assert np.max(np.abs(u.diff()(xs) - fd)) < 1e-6


def test_cell_truncation_warns_on_heavy_tail():
    u = CellFunction([1.0, 0.0, 1.0], [0.0], "periodic")
    with pytest.warns(UserWarning):
        u.truncated(1)
    # negligible tail stays silent
    v = CellFunction([1.0, 0.0, 1e-12], [0.0], "periodic")
    with np.errstate(all="raise"):
        v.truncated(1)


@given(
    st.lists(st.floats(-2, 2), min_size=1, max_size=4),
    st.lists(st.floats(-2, 2), min_size=1, max_size=4),
)
@settings(max_examples=40, deadline=None)
def test_product_linearity_property(ca, cb):
    k = np.arange(5)
    base = np.where(k % 2 == 0, 1.0, 0.0)
    u = CellFunction(base * 0.0 + np.pad(ca, (0, 5 - len(ca)))[:5] * base, np.zeros(5), "periodic")
    v = CellFunction(np.pad(cb, (0, 5 - len(cb)))[:5] * base, np.zeros(5), "periodic")
    w = CellFunction([1.0, 0.0, 0.5], [0.0, 0.0, -0.3], "periodic")
    lhs = (u + v).product(w)
    rhs = u.product(w) + v.product(w)
    xs = np.linspace(0, 1, 31)
    assert np.max(np.abs(lhs(xs) - rhs(xs))) < 1e-9


# -- compact impurities -------------------------------------------------------


def test_bump_values_and_support():
    V = make_compact("bump", {"amplitude": 2.0}, 1.5)
    assert abs(V(0.0) - 2.0) < 1e-14
    assert V(1.5) == 0.0 and V(-3.0) == 0.0
    assert support_radius(V) == 1.5


def test_sech_well_matches_closed_form_in_plateau():
    V = make_compact("sech_well", {"depth": 2.0, "scale": 1.0}, 10.0)
    xs = np.linspace(-6.0, 6.0, 25)
    assert np.max(np.abs(V(xs) + 2.0 / np.cosh(xs) ** 2)) < 1e-14
    assert abs(V(10.0)) == 0.0


def test_jets_match_finite_differences():
    """Analytic derivative rows agree with central differences of order 0 rows."""
    V = make_compact("gauss_bump", {"amplitude": 1.3, "sigma": 0.7}, 2.0)
    xs = np.array([-1.2, -0.3, 0.4, 1.1])
    h = 1e-5
    jv = V.jets(xs, 2)
    fd1 = (V(xs + h) - V(xs - h)) / (2 * h)
    fd2 = (V(xs + h) - 2 * V(xs) + V(xs - h)) / h**2
    assert np.max(np.abs(jv[1] - fd1)) < 1e-7
    assert np.max(np.abs(jv[2] - fd2)) < 1e-4


def test_poly_bump_even_and_odd_parts():
    V = make_compact("poly_bump", {"coeffs": [0.0, 1.0]}, 1.0)  # x * bump
    assert abs(V(0.3) + V(-0.3)) < 1e-14
    assert V(0.3) != 0.0


def test_table_kind_interpolates_and_limits_depth():
    xs = np.linspace(-2.0, 2.0, 81)
    vals = np.exp(-1 / np.clip(1 - (xs / 2) ** 2, 1e-12, None)) * (np.abs(xs) < 2)
    V = make_compact("table", {"x": xs, "values": vals}, 2.0)
    assert abs(V(0.0) - np.exp(-1.0)) < 1e-3
    with pytest.raises(ValueError):
        V.jets(np.array([0.1]), 4)


def test_validation_catches_nonvanishing_tail():
    def jet_fn(x, depth):
        out = np.zeros((depth + 1, x.size))
        out[0] = np.exp(-(x**2))  # Gaussian never actually reaches zero
        return out

    with pytest.raises(ValueError):
        CompactPotential(1.0, jet_fn, "raw", {})


def test_unknown_kind_rejected():
    with pytest.raises(ValueError):
        make_compact("mystery", {}, 1.0)


def test_taper_plateau_and_cutoff():
    t = taper_jets(np.array([0.1, -0.4, 1.2, -2.0]), 1, 0.5, 1.0)
    assert t[0, 0] == 1.0 and t[0, 1] == 1.0
    assert 0.0 < t[0, 2] < 1.0 or t[0, 2] == 0.0
    assert t[0, 3] == 0.0
    assert t[1, 0] == 0.0  # flat inside the plateau
