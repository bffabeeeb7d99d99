import numpy as np
import pytest
from scipy.special import mathieu_a, mathieu_b

from oscspec.cell_ops import gap_edge_series, lowest_edge_series
from oscspec.floquet import (
    band_edges_numeric,
    bloch_solutions,
    cell_solution,
    discriminant,
    monodromy,
    multipliers,
)
from oscspec.potentials import PeriodicPotential


def mathieu_edges(n, eps):
    """Reference edges for a = cos 2*pi*xi via scipy's characteristic values."""
    q = eps**2 / (2.0 * np.pi**2)
    if n == 0:
        lam = np.pi**2 * mathieu_a(0, q) / eps**2
        return lam, lam
    return (
        np.pi**2 * mathieu_b(n, q) / eps**2,
        np.pi**2 * mathieu_a(n, q) / eps**2,
    )


def random_background(rng, nmax=3):
    while True:
        c = rng.standard_normal(nmax)
        s = rng.standard_normal(nmax)
        if np.any(c != 0.0) or np.any(s != 0.0):
            return PeriodicPotential(c, s)


# -- monodromy basics ---------------------------------------------------------


def test_monodromy_unit_determinant_random_samples():
    rng = np.random.default_rng(11)
    for _ in range(12):
        a = random_background(rng)
        eps = float(rng.uniform(0.03, 0.3))
        lam = float(rng.uniform(-5.0, 5.0)) / eps**2
        M = monodromy(a, eps, lam)
        assert abs(M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0] - 1.0) < 1e-10


def test_multipliers_product_one_and_branch():
    a = PeriodicPotential([1.0])
    eps = 0.1
    # below the bottom edge: trace > 2, kappa real and > 1
    kp, km = multipliers(a, eps, -10.0)
    assert abs(kp * km - 1.0) < 1e-12
    assert kp.imag == 0.0 and kp > 1.0
    # inside the first band: unimodular complex pair
    lo, hi = mathieu_edges(1, eps)
    e0 = mathieu_edges(0, eps)[0]
    inside = 0.5 * (e0 + lo)
    kp, km = multipliers(a, eps, inside)
    assert abs(abs(kp) - 1.0) < 1e-9
    assert abs(kp * km - 1.0) < 1e-12


@pytest.mark.parametrize("n", [1, 2])
def test_multiplier_sign_alternates_with_gap_index(n):
    # trace is +2 at periodic edges, -2 at antiperiodic ones, so inside
    # gap n the real multiplier carries sign (-1)^n
    a = PeriodicPotential([1.0])
    eps = 0.2
    lo, hi = mathieu_edges(n, eps)
    kp, _ = multipliers(a, eps, 0.5 * (lo + hi))
    assert kp.imag == 0.0
    assert np.sign(kp) == (-1.0) ** n
    assert abs(kp) > 1.0


# -- dense cell solutions -----------------------------------------------------


def test_cell_solution_period_shift_consistency():
    a = PeriodicPotential([0.6, -0.2], [0.1, 0.3])
    cs = cell_solution(a, 0.15, 3.0)
    base = cs.at(0.3)[:, 0]
    M = cs.matrix
    B = np.array([[base[0], base[2]], [base[1], base[3]]])
    expect = B @ (M @ M)
    got = cs.at(2.3)[:, 0]
    want = np.array([expect[0, 0], expect[1, 0], expect[0, 1], expect[1, 1]])
    assert np.max(np.abs(got - want)) < 1e-9 * max(1.0, np.max(np.abs(want)))


def test_cell_solution_negative_shift_and_wronskian():
    a = PeriodicPotential([1.0])
    cs = cell_solution(a, 0.1, -4.0)
    assert cs.wronskian_residual() < 1e-10
    # value at xi = -1 equals M^{-1} applied to the data at 0
    got = cs.at(-1.0)[:, 0]
    Minv = np.linalg.inv(cs.matrix)
    want = np.array([Minv[0, 0], Minv[1, 0], Minv[0, 1], Minv[1, 1]])
    assert np.max(np.abs(got - want)) < 1e-9


def test_bloch_pair_decay_ratios_and_wronskian():
    a = PeriodicPotential([1.0])
    eps = 0.1
    lo, hi = mathieu_edges(1, eps)
    lam = 0.5 * (lo + hi)
    bp = bloch_solutions(a, eps, lam)
    kappa = bp.kappa
    xi = np.array([0.25, 1.25, 2.25])
    up, _ = bp.theta(+1, xi)
    um, _ = bp.theta(-1, xi)
    # one period to the right multiplies theta(+) by 1/kappa, theta(-) by kappa
    assert np.allclose(up[1:] / up[:-1], 1.0 / kappa, rtol=1e-8)
    assert np.allclose(um[1:] / um[:-1], kappa, rtol=1e-8)
    assert abs(kappa) > 1.0
    u_p, du_p = bp.theta(+1, 0.37)
    u_m, du_m = bp.theta(-1, 0.37)
    w = u_p * du_m - du_p * u_m
    assert abs(w - bp.wronskian) < 1e-9 * max(1.0, abs(bp.wronskian))


def test_bloch_solutions_refuse_band_interior():
    a = PeriodicPotential([1.0])
    eps = 0.1
    e0 = mathieu_edges(0, eps)[0]
    lo = mathieu_edges(1, eps)[0]
    with pytest.raises(ValueError):
        bloch_solutions(a, eps, 0.5 * (e0 + lo))


# -- numeric edges: matrix method --------------------------------------------


@pytest.mark.parametrize("eps", [0.1, 0.05])
@pytest.mark.parametrize("n", [0, 1, 2])
def test_matrix_edges_match_mathieu(eps, n):
    a = PeriodicPotential([1.0])
    e = band_edges_numeric(a, eps, n)
    lo, hi = mathieu_edges(n, eps)
    scale = max(1.0, abs(hi))
    assert abs(e.lower - lo) < 1e-9 * scale
    assert abs(e.upper - hi) < 1e-9 * scale
    assert e.resolved


def test_matrix_edges_narrow_third_gap():
    # width ~ 4e-9 at eps = 0.1: far below what trace roots can see,
    # but still certified by the pair splitting
    a = PeriodicPotential([1.0])
    e = band_edges_numeric(a, 0.1, 3)
    lo, hi = mathieu_edges(3, 0.1)
    assert abs(e.lower - lo) < 1e-8
    assert abs(e.upper - hi) < 1e-8
    assert e.resolved
    assert 1e-9 < e.width < 1e-8


def test_matrix_edges_flag_unresolvable_splitting():
    # at eps = 0.05 the third gap's splitting sits below the eigensolver
    # noise floor; the result must say so instead of reporting noise
    a = PeriodicPotential([1.0])
    e = band_edges_numeric(a, 0.05, 3)
    assert not e.resolved


def test_matrix_edges_mixed_background_against_series():
    a = PeriodicPotential([0.7, -0.3], [0.2, 0.1])
    ges = gap_edge_series(a, 1, 8)
    for eps in (0.1, 0.05):
        e = band_edges_numeric(a, eps, 1)
        scale = np.pi**2 / eps**2
        assert abs(e.lower - ges.value(-1, eps)) < 1e-8 * scale
        assert abs(e.upper - ges.value(+1, eps)) < 1e-8 * scale


def test_matrix_bottom_edge_against_series():
    a = PeriodicPotential([0.7, -0.3], [0.2, 0.1])
    les = lowest_edge_series(a, 8)
    e = band_edges_numeric(a, 0.05, 0)
    assert abs(e.edge - les.value(0.05)) < 1e-8
    assert e.width == 0.0


# -- numeric edges: discriminant method ---------------------------------------


def test_discriminant_edges_wide_gap_and_bottom():
    a = PeriodicPotential([1.0])
    eps = 0.1
    e1 = band_edges_numeric(a, eps, 1, method="discriminant")
    lo, hi = mathieu_edges(1, eps)
    scale = np.pi**2 / eps**2
    assert abs(e1.lower - lo) < 1e-8 * scale
    assert abs(e1.upper - hi) < 1e-8 * scale
    e0 = band_edges_numeric(a, eps, 0, method="discriminant")
    ref = mathieu_edges(0, eps)[0]
    assert abs(e0.edge - ref) < 1e-8


def test_methods_agree_on_wide_gap():
    a = PeriodicPotential([0.5, 0.2], [0.0, -0.4])
    eps = 0.12
    em = band_edges_numeric(a, eps, 1)
    ed = band_edges_numeric(a, eps, 1, method="discriminant")
    scale = np.pi**2 / eps**2
    assert abs(em.lower - ed.lower) < 1e-7 * scale
    assert abs(em.upper - ed.upper) < 1e-7 * scale


def test_trace_at_matrix_edges_sits_on_band_boundary():
    a = PeriodicPotential([0.7, -0.3], [0.2, 0.1])
    eps = 0.1
    e = band_edges_numeric(a, eps, 1)
    for lam in (e.lower, e.upper):
        assert abs(abs(discriminant(a, eps, lam)) - 2.0) < 1e-10


def test_unknown_method_and_negative_band_rejected():
    a = PeriodicPotential([1.0])
    with pytest.raises(ValueError):
        band_edges_numeric(a, 0.1, 1, method="shooting")
    with pytest.raises(ValueError):
        band_edges_numeric(a, 0.1, -1)
