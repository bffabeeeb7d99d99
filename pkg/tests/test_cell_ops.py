import numpy as np
import pytest

from oscspec.cell_ops import (
    classify_gap,
    essential_spectrum,
    gap_edge_series,
    lowest_edge_series,
    solve_cell_helmholtz,
    solve_cell_poisson,
)
from oscspec.potentials import CellFunction, PeriodicPotential, fourier_pair

GL = np.polynomial.legendre.leggauss(240)
QX = 0.5 * (GL[0] + 1.0)
QW = 0.5 * GL[1]


def random_background(rng, nmax=3):
    while True:
        c = rng.standard_normal(nmax)
        s = rng.standard_normal(nmax)
        if np.any(c != 0.0) or np.any(s != 0.0):
            return PeriodicPotential(c, s)


def random_cell(rng, parity, kmax=8, zero_mean=False):
    c = rng.standard_normal(kmax + 1)
    s = rng.standard_normal(kmax + 1)
    k = np.arange(kmax + 1)
    keep = (k % 2 == 0) if parity == "periodic" else (k % 2 == 1)
    f = CellFunction(c * keep, s * keep, parity)
    if zero_mean:
        f.cos_c[0] = 0.0
    return f


# -- cell solvers -------------------------------------------------------------


def test_poisson_right_inverse():
    rng = np.random.default_rng(0)
    for parity in ("periodic", "antiperiodic"):
        f = random_cell(rng, parity, zero_mean=(parity == "periodic"))
        u = solve_cell_poisson(f)
        res = -u.diff().diff() - f
        assert res.norm() < 1e-10 * max(1.0, f.norm())


def test_poisson_rejects_nonzero_mean():
    f = CellFunction([0.5, 0.0, 1.0], [0.0], "periodic")
    with pytest.raises(ValueError):
        solve_cell_poisson(f)


def test_poisson_output_zero_mean():
    rng = np.random.default_rng(1)
    f = random_cell(rng, "periodic", zero_mean=True)
    assert abs(solve_cell_poisson(f).mean()) < 1e-14


def test_helmholtz_right_inverse_and_projection():
    rng = np.random.default_rng(2)
    for n in (1, 2, 3):
        parity = "periodic" if n % 2 == 0 else "antiperiodic"
        f = random_cell(rng, parity)
        f.cos_c[n] = 0.0
        f.sin_c[n] = 0.0
        u = solve_cell_helmholtz(f, n)
        res = -(u.diff().diff() + np.pi**2 * n**2 * u) - f
        assert res.norm() < 1e-10 * max(1.0, f.norm())
        # output carries no kernel component
        assert abs(u.cos_c[n]) < 1e-14 and abs(u.sin_c[n]) < 1e-14


def test_helmholtz_kernel_error_above_tolerance():
    f = CellFunction([0.0, 1.0, 0.0, 0.5], [0.0], "antiperiodic")
    with pytest.raises(ValueError):
        solve_cell_helmholtz(f, 1)


def test_helmholtz_silent_projection_below_tolerance():
    f = CellFunction([0.0, 1e-11, 0.0, 1.0], [0.0], "antiperiodic")
    u = solve_cell_helmholtz(f, 1)
    assert abs(u.cos_c[1]) == 0.0


def test_solvers_self_adjoint():
    """(L f, g) = (f, L g) on the solvable subspace."""
    rng = np.random.default_rng(3)
    f = random_cell(rng, "periodic", zero_mean=True)
    g = random_cell(rng, "periodic", zero_mean=True)
    lhs = solve_cell_poisson(f).inner(g)
    rhs = f.inner(solve_cell_poisson(g))
    assert abs(lhs - rhs) < 1e-10 * max(1.0, f.norm() * g.norm())
    f2 = random_cell(rng, "antiperiodic")
    g2 = random_cell(rng, "antiperiodic")
    for h in (f2, g2):
        h.cos_c[1] = h.sin_c[1] = 0.0
    lhs = solve_cell_helmholtz(f2, 1).inner(g2)
    rhs = f2.inner(solve_cell_helmholtz(g2, 1))
    assert abs(lhs - rhs) < 1e-10 * max(1.0, f2.norm() * g2.norm())


# -- lowest edge --------------------------------------------------------------


def test_lowest_edge_first_coefficient_cosine():
    low = lowest_edge_series(PeriodicPotential([1.0]), 4)
    assert abs(low.mu[1] + 1.0 / (8 * np.pi**2)) < 1e-14


def test_lowest_edge_first_coefficient_closed_form():
    """First coefficient equals minus the Dirichlet energy of the first
    profile, and also the direct double-sum quadrature, for random inputs."""
    rng = np.random.default_rng(4)
    for _ in range(10):
        a = random_background(rng)
        low = lowest_edge_series(a, 2)
        phi1 = low.cell_corrections[1]
        d = phi1.diff()
        assert abs(low.mu[1] + d.inner(d)) < 1e-10
        # direct quadrature of the closed form sum_n (a_n^2+b_n^2)/(4 pi^2 n^2)
        closed = -sum(
            (an**2 + bn**2) / (2 * np.pi**2 * n**2)
            for n in range(1, 5)
            for an, bn in [fourier_pair(a, n)]
        )
        assert abs(low.mu[1] - closed) < 1e-10


def test_lowest_edge_profiles_zero_mean():
    rng = np.random.default_rng(5)
    a = random_background(rng)
    low = lowest_edge_series(a, 5)
    for phi in low.cell_corrections[1:]:
        assert abs(phi.mean()) < 1e-12


def test_lowest_edge_hierarchy_residual():
    """Profiles must satisfy their defining cell equations order by order."""
    a = PeriodicPotential([0.8, 0.1], [0.0, -0.4])
    low = lowest_edge_series(a, 5)
    acf = a.as_cell_function()
    for i in range(1, 6):
        res = low.cell_corrections[i].diff().diff() - acf.product(
            low.cell_corrections[i - 1]
        )
        for j in range(1, i + 1):
            res = res + low.mu[j - 1] * low.cell_corrections[i - j]
        # the mean slot carries the solvability bookkeeping, drop it
        res.cos_c[0] = 0.0
        assert res.norm() < 1e-9


# -- gap classification -------------------------------------------------------


def test_classify_cosine_first_gap():
    g = classify_gap(PeriodicPotential([1.0]), 1)
    assert g.depth == 1 and not g.collapsed
    assert abs(g.alpha) < 1e-14
    M = g.splitting_table()
    assert abs(M[0, 0] - 0.5) < 1e-14 and abs(M[1, 1] + 0.5) < 1e-14


def test_classify_sine_first_gap_rotation():
    g = classify_gap(PeriodicPotential([], [1.0]), 1)
    assert g.depth == 1
    # upper-edge labeling forces the negative root of cos(2 alpha) = 0
    assert abs(g.alpha + np.pi / 4) < 1e-14


def test_classify_cosine_second_gap_deeper():
    g = classify_gap(PeriodicPotential([1.0]), 2)
    assert g.depth >= 2


def test_classify_collapsed_reports_diagnostic():
    g = classify_gap(PeriodicPotential([1.0]), 3, max_depth=2)
    assert g.collapsed
    assert "band 3" in g.diagnostic
    with pytest.raises(ValueError):
        gap_edge_series(PeriodicPotential([1.0]), 3, 4, gap=g)


def test_splitting_table_symmetric():
    rng = np.random.default_rng(6)
    for _ in range(8):
        a = random_background(rng)
        g = classify_gap(a, int(rng.integers(1, 4)))
        if g.collapsed:
            continue
        M = g.splitting_table()
        assert abs(M[0, 1] - M[1, 0]) < 1e-10


# -- edge series --------------------------------------------------------------


def test_leading_split_is_fourier_amplitude():
    rng = np.random.default_rng(7)
    for _ in range(20):
        a = random_background(rng, nmax=4)
        n = int(rng.integers(1, 5))
        an, bn = fourier_pair(a, n)
        if np.hypot(an, bn) < 1e-6:
            continue
        ges = gap_edge_series(a, n, 1)
        r = np.hypot(an, bn)
        assert abs(ges.plus.mu[0] - r) < 1e-12
        assert abs(ges.minus.mu[0] + r) < 1e-12


def test_cosine_gap_edges_match_both_sides():
    ges = gap_edge_series(PeriodicPotential([1.0]), 1, 6)
    assert abs(ges.plus.mu[0] - 0.5) < 1e-14
    assert abs(ges.minus.mu[0] + 0.5) < 1e-14
    # even background: the two sides share even-order and flip odd-order terms
    assert abs(ges.plus.mu[1] - ges.minus.mu[1]) < 1e-12
    assert abs(ges.plus.mu[2] + ges.minus.mu[2]) < 1e-12
    assert ges.max_residual < 1e-10


def test_series_translation_invariance():
    """Shifting the background must not change the edge energies."""
    cos_v = gap_edge_series(PeriodicPotential([1.0]), 1, 6)
    sin_v = gap_edge_series(PeriodicPotential([], [1.0]), 1, 6)
    assert np.allclose(cos_v.plus.mu, sin_v.plus.mu, atol=1e-12)
    assert np.allclose(cos_v.minus.mu, sin_v.minus.mu, atol=1e-12)


def test_edge_hierarchy_residual_mixed_background():
    a = PeriodicPotential([0.7, -0.3], [0.2, 0.1])
    ges = gap_edge_series(a, 1, 8)
    assert ges.max_residual < 1e-9
    assert len(ges.plus.full) == 8  # assembled profiles through order-depth


def test_edge_profiles_orthogonal_to_edge_states():
    a = PeriodicPotential([0.5, 0.2], [0.3])
    ges = gap_edge_series(a, 1, 6)
    for side in (ges.plus, ges.minus):
        for phi in side.corrections[1:]:
            assert abs(phi.inner(ges.plus.phi0)) < 1e-10
            assert abs(phi.inner(ges.minus.phi0)) < 1e-10


def test_essential_spectrum_layout():
    es = essential_spectrum(PeriodicPotential([1.0]), 0.1, n_gaps=2, order=5)
    assert len(es.bands) == 2 and len(es.gaps) == 2
    for lo, hi in es.bands:
        assert lo < hi
    for lo, hi in es.gaps:
        assert hi >= lo
    # first gap sits near pi^2/eps^2 and has order-1 width
    lo, hi = es.gaps[0]
    assert abs(0.5 * (lo + hi) - np.pi**2 / 0.01) < 5.0
    assert abs((hi - lo) - 1.0) < 0.01
    assert es.edge_errors["1-"] > 0.0


def test_essential_spectrum_warns_outside_asymptotic_regime():
    es = essential_spectrum(PeriodicPotential([1.0]), 20.0, n_gaps=1, order=6)
    assert any("asymptotic" in w for w in es.warnings)


def test_essential_spectrum_collapsed_gap_warns():
    a = PeriodicPotential([1.0])
    es = essential_spectrum(a, 0.1, n_gaps=3, order=2)
    # order=2 keeps classification depth at 8, so gap 3 resolves; force a
    # shallow probe through a tiny max_depth via classify_gap directly
    g = classify_gap(a, 4, max_depth=3)
    assert g.collapsed
    assert not es.warnings or all("closed" not in w for w in es.warnings)
