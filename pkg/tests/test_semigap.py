import numpy as np
import pytest

from oscspec.cell_ops import lowest_edge_series, solve_cell_poisson
from oscspec.potentials import PeriodicPotential, make_compact
from oscspec.semigap import (
    count_below_band_levels,
    resonance_level_expansion,
    well_level_expansion,
)
from oscspec.well import discrete_spectrum, resonance_check, support_grid

# depth putting the flat-bottomed well (x0 = 1.5, plateau 0.8) at the second
# state's appearance threshold; bisected in test_well and reused here as the
# canonical resonant configuration
THRESHOLD_DEPTH = 1.1635033988431132**2

SECH = make_compact("sech_well", {"depth": 2.0, "scale": 1.0, "plateau": 0.8}, 10.0)
COS = PeriodicPotential([1.0])


def flat_well(depth):
    return make_compact("flat_well", {"depth": depth, "plateau": 0.8}, 1.5)


def random_background(rng):
    while True:
        c = rng.uniform(-1.0, 1.0, size=2)
        s = rng.uniform(-1.0, 1.0, size=1)
        if np.abs(np.concatenate([c, s])).max() > 0.1:
            return PeriodicPotential(c, s)


def grad_norm_sq(state_like, grid_span, V):
    grid = support_grid(V, grid_span)
    return state_like.slow(grid, 2).diff(1).norm_sq()


def test_bound_level_tracks_edge_at_leading_order():
    # second coefficient equals the edge's first, third vanishes, for
    # arbitrary background / well combinations
    rng = np.random.default_rng(7)
    for _ in range(3):
        a = random_background(rng)
        depth = rng.uniform(1.2, 3.0)
        V = make_compact(
            "sech_well", {"depth": depth, "scale": 1.0, "plateau": 0.8}, 10.0
        )
        state = discrete_spectrum(V)[0]
        exp = well_level_expansion(V, a, state, order=4)
        mu = lowest_edge_series(a, order=2).mu
        assert exp.base == state.lam
        assert exp.coeffs[1] == 0.0
        assert abs(exp.coeffs[2] - mu[1]) < 1e-10
        assert abs(exp.coeffs[3]) < 1e-10


def test_bound_fourth_coefficient_closed_form():
    state = discrete_spectrum(SECH)[0]
    exp = well_level_expansion(SECH, COS, state, order=6)
    mu = lowest_edge_series(COS, order=2).mu
    np1 = grad_norm_sq(state, 30.0, SECH)
    cell_sq = solve_cell_poisson(COS.as_cell_function()).norm_sq()
    assert abs(cell_sq - 1.0 / (32 * np.pi**4)) < 1e-15
    lam4 = mu[2] - 4.0 * np1 * cell_sq
    assert abs(exp.coeffs[4] - lam4) < 1e-12
    # the level always detaches downward from the edge at this order
    assert exp.coeffs[4] < mu[2]


def test_bound_expansion_internal_residuals():
    rng = np.random.default_rng(11)
    a = random_background(rng)
    state = discrete_spectrum(SECH)[0]
    exp = well_level_expansion(SECH, a, state, order=6)
    assert exp.notes["orthogonality_max"] < 1e-8
    assert exp.notes["cell_mean_max"] < 1e-10
    assert exp.notes["solvability_max"] < 1e-9
    assert exp.notes["u2_sup"] < 1e-9
    assert exp.notes["mean_cancel_max"] < 1e-10


def test_bound_order_validation():
    state = discrete_spectrum(SECH)[0]
    with pytest.raises(ValueError, match="order"):
        well_level_expansion(SECH, COS, state, order=1)
    with pytest.raises(ValueError, match="order"):
        well_level_expansion(SECH, COS, state, order=7)


def test_resonance_even_coefficients_glue_to_edge():
    # through the seventh power the emerging level is indistinguishable
    # from the band edge: even coefficients match, odd ones vanish
    V = flat_well(THRESHOLD_DEPTH)
    z = resonance_check(V)
    assert z.status == "resonant"
    a = PeriodicPotential([0.7, -0.3], [0.4])
    exp = resonance_level_expansion(V, a, z, order=8)
    mu = lowest_edge_series(a, order=4).mu
    for j in (1, 2, 3):
        assert abs(exp.coeffs[2 * j] - mu[j]) < 1e-9
    for i in (3, 5, 7):
        assert abs(exp.coeffs[i]) < 1e-10
        assert abs(exp.tau[i]) < 1e-10


def test_resonance_decay_rate_leading_coefficient():
    V = flat_well(THRESHOLD_DEPTH)
    z = resonance_check(V)
    exp = resonance_level_expansion(V, COS, z, order=8)
    np1 = grad_norm_sq(z, 4.5, V)
    cell_sq = solve_cell_poisson(COS.as_cell_function()).norm_sq()
    assert exp.tau[4] > 0.0
    assert abs(exp.tau[4] - 4.0 * np1 * cell_sq) < 1e-8
    assert exp.tau[2] == 0.0 and exp.tau[3] == 0.0


def test_resonance_detachment_at_eighth_order():
    # the level finally leaves the edge by the square of the leading
    # decay coefficient
    V = flat_well(THRESHOLD_DEPTH)
    z = resonance_check(V)
    a = PeriodicPotential([0.7, -0.3], [0.4])
    exp = resonance_level_expansion(V, a, z, order=8)
    mu = lowest_edge_series(a, order=4).mu
    assert abs(exp.coeffs[8] + exp.tau[4] ** 2 - mu[4]) < 1e-9
    assert exp.coeffs[8] < mu[4]


def test_resonance_chi_geometry_invariance():
    # the cut-off radius and taper width are bookkeeping; nothing
    # physical may depend on them
    V = flat_well(THRESHOLD_DEPTH)
    z = resonance_check(V)
    a = PeriodicPotential([0.7, -0.3], [0.4])
    base = resonance_level_expansion(V, a, z, order=8)
    for ci, cw in [(1.0, 0.7), (0.6, 1.3)]:
        other = resonance_level_expansion(V, a, z, order=8, chi_inner=ci, chi_width=cw)
        assert np.max(np.abs(other.coeffs - base.coeffs)) < 1e-9
        assert np.max(np.abs(other.tau - base.tau)) < 1e-9


def test_resonance_internal_residuals():
    V = flat_well(THRESHOLD_DEPTH)
    z = resonance_check(V)
    exp = resonance_level_expansion(V, COS, z, order=8)
    assert exp.notes["stage23_solvability"] < 1e-9
    assert exp.notes["orthogonality_max"] < 1e-8
    assert exp.notes["cell_mean_max"] < 1e-10
    assert exp.notes["mean_cancel_max"] < 1e-10
    assert exp.notes["support_residual_max"] < 1e-10
    assert exp.notes["plateau_norm_residual"] < 1e-12


def test_resonance_requires_threshold_state():
    V = flat_well(0.5 * THRESHOLD_DEPTH)
    z = resonance_check(V)
    assert z.status == "none"
    with pytest.raises(ValueError, match="resonance"):
        resonance_level_expansion(V, COS, z)


def test_resonance_marginal_status_propagates_warning():
    # the tapered reflectionless well sits a hair off its threshold state
    z = resonance_check(SECH)
    assert z.status == "marginal"
    exp = resonance_level_expansion(SECH, COS, z, order=4)
    assert exp.warnings
    assert "marginal" in exp.warnings[0]


def test_level_count_cases():
    cases = [
        (make_compact("bump", {"amplitude": 1.0}, 1.0), 0, 0, False),
        (flat_well(0.5 * THRESHOLD_DEPTH), 1, 1, False),
        (flat_well(THRESHOLD_DEPTH), 2, 1, True),
        (flat_well(12.0), 3, 3, False),
    ]
    for V, count, wells, res in cases:
        c = count_below_band_levels(V, COS)
        assert (c.count, c.well_states, c.has_resonance_level) == (count, wells, res)
        assert not c.warnings


def test_level_count_marginal_is_flagged():
    c = count_below_band_levels(SECH, COS)
    assert c.count == 1
    assert not c.has_resonance_level
    assert c.warnings and "ambiguous" in c.warnings[0]


def test_expansion_evaluate_and_tau_at():
    V = flat_well(THRESHOLD_DEPTH)
    z = resonance_check(V)
    exp = resonance_level_expansion(V, COS, z, order=6)
    eps = 0.1
    direct = sum(exp.coeffs[i] * eps**i for i in range(exp.coeffs.size))
    assert abs(exp.evaluate(eps) - direct) < 1e-18
    assert abs(exp.tau_at(eps) - exp.tau[4] * eps**4 - exp.tau[6] * eps**6) < 1e-18
    state = discrete_spectrum(SECH)[0]
    bexp = well_level_expansion(SECH, COS, state, order=2)
    with pytest.raises(ValueError, match="decay"):
        bexp.tau_at(eps)
