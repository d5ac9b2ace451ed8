import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import brentq

from online_alloc.model import Bounds
from online_alloc.threshold import (
    ThresholdFunction,
    check_sufficiency,
    envelope_threshold,
    eval_phi,
    gronwall_envelope,
    invert_phi,
    load_threshold,
    make_phi_star,
    min_alpha_feasible,
    save_threshold,
    tabulate,
    threshold_from_pairs,
)

E = math.e


def closed_form_phi_star(L, U, y):
    """Independent statement of the optimal threshold."""
    a = math.log(U / L) + 1
    return L if y <= 1 / a else (L / E) * math.exp(a * y)


# --- make_phi_star -------------------------------------------------------


def test_phi_star_theta_e(bounds_e):
    phi = make_phi_star(bounds_e)
    assert phi.alpha == pytest.approx(2.0, abs=1e-15)
    assert phi.omega == pytest.approx(0.5, abs=1e-15)
    assert eval_phi(phi, 0.3) == 1.0
    assert abs(eval_phi(phi, 1.0) - E) <= 1e-12 * E


def test_phi_star_value_at_three_quarters(phi_e):
    # (1/e) e^{2 * 0.75} = e^{0.5}
    assert eval_phi(phi_e, 0.75) == pytest.approx(math.exp(0.5), rel=1e-14)
    assert eval_phi(phi_e, 0.75) == pytest.approx(1.64872, abs=1e-5)


def test_phi_star_degenerate_theta_one():
    phi = make_phi_star(Bounds(1, 1))
    assert phi.alpha == 1 and phi.omega == 1 and phi.kind == "flat"
    assert np.all(eval_phi(phi, np.linspace(0, 1, 11)) == 1.0)
    assert invert_phi(phi, 1.0) == 1.0
    assert check_sufficiency(phi, 1.0, 100).passed


@pytest.mark.parametrize("L, U", [(1, E), (2, 7), (0.5, 0.5 * E**4), (3, 3.0001)])
def test_phi_star_matches_closed_form(L, U):
    phi = make_phi_star(Bounds(L, U))
    for y in np.linspace(0, 1, 41):
        assert eval_phi(phi, y) == pytest.approx(closed_form_phi_star(L, U, y), rel=1e-12)
    assert abs(phi.top - U) <= 1e-12 * U


# --- eval / invert -------------------------------------------------------


def test_eval_endpoints(phi_e):
    assert eval_phi(phi_e, 0.0) == 1.0
    assert eval_phi(phi_e, 1.0) == pytest.approx(E, rel=1e-12)


def test_eval_rejects_out_of_domain(phi_e):
    with pytest.raises(ValueError):
        eval_phi(phi_e, -0.1)
    with pytest.raises(ValueError):
        eval_phi(phi_e, 1.1)


def test_tabulated_midpoint_interpolates(bounds_e):
    phi = ThresholdFunction(bounds_e, 0.5, 2.0, knots_y=[0.5, 0.75, 1.0], knots_phi=[1.0, 2.0, E])
    assert eval_phi(phi, 0.625) == pytest.approx(1.5)
    assert eval_phi(phi, 0.875) == pytest.approx((2.0 + E) / 2)
    assert invert_phi(phi, 1.5) == pytest.approx(0.625)


@pytest.mark.parametrize("b, y", [(1.0, 0.5), (E, 1.0), (math.exp(0.2), 0.6)])
def test_invert_examples(phi_e, b, y):
    assert invert_phi(phi_e, b) == pytest.approx(y, abs=1e-14)


def test_invert_rejects_out_of_range(phi_e):
    with pytest.raises(ValueError):
        invert_phi(phi_e, 0.9)
    with pytest.raises(ValueError):
        invert_phi(phi_e, 3.0)


def test_invert_matches_root_finding(phi_e):
    for b in np.linspace(1.001, E, 37):
        root = brentq(lambda y: eval_phi(phi_e, y) - b, 0.5, 1.0, xtol=1e-15)
        assert invert_phi(phi_e, b) == pytest.approx(root, abs=1e-12)


# --- properties ----------------------------------------------------------

bounds_st = st.builds(
    lambda L, lt: Bounds(L, L * math.exp(lt)),
    st.floats(0.01, 100), st.floats(0.0, 6.0),
)


@settings(max_examples=200, deadline=None)
@given(bounds_st, st.floats(0, 1), st.floats(0, 1))
def test_monotone(bounds, y1, y2):
    phi = make_phi_star(bounds)
    lo, hi = sorted((y1, y2))
    assert eval_phi(phi, lo) <= eval_phi(phi, hi)


@settings(max_examples=300, deadline=None)
@given(bounds_st, st.floats(0, 1))
def test_inverse_consistency(bounds, s):
    phi = make_phi_star(bounds)
    b = bounds.L + s * (phi.top - bounds.L)
    if b <= bounds.L:
        assert invert_phi(phi, b) == phi.omega
    else:
        assert eval_phi(phi, invert_phi(phi, b)) == pytest.approx(b, rel=1e-10)


# --- sufficiency ---------------------------------------------------------


@pytest.mark.parametrize("log_theta", [0.3, 1.0, 2.0, 4.0])
def test_phi_star_passes_at_optimal_alpha(log_theta):
    b = Bounds(1, math.exp(log_theta))
    rep = check_sufficiency(make_phi_star(b), min_alpha_feasible(b), grid_n=10_000)
    assert rep.passed
    assert abs(rep.worst_margin) < 1e-7


def test_phi_star_fails_below_optimal_alpha(bounds_e, phi_e):
    rep = check_sufficiency(phi_e, 2.0 - 0.05, grid_n=10_000)
    assert not rep.passed and not rep.differential_ok


def test_constant_threshold_degenerate():
    b = Bounds(2, 2)
    phi = ThresholdFunction(b, 1.0, 1.0)
    assert check_sufficiency(phi, 1.0, 10).passed


def test_flat_threshold_cannot_cover_wider_range(bounds_e):
    phi = ThresholdFunction(bounds_e, 1.0, 2.0)
    rep = check_sufficiency(phi, 2.0, 10)
    assert not rep.passed and not rep.end_ok


def test_grid_n_validated(phi_e):
    with pytest.raises(ValueError):
        check_sufficiency(phi_e, 2.0, grid_n=1)


def test_downward_perturbation_fails(bounds_e, phi_e):
    """A dip below the optimum on a subinterval cannot keep phi' <= alpha*phi."""
    y = np.linspace(0.5, 1.0, 2001)
    v = eval_phi(phi_e, y) * (1 - 0.02 * np.exp(-(((y - 0.75) / 0.04) ** 2)))
    dipped = ThresholdFunction(bounds_e, 0.5, 2.0, knots_y=y, knots_phi=v)
    assert not check_sufficiency(dipped, 2.0, 2001).passed


def test_tabulated_optimum_agrees_with_phi_star(bounds_e, phi_e):
    tab = tabulate(phi_e, 10_001)
    rep = check_sufficiency(tab, 2.0, 10_001)
    assert rep.passed
    y = np.linspace(0, 1, 5001)
    assert np.max(np.abs(eval_phi(tab, y) - eval_phi(phi_e, y))) < 1e-7


# --- Gronwall envelope ---------------------------------------------------


def test_envelope_examples(bounds_e, phi_e):
    assert gronwall_envelope(bounds_e, 2.0, 0.5, 0.5) == 1.0
    assert gronwall_envelope(bounds_e, 2.0, 0.5, 1.0) == pytest.approx(E, rel=1e-15)
    y = np.linspace(0.5, 1, 1001)
    np.testing.assert_allclose(gronwall_envelope(bounds_e, 2.0, 0.5, y), eval_phi(phi_e, y), rtol=1e-14)


def test_envelope_domain_errors(bounds_e):
    with pytest.raises(ValueError):
        gronwall_envelope(bounds_e, 0.5, 1.0, 1.0)
    with pytest.raises(ValueError):
        gronwall_envelope(bounds_e, 2.0, 0.3, 0.6)
    with pytest.raises(ValueError):
        gronwall_envelope(bounds_e, 2.0, 0.5, 0.4)


@settings(max_examples=60, deadline=None)
@given(
    st.floats(0.0, 3.0),
    st.lists(st.floats(0.05, 1.0), min_size=1, max_size=6),
    st.floats(0.0, 0.5),
)
def test_passing_thresholds_stay_under_envelope(log_theta, rate_fracs, omega_extra):
    """Build phi = L exp(int a(t) dt) with a(t) <= alpha piecewise; whenever it
    passes the check it must sit under the Gronwall bound."""
    b = Bounds(1.0, math.exp(log_theta))
    alpha = min_alpha_feasible(b) + 0.5
    omega = min(1 / alpha + omega_extra, 0.95)
    y = np.linspace(omega, 1, 2001)
    pieces = np.array_split(np.arange(y.size - 1), len(rate_fracs))
    slopes = np.empty(y.size - 1)
    for frac, idx in zip(rate_fracs, pieces):
        slopes[idx] = frac * alpha
    logv = np.concatenate(([0.0], np.cumsum(slopes * np.diff(y))))
    phi = ThresholdFunction(b, omega, alpha, knots_y=y, knots_phi=np.exp(logv))
    rep = check_sufficiency(phi, alpha, 2001)
    if rep.passed:
        env = gronwall_envelope(b, alpha, omega, y)
        assert np.all(eval_phi(phi, y) <= env + 1e-8)


# --- infimum -------------------------------------------------------------


@pytest.mark.parametrize("U, expected", [(E, 2.0), (1.0, 1.0), (E**4, 5.0)])
def test_min_alpha(U, expected):
    assert min_alpha_feasible(Bounds(1, U)) == pytest.approx(expected, abs=1e-14)


@pytest.mark.parametrize("log_theta", [0.5, 1.0, 2.0, 4.0])
def test_min_alpha_is_infimum(log_theta):
    b = Bounds(1, math.exp(log_theta))
    a = min_alpha_feasible(b)
    above = check_sufficiency(envelope_threshold(b, a + 1e-3), a + 1e-3, 10_000)
    below = check_sufficiency(envelope_threshold(b, a - 1e-3), a - 1e-3, 10_000)
    assert above.passed
    assert not below.passed and not below.end_ok


def test_envelope_with_later_breakpoint_cannot_reach_U(bounds_e):
    # pushing omega right of 1/alpha only lowers phi(1)
    a = 2.0 - 1e-3
    assert not check_sufficiency(envelope_threshold(bounds_e, a, 0.6), a, 10_000).passed


# --- import / export -----------------------------------------------------


def test_json_round_trip(bounds_e, phi_e):
    buf = io.StringIO()
    save_threshold(phi_e, buf, n=501)
    buf.seek(0)
    tab = load_threshold(buf, bounds_e)
    assert tab.kind == "tabulated"
    assert tab.omega == pytest.approx(0.5)
    y = np.linspace(0, 1, 301)
    np.testing.assert_allclose(eval_phi(tab, y), eval_phi(phi_e, y), rtol=2e-5)


def test_pairs_validation(bounds_e):
    with pytest.raises(ValueError):
        threshold_from_pairs([[0, 1], [0.5, 1], [0.4, 2], [1, E]], bounds_e)
    with pytest.raises(ValueError):
        threshold_from_pairs([[0, 1.5], [1, E]], bounds_e)
    flat = threshold_from_pairs([[0, 1], [1, 1]], Bounds(1, 1))
    assert flat.kind == "flat"
