import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from online_alloc.adversary import (
    BudgetViolation,
    eval_alg_on_worst_case,
    gen_random_instance,
    gen_worst_case_okp,
    gen_worst_case_otp,
    play_lower_bound_game,
    ratio_functional_r,
    schedule_rates,
)
from online_alloc.engine import (
    GreedyAbove,
    NeverTrade,
    OnlineAlgorithm,
    SpendAllAtFirst,
    UniformSplit,
    make_baseline,
    run,
    run_baseline,
)
from online_alloc.model import Bounds, OtpInstance
from online_alloc.oracle import opt_okp_fractional, opt_otp
from online_alloc.threshold import make_phi_star

E = math.e


def riemann_value(theta: float, k: int) -> float:
    """Closed-form value of the optimal threshold on the k-rung geometric ladder."""
    a = math.log(theta) + 1
    if k == 1:
        return 1 / a
    m = k - 1
    q = theta ** (1 / m)
    return 1 / a + (math.log(theta) / (a * m)) * q * (theta - 1) / (q - 1)


# --- OTP worst case ------------------------------------------------------


def test_k1(bounds_e):
    wc = gen_worst_case_otp(bounds_e, 1)
    assert wc.rates.tolist() == [1.0]
    assert wc.reference.tolist() == [0.5]


def test_k2(bounds_e):
    wc = gen_worst_case_otp(bounds_e, 2)
    assert wc.rates == pytest.approx([1.0, E])
    assert wc.reference == pytest.approx([0.5, 0.5])
    assert wc.increments == pytest.approx([E - 1])


def test_k1001_reference(bounds_e):
    wc = gen_worst_case_otp(bounds_e, 1001)
    assert wc.reference.sum() == pytest.approx(1.0, abs=1e-12)
    assert wc.reference[0] == pytest.approx(0.5)
    assert np.allclose(wc.reference[1:], 1 / 2000, rtol=1e-9)
    assert wc.rates[-1] == E


def test_ladder_monotone_and_bounded():
    b = Bounds(2.0, 50.0)
    for sched in ("geometric", "arithmetic"):
        r = schedule_rates(b, 300, sched)
        assert r[0] == 2.0 and r[-1] == 50.0
        assert np.all(np.diff(r) > 0)


def test_prefix_property(bounds_e):
    long = schedule_rates(bounds_e, 500, resolution=999)
    short = schedule_rates(bounds_e, 200, resolution=999)
    assert np.array_equal(long[:200], short)


def test_degenerate_bounds():
    b = Bounds(3.0, 3.0)
    assert schedule_rates(b, 1).tolist() == [3.0]
    with pytest.raises(ValueError):
        schedule_rates(b, 5)


def test_eval_k1(bounds_e):
    assert eval_alg_on_worst_case(gen_worst_case_otp(bounds_e, 1)) == pytest.approx(0.5, abs=1e-12)


def test_eval_k2(bounds_e):
    v = eval_alg_on_worst_case(gen_worst_case_otp(bounds_e, 2))
    assert v == pytest.approx((1 + E) / 2, abs=1e-12)
    assert E / v == pytest.approx(1.4621, abs=1e-4)


def test_eval_k10000(bounds_e):
    wc = gen_worst_case_otp(bounds_e, 10_000)
    v = eval_alg_on_worst_case(wc)
    assert v == pytest.approx(riemann_value(E, 10_000), rel=1e-10)
    assert abs(v - E / 2) <= 2e-4
    assert E / v == pytest.approx(2.0, abs=1e-3)


@pytest.mark.parametrize("theta", [1.5, E, 10.0, E**4])
@pytest.mark.parametrize("k", [1, 2, 7, 300])
def test_eval_matches_closed_form(theta, k):
    wc = gen_worst_case_otp(Bounds(1.0, theta), k)
    assert eval_alg_on_worst_case(wc) == pytest.approx(riemann_value(theta, k), rel=1e-10)


@pytest.mark.parametrize("theta", [E, 20.0])
def test_ratio_approaches_alpha_star(theta):
    b = Bounds(1.0, theta)
    a = math.log(theta) + 1
    ratios = [b.U / eval_alg_on_worst_case(gen_worst_case_otp(b, k)) for k in (10, 100, 1000, 10_000)]
    assert all(r1 < r2 for r1, r2 in zip(ratios, ratios[1:]))
    assert a - ratios[-1] < 1e-3 * a


# --- r_k -----------------------------------------------------------------


def test_r_single_L(bounds_e):
    assert ratio_functional_r(bounds_e, [1.0]) == pytest.approx(1.0)


def test_r_two_points(bounds_e):
    # (1 + e*1) / e
    assert ratio_functional_r(bounds_e, [1.0, E]) == pytest.approx((1 + E) / E)


def test_r_rejects_non_increasing(bounds_e):
    with pytest.raises(ValueError):
        ratio_functional_r(bounds_e, [1.0, 1.0])
    with pytest.raises(ValueError):
        ratio_functional_r(bounds_e, [2.0, 1.5])


@settings(max_examples=300, deadline=None)
@given(st.floats(0.05, 5.0), st.lists(st.floats(0, 1), min_size=1, max_size=20, unique=True))
def test_r_matches_engine_ratio(log_theta, fracs):
    b = Bounds(1.0, math.exp(log_theta))
    rates = np.unique(b.L * np.exp(np.asarray(fracs) * log_theta))
    rates = rates[np.concatenate(([True], np.diff(rates) > 0))]
    r = ratio_functional_r(b, rates)
    assert r >= 1 - 1e-12
    a = log_theta + 1
    alg = run(OtpInstance(b, rates), make_phi_star(b)).value
    assert a / r == pytest.approx(rates[-1] / alg, abs=1e-9)
    assert a / r <= a + 1e-12


# --- OKP worst case ------------------------------------------------------


def _okp_ratio(wc):
    inst = wc.instance()
    tr = run(inst, make_phi_star(wc.bounds))
    return opt_okp_fractional(inst).value / tr.value


def test_okp_top_L(bounds_e):
    wc = gen_worst_case_okp(bounds_e, 1.0, 1e-3)
    assert wc.levels.tolist() == [1.0]
    assert _okp_ratio(wc) == pytest.approx(2.0, abs=1e-2)


def test_okp_top_U(bounds_e):
    wc = gen_worst_case_okp(bounds_e, E, 1e-3)
    assert wc.infinitesimal
    assert wc.levels[-1] == E
    r = _okp_ratio(wc)
    assert abs(r - 2.0) <= 1e-2 and r <= 2.0 + 1e-9


def test_okp_top_off_ladder(bounds_e):
    wc = gen_worst_case_okp(bounds_e, 2.0, 1e-3, levels=11)
    assert wc.levels[-1] == 2.0
    assert np.all(wc.levels[:-1] < 2.0)


def test_okp_coarse_weight_flagged(bounds_e):
    wc = gen_worst_case_okp(bounds_e, E, 0.5)
    assert not wc.infinitesimal
    assert wc.block_size == 2
    assert not wc.instance().is_infinitesimal


@pytest.mark.parametrize("w", [0.0, 1.5, -0.1])
def test_okp_bad_weight(bounds_e, w):
    with pytest.raises(ValueError):
        gen_worst_case_okp(bounds_e, E, w)


def test_okp_blocks_fill_knapsack(bounds_e):
    wc = gen_worst_case_okp(bounds_e, 2.0, 0.003)
    assert wc.block_size * wc.item_weight >= 1.0


# --- game ----------------------------------------------------------------


def test_game_phi_star(bounds_e):
    t = play_lower_bound_game(make_baseline("phi-star", bounds_e), bounds_e, 10_000)
    assert t.stop_reason == "schedule-exhausted"
    assert t.stop_round == 10_000
    assert abs(t.forced_ratio - 2.0) <= 1e-3


def test_game_spend_all(bounds_e):
    t = play_lower_bound_game(SpendAllAtFirst(), bounds_e, 10_000)
    # never underspends, so the ladder runs to U while the budget sat at L
    assert t.stop_reason == "schedule-exhausted"
    assert t.forced_ratio == pytest.approx(E)


def test_game_never_trade(bounds_e):
    t = play_lower_bound_game(NeverTrade(), bounds_e, 10_000)
    assert t.stop_round == 1
    assert math.isinf(t.forced_ratio)
    assert json.loads(t.to_json())["forced_ratio"] == "inf"
    assert "inf" in t.summary()


@pytest.mark.parametrize(
    "opp", [SpendAllAtFirst(), UniformSplit(10), UniformSplit(1000), GreedyAbove(1.5), GreedyAbove(2.5)]
)
@pytest.mark.parametrize("theta", [E, 10.0])
def test_game_forces_alpha_star(opp, theta):
    b = Bounds(1.0, theta)
    t = play_lower_bound_game(opp, b, 10_000)
    assert t.forced_ratio >= (math.log(theta) + 1) * (1 - 1e-3)


def test_game_transcript_consistent(bounds_e):
    t = play_lower_bound_game(UniformSplit(50), bounds_e, 2000)
    spends = np.array([r.spend for r in t.rounds])
    rates = np.array([r.rate for r in t.rounds])
    assert t.opponent_value == pytest.approx(float(spends @ rates))
    assert t.opt_value == rates[-1]
    slack = np.cumsum(spends - np.array([r.reference for r in t.rounds]))
    assert np.allclose(slack, [r.slack for r in t.rounds])


class Overspender(OnlineAlgorithm):
    name = "overspender"

    def step(self, state, b, w):
        return 0.8, state


def test_game_rejects_overspend(bounds_e):
    with pytest.raises(BudgetViolation):
        play_lower_bound_game(Overspender(), bounds_e, 100)


# --- random corpus -------------------------------------------------------


@pytest.mark.parametrize("dist", ["uniform-rate", "log-uniform-rate", "spike", "monotone"])
def test_random_deterministic_and_bounded(bounds_e, dist):
    a = gen_random_instance(bounds_e, 500, dist, seed=11)
    b = gen_random_instance(bounds_e, 500, dist, seed=11)
    assert a == b
    assert np.all((a.rates >= 1.0) & (a.rates <= E))


def test_random_shapes(bounds_e):
    spike = gen_random_instance(bounds_e, 100, "spike", seed=1)
    assert (spike.rates == E).sum() == 1 and (spike.rates == 1.0).sum() == 99
    mono = gen_random_instance(bounds_e, 100, "monotone", seed=1)
    assert np.all(np.diff(mono.rates) >= 0)
    okp = gen_random_instance(bounds_e, 100, "uniform-rate", seed=1, problem="okp", max_weight=1e-4)
    assert np.all((okp.weights > 0) & (okp.weights <= 1e-4))


def test_random_bad_args(bounds_e):
    with pytest.raises(ValueError):
        gen_random_instance(bounds_e, 10, "zipf")
    with pytest.raises(ValueError):
        gen_random_instance(bounds_e, 0)
    with pytest.raises(ValueError):
        gen_random_instance(bounds_e, 10, problem="lp")


def test_r_near_diagonal(bounds_e):
    assert ratio_functional_r(bounds_e, [1.0, 1.0 + 1e-6]) == pytest.approx(1.0, abs=1e-5)


def test_r_fine_ladder(bounds_e):
    rates = gen_worst_case_otp(bounds_e, 10_000).rates
    assert ratio_functional_r(bounds_e, rates) == pytest.approx(1.0, abs=1e-3)


def test_reference_sum_below_one():
    b = Bounds(1.0, 10.0)
    for k in (2, 50, 400):
        wc = gen_worst_case_otp(b, k, resolution=999)
        top = wc.rates[-1]
        assert wc.reference.sum() == pytest.approx((1 + math.log(top)) / (math.log(10) + 1))
        assert wc.reference.sum() <= 1 + 1e-12


@pytest.mark.parametrize("name", ["never-trade", "spend-all-at-first", "uniform-split",
                                  "greedy-above", "phi-star"])
def test_game_never_overstates(bounds_e, name):
    opp = make_baseline(name, bounds_e)
    t = play_lower_bound_game(opp, bounds_e, 3000)
    rates = np.array([r.rate for r in t.rounds])
    replay = run_baseline(OtpInstance(bounds_e, rates), make_baseline(name, bounds_e))
    opt = opt_otp(OtpInstance(bounds_e, rates)).value
    measured = opt / replay.value if replay.value > 0 else math.inf
    assert t.forced_ratio >= measured * (1 - 1e-12)
    if t.stop_reason == "underspend-detected":
        slacks = [r.slack for r in t.rounds]
        assert slacks[-1] < 0 and all(s >= -1e-9 for s in slacks[:-1])
