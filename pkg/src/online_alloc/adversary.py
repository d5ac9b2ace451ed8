"""Worst-case instance families and the adaptive lower-bound game.

The OTP worst case is a rate schedule creeping up from L toward U. Against
it the optimal threshold trades a reference amount at each new high;
the game presents the same schedule to any opponent and stops the moment
the opponent's cumulative spend drops below the reference.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .engine import CAPACITY_TOL, OnlineAlgorithm, run
from .model import (
    DEFAULT_INFINITESIMAL_THRESHOLD,
    Bounds,
    OkpInstance,
    OtpInstance,
)
from .threshold import make_phi_star

SCHEDULES = ("geometric", "arithmetic")
DISTRIBUTIONS = ("uniform-rate", "log-uniform-rate", "spike", "monotone")
GAME_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class WorstCaseOtp:
    bounds: Bounds
    rates: np.ndarray
    reference: np.ndarray  # spends of the optimal threshold at each rate
    increments: np.ndarray  # rate steps between consecutive arrivals
    schedule: str

    @property
    def k(self) -> int:
        return self.rates.size

    def instance(self) -> OtpInstance:
        return OtpInstance(self.bounds, self.rates)


def reference_spends(bounds: Bounds, rates: np.ndarray) -> np.ndarray:
    """Amounts the optimal threshold trades along a strictly increasing schedule
    starting at L: ``1/(ln θ+1)`` first, then ``ln(b_i/b_{i-1})/(ln θ+1)``."""
    denom = bounds.log_theta + 1.0
    ref = np.empty(rates.size)
    ref[0] = 1.0 / denom
    ref[1:] = np.log(rates[1:] / rates[:-1]) / denom
    return ref


def schedule_rates(bounds: Bounds, k: int, schedule: str = "geometric",
                   resolution: int | None = None) -> np.ndarray:
    """First ``k`` points of a rate ladder from L to U in ``resolution`` steps.

    ``resolution`` defaults to ``k - 1`` so the ladder ends at U. Ladders with
    a shared resolution are prefixes of one another.
    """
    if k < 1:
        raise ValueError("k >= 1 required")
    if schedule not in SCHEDULES:
        raise ValueError(f"unknown schedule {schedule!r}")
    if k == 1:
        return np.array([bounds.L])
    if bounds.theta == 1:
        raise ValueError("no strictly increasing schedule exists when L == U")
    m = k - 1 if resolution is None else int(resolution)
    if m < k - 1:
        raise ValueError("resolution too coarse for k points")
    steps = np.arange(k) / m
    if schedule == "geometric":
        rates = bounds.L * np.exp(steps * bounds.log_theta)
    else:
        rates = bounds.L + steps * (bounds.U - bounds.L)
    rates[0] = bounds.L
    if m == k - 1:
        rates[-1] = bounds.U
    return np.minimum(rates, bounds.U)


def gen_worst_case_otp(bounds: Bounds, k: int, schedule: str = "geometric",
                       resolution: int | None = None) -> WorstCaseOtp:
    rates = schedule_rates(bounds, k, schedule, resolution)
    rates.setflags(write=False)
    ref = reference_spends(bounds, rates)
    ref.setflags(write=False)
    return WorstCaseOtp(bounds, rates, ref, np.diff(rates), schedule)


def eval_alg_on_worst_case(wc: WorstCaseOtp) -> float:
    """Value earned by the optimal threshold on the schedule (an engine run)."""
    return run(wc.instance(), make_phi_star(wc.bounds)).value


def ratio_functional_r(bounds: Bounds, rates) -> float:
    """``(b_1 ln(b_1 e / L) + sum_{i>=2} b_i ln(b_i / b_{i-1})) / b_k``.

    On a strictly increasing sequence the optimal threshold's OPT/ALG equals
    ``(ln θ+1) / r``.
    """
    b = np.asarray(rates, dtype=float).reshape(-1)
    if b.size < 1:
        raise ValueError("need at least one rate")
    if np.any(np.diff(b) <= 0):
        raise ValueError("rates must be strictly increasing")
    if b[0] < bounds.L or b[-1] > bounds.U:
        raise ValueError("rates must lie within the bounds")
    head = b[0] * (math.log(b[0] / bounds.L) + 1.0)
    tail = float(np.sum(b[1:] * np.log(b[1:] / b[:-1])))
    return (head + tail) / b[-1]


@dataclass(frozen=True, eq=False)
class WorstCaseOkp:
    """Blocks of identical small items at increasing ratios, each block alone
    able to fill the knapsack."""

    bounds: Bounds
    top_ratio: float
    item_weight: float
    levels: np.ndarray
    block_size: int
    infinitesimal_threshold: float = DEFAULT_INFINITESIMAL_THRESHOLD

    @property
    def infinitesimal(self) -> bool:
        return self.item_weight <= self.infinitesimal_threshold

    def instance(self) -> OkpInstance:
        n = self.levels.size * self.block_size
        return OkpInstance(
            self.bounds,
            np.repeat(self.levels, self.block_size),
            np.full(n, self.item_weight),
            self.infinitesimal_threshold,
        )


def gen_worst_case_okp(
    bounds: Bounds,
    top_ratio: float,
    item_weight: float,
    levels: int = 100,
    infinitesimal_threshold: float = DEFAULT_INFINITESIMAL_THRESHOLD,
) -> WorstCaseOkp:
    """Knapsack mirror of the OTP schedule, truncated at ``top_ratio``.

    ``levels`` is the size of the full geometric ladder from L to U; the
    ladder is cut at ``top_ratio``, which becomes the last level if it is not
    already on the ladder. Each level holds ``ceil(1/item_weight)`` items.
    A weight above ``infinitesimal_threshold`` is allowed but flagged.
    """
    if not 0 < item_weight <= 1:
        raise ValueError(f"item weight {item_weight} outside (0, 1]")
    if not bounds.L <= top_ratio <= bounds.U:
        raise ValueError("top ratio outside the bounds")
    if bounds.theta == 1:
        ladder = np.array([bounds.L])
    else:
        ladder = schedule_rates(bounds, levels, "geometric")
    cut = ladder[ladder <= top_ratio * (1 + 1e-12)]
    if cut[-1] < top_ratio * (1 - 1e-12):
        cut = np.append(cut, top_ratio)
    block = math.ceil(1.0 / item_weight - 1e-9)
    cut.setflags(write=False)
    return WorstCaseOkp(bounds, float(top_ratio), float(item_weight), cut, block,
                        infinitesimal_threshold)


# --- lower-bound game ------------------------------------------------------


@dataclass(frozen=True)
class GameRound:
    rate: float
    spend: float
    reference: float
    slack: float


@dataclass(frozen=True, eq=False)
class AdversaryTranscript:
    opponent: str
    bounds: Bounds
    rounds: tuple[GameRound, ...]
    stop_round: int  # 1-based
    stop_reason: str  # "underspend-detected" | "schedule-exhausted"
    opt_value: float
    opponent_value: float
    forced_ratio: float

    def to_dict(self, include_rounds: bool = True) -> dict:
        out = {
            "opponent": self.opponent,
            "L": self.bounds.L,
            "U": self.bounds.U,
            "stop_round": self.stop_round,
            "stop_reason": self.stop_reason,
            "opt_value": self.opt_value,
            "opponent_value": self.opponent_value,
            "forced_ratio": "inf" if math.isinf(self.forced_ratio) else self.forced_ratio,
        }
        if include_rounds:
            out["rounds"] = [r.__dict__ for r in self.rounds]
        return out

    def to_json(self, include_rounds: bool = True) -> str:
        return json.dumps(self.to_dict(include_rounds))

    def summary(self) -> str:
        ratio = "inf" if math.isinf(self.forced_ratio) else f"{self.forced_ratio:.6f}"
        return f"{self.opponent}: {self.stop_reason} at round {self.stop_round}, forced ratio {ratio}"


class BudgetViolation(RuntimeError):
    pass


def play_lower_bound_game(
    opponent: OnlineAlgorithm,
    bounds: Bounds,
    k_max: int,
    schedule: str = "geometric",
    tol: float = GAME_TOL,
) -> AdversaryTranscript:
    """Present the worst-case ladder to ``opponent`` one rate at a time.

    The sequence ends at the first round where the opponent's cumulative
    spend falls more than ``tol`` below the reference, or after ``k_max``
    rounds. OPT is the last rate presented.
    """
    wc = gen_worst_case_otp(bounds, k_max, schedule)
    rates, ref = wc.rates.tolist(), wc.reference.tolist()
    state = opponent.initial_state(bounds)
    rounds = []
    spent = value = f = 0.0
    reason = "schedule-exhausted"
    for i, (b, xr) in enumerate(zip(rates, ref)):
        x, state = opponent.step(state, b, None)
        x = float(x)
        if x < 0 or spent + x > 1 + CAPACITY_TOL:
            raise BudgetViolation(
                f"{opponent.name} spent {x!r} at round {i + 1} with {1 - spent!r} left"
            )
        spent += x
        value += b * x
        f += x - xr
        rounds.append(GameRound(b, x, xr, f))
        if f < -tol:
            reason = "underspend-detected"
            break
    opt = rounds[-1].rate
    ratio = opt / value if value > 0 else math.inf
    return AdversaryTranscript(getattr(opponent, "name", type(opponent).__name__), bounds,
                               tuple(rounds), len(rounds), reason, opt, value, ratio)


# --- random corpus ---------------------------------------------------------


def gen_random_instance(
    bounds: Bounds,
    n: int,
    distribution: str = "uniform-rate",
    seed: int | None = None,
    problem: str = "otp",
    max_weight: float | None = None,
    infinitesimal_threshold: float = DEFAULT_INFINITESIMAL_THRESHOLD,
):
    """Seeded non-adversarial instance.

    ``spike`` puts one arrival at U and the rest at L; ``monotone`` sorts
    uniform draws. OKP weights are uniform on ``(0, max_weight]`` with
    ``max_weight`` defaulting to the infinitesimality threshold.
    """
    if n < 1:
        raise ValueError("n >= 1 required")
    rng = np.random.default_rng(seed)
    L, U = bounds.L, bounds.U
    if distribution == "uniform-rate":
        rates = rng.uniform(L, U, n)
    elif distribution == "log-uniform-rate":
        rates = L * np.exp(rng.uniform(0.0, bounds.log_theta, n))
    elif distribution == "spike":
        rates = np.full(n, L)
        rates[rng.integers(n)] = U
    elif distribution == "monotone":
        rates = np.sort(rng.uniform(L, U, n))
    else:
        raise ValueError(f"unknown distribution {distribution!r}")
    rates = np.clip(rates, L, U)
    if problem == "otp":
        return OtpInstance(bounds, rates)
    if problem != "okp":
        raise ValueError(f"unknown problem {problem!r}")
    wmax = infinitesimal_threshold if max_weight is None else max_weight
    weights = (1.0 - rng.random(n)) * wmax
    return OkpInstance(bounds, rates, weights, infinitesimal_threshold)
