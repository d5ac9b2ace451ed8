"""The unified threshold algorithm and a driver for arbitrary online algorithms.

For one-way trading the algorithm moves utilization up to ``phi^{-1}(b)``
whenever the rate ``b`` beats the current threshold; for the knapsack it
accepts an item whole when its ratio beats the threshold and it still fits.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Any

import numpy as np

from .model import Bounds, Instance, OkpInstance, OtpInstance, Trace
from .threshold import TIE_RTOL, ThresholdFunction, make_phi_star

CLAMP_SILENT = 1e-12
CAPACITY_TOL = 1e-12


class EngineError(RuntimeError):
    pass


@dataclass(frozen=True)
class AlgorithmState:
    utilization: float
    threshold: ThresholdFunction
    value: float = 0.0

    def __post_init__(self):
        if not -CLAMP_SILENT <= self.utilization <= 1 + CAPACITY_TOL:
            raise ValueError(f"utilization {self.utilization} outside [0, 1]")


def initial_state(threshold: ThresholdFunction) -> AlgorithmState:
    return AlgorithmState(0.0, threshold, 0.0)


def _otp_spend(phi, inv, y: float, b: float) -> float:
    if b < phi(y):
        return 0.0
    x = inv(b) - y
    if x < 0:
        # b == phi(y) on the increasing segment, up to round-off
        return 0.0
    room = 1.0 - y
    if x > room:
        if x - room > CLAMP_SILENT:
            raise EngineError(f"spend {x!r} exceeds remaining budget {room!r}")
        x = room
    return x


def _okp_accept(phi, y: float, b: float, w: float) -> bool:
    return b >= phi(y) and y + w <= 1.0 + CAPACITY_TOL


def otp_step(state: AlgorithmState, b: float) -> tuple[float, AlgorithmState]:
    phi, inv = state.threshold.scalar_ops()
    x = _otp_spend(phi, inv, state.utilization, float(b))
    return x, replace(state, utilization=state.utilization + x, value=state.value + b * x)


def okp_step(state: AlgorithmState, b: float, w: float) -> tuple[float, AlgorithmState]:
    phi, _ = state.threshold.scalar_ops()
    x = float(w) if _okp_accept(phi, state.utilization, float(b), float(w)) else 0.0
    return x, replace(state, utilization=state.utilization + x, value=state.value + b * x)


def _check_compatible(instance: Instance, threshold: ThresholdFunction):
    if instance.bounds != threshold.bounds:
        raise ValueError(
            f"bounds mismatch: instance {instance.bounds} vs threshold {threshold.bounds}"
        )
    top = threshold.top
    if isinstance(instance, OtpInstance) and instance.rates.max() > top * (1 + TIE_RTOL):
        raise ValueError(f"threshold tops out at {top} below the largest rate; phi(1) >= U is required")


def _trace(problem, rates, weights, x, y, P, clipped=()) -> Trace:
    arrays = [np.asarray(a, dtype=float) for a in (x, y, P)]
    for a in arrays:
        a.setflags(write=False)
    return Trace(problem, rates, weights, *arrays, clipped=tuple(clipped))


def run(instance: Instance, threshold: ThresholdFunction) -> Trace:
    """Run the threshold algorithm over every arrival of ``instance``."""
    _check_compatible(instance, threshold)
    phi, inv = threshold.scalar_ops()
    rates = instance.rates.tolist()
    n = len(rates)
    xs = [0.0] * n
    ys = [0.0] * n
    Ps = [0.0] * n
    y = P = 0.0
    if isinstance(instance, OkpInstance):
        weights = instance.weights.tolist()
        for i in range(n):
            b, w = rates[i], weights[i]
            if b >= phi(y) and y + w <= 1.0 + CAPACITY_TOL:
                y += w
                P += b * w
                xs[i] = w
            ys[i] = y
            Ps[i] = P
        return _trace("okp", instance.ratios, instance.weights, xs, ys, Ps)
    for i in range(n):
        b = rates[i]
        x = _otp_spend(phi, inv, y, b)
        if x:
            y += x
            P += b * x
            xs[i] = x
        ys[i] = y
        Ps[i] = P
    return _trace("otp", instance.rates, None, xs, ys, Ps)


# --- baselines -------------------------------------------------------------


class OnlineAlgorithm:
    """Step contract for algorithms driven by :func:`run_baseline` and the adversary.

    ``initial_state`` returns the algorithm's private state for a fresh
    run; ``step`` maps (state, rate, weight-or-None) to (spend, new state).
    The driver tracks the budget; algorithms need not.
    """

    name = "online-algorithm"

    def initial_state(self, bounds: Bounds) -> Any:
        return None

    def step(self, state: Any, b: float, w: float | None) -> tuple[float, Any]:
        raise NotImplementedError


class NeverTrade(OnlineAlgorithm):
    name = "never-trade"

    def step(self, state, b, w):
        return 0.0, state


class SpendAllAtFirst(OnlineAlgorithm):
    """OTP: whole budget on the first arrival. OKP: accept every item that fits."""

    name = "spend-all-at-first"

    def initial_state(self, bounds):
        return 0.0

    def step(self, spent, b, w):
        if w is None:
            x = 1.0 - spent
        else:
            x = w if spent + w <= 1.0 + CAPACITY_TOL else 0.0
        return x, spent + x


class UniformSplit(OnlineAlgorithm):
    """Spend ``1/k`` on each of the first ``k`` arrivals (OKP: accept while
    utilization stays below the paced budget ``seen/k``)."""

    name = "uniform-split"

    def __init__(self, k: int):
        if k < 1:
            raise ValueError("k >= 1 required")
        self.k = k

    def initial_state(self, bounds):
        return (0, 0.0)

    def step(self, state, b, w):
        seen, spent = state
        seen += 1
        if w is None:
            x = 1.0 / self.k if seen <= self.k else 0.0
            x = min(x, 1.0 - spent)
        else:
            x = w if spent + w <= min(seen / self.k, 1.0) + CAPACITY_TOL else 0.0
        return x, (seen, spent + x)


class GreedyAbove(OnlineAlgorithm):
    """Spend the whole remaining budget (OKP: accept) once the rate reaches ``c``."""

    name = "greedy-above"

    def __init__(self, c: float):
        self.c = float(c)

    def initial_state(self, bounds):
        return 0.0

    def step(self, spent, b, w):
        if b < self.c:
            return 0.0, spent
        if w is None:
            x = 1.0 - spent
        else:
            x = w if spent + w <= 1.0 + CAPACITY_TOL else 0.0
        return x, spent + x


class ThresholdAlgorithm(OnlineAlgorithm):
    """The threshold algorithm exposed through the baseline step contract."""

    def __init__(self, threshold: ThresholdFunction, name: str = "threshold"):
        self.threshold = threshold
        self.name = name

    def initial_state(self, bounds):
        return initial_state(self.threshold)

    def step(self, state, b, w):
        if w is None:
            return otp_step(state, b)
        return okp_step(state, b, w)


def make_baseline(name: str, bounds: Bounds, param: float | None = None) -> OnlineAlgorithm:
    """Look up a shipped opponent by name; ``phi-star`` is the optimal threshold."""
    if name == "never-trade":
        return NeverTrade()
    if name == "spend-all-at-first":
        return SpendAllAtFirst()
    if name == "uniform-split":
        return UniformSplit(int(param) if param is not None else 10)
    if name == "greedy-above":
        return GreedyAbove(param if param is not None else (bounds.L + bounds.U) / 2)
    if name in ("phi-star", "threshold"):
        return ThresholdAlgorithm(make_phi_star(bounds), name="phi-star")
    raise KeyError(f"unknown opponent {name!r}")


BASELINE_NAMES = ("never-trade", "spend-all-at-first", "uniform-split", "greedy-above", "phi-star")


def run_baseline(instance: Instance, algorithm: OnlineAlgorithm) -> Trace:
    """Drive ``algorithm`` over ``instance`` and record its decisions.

    Spends beyond the remaining budget are clipped and their indices
    recorded in ``Trace.clipped``; a negative spend is an error. For OKP
    a spend must be 0 or the item weight.
    """
    okp = isinstance(instance, OkpInstance)
    rates = instance.rates.tolist()
    weights = instance.weights.tolist() if okp else [None] * len(rates)
    state = algorithm.initial_state(instance.bounds)
    xs, ys, Ps, clipped = [], [], [], []
    y = P = 0.0
    for i, (b, w) in enumerate(zip(rates, weights)):
        x, state = algorithm.step(state, b, w)
        x = float(x)
        if x < 0:
            raise EngineError(f"{algorithm.name} returned negative spend {x!r} at arrival {i}")
        if okp and x not in (0.0, w):
            raise EngineError(f"{algorithm.name} returned partial item {x!r} at arrival {i}")
        room = 1.0 - y
        if x > room + (CAPACITY_TOL if okp else CLAMP_SILENT):
            clipped.append(i)
            x = 0.0 if okp else max(room, 0.0)
        y += x
        P += b * x
        xs.append(x)
        ys.append(y)
        Ps.append(P)
    return _trace(instance.problem, instance.rates, instance.weights if okp else None,
                  xs, ys, Ps, clipped)
