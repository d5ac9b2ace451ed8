"""Offline optima used as the denominator-free side of every ratio."""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .model import OkpInstance, OtpInstance

DEFAULT_WORK_CAP = 10**8
WORK_CAP_ENV = "ONLINE_ALLOC_WORK_CAP"


@dataclass(frozen=True, eq=False)
class OfflineResult:
    value: float
    kind: str  # "otp-exact" | "okp-fractional-upper-bound" | "okp-exact-dp"
    witness: np.ndarray | None = None


def opt_otp(instance: OtpInstance) -> OfflineResult:
    """Trade the whole budget at the best rate."""
    j = int(np.argmax(instance.rates))
    witness = np.zeros(len(instance))
    witness[j] = 1.0
    return OfflineResult(float(instance.rates[j]), "otp-exact", witness)


def opt_okp_fractional(instance: OkpInstance) -> OfflineResult:
    """LP relaxation of the knapsack: fill by decreasing ratio, last item fractionally.

    The witness holds the accepted fraction of each item.
    """
    order = np.argsort(-instance.ratios, kind="stable")
    w = instance.weights[order]
    cum_before = np.concatenate(([0.0], np.cumsum(w)[:-1]))
    frac_sorted = np.clip((1.0 - cum_before) / w, 0.0, 1.0)
    fractions = np.empty_like(frac_sorted)
    fractions[order] = frac_sorted
    value = float(np.sum(instance.ratios * instance.weights * fractions))
    return OfflineResult(value, "okp-fractional-upper-bound", fractions)


def work_cap() -> int:
    raw = os.environ.get(WORK_CAP_ENV)
    return int(float(raw)) if raw else DEFAULT_WORK_CAP


def opt_okp_exact(
    instance: OkpInstance, weight_quantum: float, cap: int | None = None
) -> OfflineResult:
    """Exact 0-1 knapsack optimum by dynamic programming over quantized capacity.

    Every weight must be a multiple of ``weight_quantum`` (within 1e-9).
    The witness is a 0/1 selection vector.
    """
    if weight_quantum <= 0:
        raise ValueError("weight_quantum must be positive")
    units = instance.weights / weight_quantum
    iw = np.rint(units).astype(np.int64)
    if np.any(np.abs(units - iw) * weight_quantum > 1e-9) or np.any(iw < 1):
        raise ValueError("weights are not multiples of the quantum")
    capacity = int(np.floor(1.0 / weight_quantum + 1e-9))
    n = len(instance)
    cap = work_cap() if cap is None else cap
    if n * (capacity + 1) > cap:
        raise ValueError(f"DP needs {n * (capacity + 1)} cell updates, over the cap of {cap}")

    values = instance.ratios * instance.weights
    best = np.zeros(capacity + 1)
    take = np.zeros((n, capacity + 1), dtype=bool)
    for i in range(n):
        wi = iw[i]
        if wi > capacity:
            continue
        cand = best[: capacity + 1 - wi] + values[i]
        improve = cand > best[wi:]
        take[i, wi:] = improve
        best[wi:] = np.where(improve, cand, best[wi:])

    chosen = np.zeros(n)
    c = capacity
    for i in range(n - 1, -1, -1):
        if take[i, c]:
            chosen[i] = 1.0
            c -= iw[i]
    return OfflineResult(float(best[capacity]), "okp-exact-dp", chosen)
