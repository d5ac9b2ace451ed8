"""Domain types shared across the package and JSONL instance serialization.

An instance file is JSON Lines: a header object carrying the problem tag and
the rate bounds, then one object per arrival in arrival order::

    {"problem": "okp", "L": 1, "U": 2.718281828459045}
    {"b": 1.5, "w": 0.01}
    {"b": 2.0, "w": 0.02}

Floats are written with 17 significant digits so a save/load cycle is exact.
"""

from __future__ import annotations

import io
import json
import math
import os
from dataclasses import dataclass, field
from typing import IO, Iterator, Union

import numpy as np

DEFAULT_INFINITESIMAL_THRESHOLD = 0.01
TRACE_TOL = 1e-9

PathOrStream = Union[str, os.PathLike, IO[str]]


class InstanceFormatError(ValueError):
    """Raised when an instance file cannot be parsed or violates an invariant."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class Bounds:
    """Closed interval ``[L, U]`` of admissible rates (or value-to-weight ratios)."""

    L: float
    U: float

    def __post_init__(self):
        L, U = float(self.L), float(self.U)
        if not (math.isfinite(L) and math.isfinite(U)):
            raise ValueError("bounds must be finite")
        if not 0 < L <= U:
            raise ValueError(f"bounds require 0 < L <= U, got L={L}, U={U}")
        object.__setattr__(self, "L", L)
        object.__setattr__(self, "U", U)

    @property
    def theta(self) -> float:
        """Fluctuation ratio U/L."""
        return self.U / self.L

    @property
    def log_theta(self) -> float:
        return math.log(self.U) - math.log(self.L)

    def contains(self, b, tol: float = 0.0) -> bool:
        b = np.asarray(b, dtype=float)
        return bool(np.all((b >= self.L - tol) & (b <= self.U + tol)))


def _frozen_array(values, name: str) -> np.ndarray:
    arr = np.array(values, dtype=float).reshape(-1)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class OtpInstance:
    """One-way trading arrivals: a sequence of exchange rates within ``bounds``."""

    bounds: Bounds
    rates: np.ndarray

    problem = "otp"

    def __post_init__(self):
        rates = _frozen_array(self.rates, "rates")
        if rates.size < 1:
            raise ValueError("N >= 1 required")
        _check_rates(rates, self.bounds)
        object.__setattr__(self, "rates", rates)

    def __len__(self) -> int:
        return self.rates.size

    def __eq__(self, other):
        if not isinstance(other, OtpInstance):
            return NotImplemented
        return self.bounds == other.bounds and np.array_equal(self.rates, other.rates)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class OkpInstance:
    """Online knapsack arrivals: (ratio, weight) pairs against unit capacity.

    Weights above ``infinitesimal_threshold`` are allowed but flagged through
    :attr:`is_infinitesimal`; the competitive guarantee degrades with the
    largest weight rather than failing outright.
    """

    bounds: Bounds
    ratios: np.ndarray
    weights: np.ndarray
    infinitesimal_threshold: float = DEFAULT_INFINITESIMAL_THRESHOLD

    problem = "okp"

    def __post_init__(self):
        ratios = _frozen_array(self.ratios, "ratios")
        weights = _frozen_array(self.weights, "weights")
        if ratios.size < 1:
            raise ValueError("N >= 1 required")
        if ratios.shape != weights.shape:
            raise ValueError("ratios and weights must have the same length")
        _check_rates(ratios, self.bounds)
        bad = np.flatnonzero((weights <= 0) | (weights > 1))
        if bad.size:
            i = int(bad[0])
            raise ValueError(f"weight {weights[i]!r} at index {i} outside (0, 1]")
        object.__setattr__(self, "ratios", ratios)
        object.__setattr__(self, "weights", weights)

    # OTP and OKP traces share the ``rates`` name in the engine
    @property
    def rates(self) -> np.ndarray:
        return self.ratios

    @property
    def max_weight(self) -> float:
        return float(self.weights.max())

    @property
    def is_infinitesimal(self) -> bool:
        return self.max_weight <= self.infinitesimal_threshold

    def __len__(self) -> int:
        return self.ratios.size

    def __eq__(self, other):
        if not isinstance(other, OkpInstance):
            return NotImplemented
        return (
            self.bounds == other.bounds
            and np.array_equal(self.ratios, other.ratios)
            and np.array_equal(self.weights, other.weights)
        )

    __hash__ = None


Instance = Union[OtpInstance, OkpInstance]


def _check_rates(rates: np.ndarray, bounds: Bounds):
    bad = np.flatnonzero((rates < bounds.L) | (rates > bounds.U))
    if bad.size:
        i = int(bad[0])
        raise ValueError(
            f"rate out of bounds: {rates[i]!r} at index {i} not in [{bounds.L}, {bounds.U}]"
        )


@dataclass(frozen=True, eq=False)
class Trace:
    """Per-step record of one online run.

    ``utilization[i]`` and ``primal[i]`` hold y and P *after* arrival ``i``
    (zero-based); the implicit starting values are y = 0 and P = 0.
    ``clipped`` lists arrivals whose spend the driver had to cut back to the
    remaining budget.
    """

    problem: str
    rates: np.ndarray
    weights: np.ndarray | None
    decisions: np.ndarray
    utilization: np.ndarray
    primal: np.ndarray
    clipped: tuple[int, ...] = field(default_factory=tuple)

    def __len__(self) -> int:
        return self.rates.size

    @property
    def value(self) -> float:
        return float(self.primal[-1])

    @property
    def final_utilization(self) -> float:
        return float(self.utilization[-1])

    @property
    def utilization_before(self) -> np.ndarray:
        """y before each arrival, i.e. ``y(i-1)``."""
        return np.concatenate(([0.0], self.utilization[:-1]))

    @property
    def accepted(self) -> np.ndarray:
        return self.decisions > 0

    def check(self, tol: float = TRACE_TOL):
        """Verify the utilization and primal recurrences in a single pass."""
        x, y, P, b = self.decisions, self.utilization, self.primal, self.rates
        if np.any(x < 0):
            raise ValueError("negative decision in trace")
        y_prev = np.concatenate(([0.0], y[:-1]))
        P_prev = np.concatenate(([0.0], P[:-1]))
        bad = np.flatnonzero(y != y_prev + x)
        if bad.size:
            raise ValueError(f"utilization recurrence broken at step {bad[0]}")
        bad = np.flatnonzero(P != P_prev + b * x)
        if bad.size:
            raise ValueError(f"primal recurrence broken at step {bad[0]}")
        if x.size and y[-1] > 1 + tol:
            raise ValueError(f"final utilization {y[-1]!r} exceeds budget")
        if self.problem == "okp":
            w = self.weights
            if np.any((x != 0) & (x != w)):
                raise ValueError("OKP decisions must be 0 or the item weight")


# --- serialization ---------------------------------------------------------


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def _open(target: PathOrStream, mode: str):
    if hasattr(target, "read") or hasattr(target, "write"):
        return _NoClose(target)
    return open(target, mode, encoding="utf-8")


class _NoClose:
    def __init__(self, stream):
        self.stream = stream

    def __enter__(self):
        return self.stream

    def __exit__(self, *exc):
        return False


def save_instance(instance: Instance, target: PathOrStream):
    """Write ``instance`` as JSONL. A non-infinitesimal OKP instance gets a
    ``warning`` entry in its header."""
    if len(instance) < 1:
        raise ValueError("N >= 1 required")
    b = instance.bounds
    header = f'{{"problem": "{instance.problem}", "L": {_fmt(b.L)}, "U": {_fmt(b.U)}'
    if isinstance(instance, OkpInstance) and not instance.is_infinitesimal:
        header += (
            f', "warning": "max weight {_fmt(instance.max_weight)} exceeds '
            f'infinitesimality threshold {_fmt(instance.infinitesimal_threshold)}"'
        )
    lines = [header + "}"]
    if isinstance(instance, OkpInstance):
        lines.extend(
            f'{{"b": {_fmt(r)}, "w": {_fmt(w)}}}'
            for r, w in zip(instance.ratios.tolist(), instance.weights.tolist())
        )
    else:
        lines.extend(f'{{"b": {_fmt(r)}}}' for r in instance.rates.tolist())
    with _open(target, "w") as fh:
        fh.write("\n".join(lines))
        fh.write("\n")


def dumps_instance(instance: Instance) -> str:
    buf = io.StringIO()
    save_instance(instance, buf)
    return buf.getvalue()


def _records(fh) -> Iterator[tuple[int, dict]]:
    for lineno, raw in enumerate(fh, start=1):
        if not raw.strip():
            continue
        try:
            obj = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise InstanceFormatError(f"parse failure: {exc.msg}", lineno) from None
        if not isinstance(obj, dict):
            raise InstanceFormatError("parse failure: expected a JSON object", lineno)
        yield lineno, obj


def _number(obj: dict, key: str, lineno: int) -> float:
    if key not in obj:
        raise InstanceFormatError(f"missing field {key!r}", lineno)
    v = obj[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise InstanceFormatError(f"field {key!r} is not a number", lineno)
    v = float(v)
    if not math.isfinite(v):
        raise InstanceFormatError(f"field {key!r} is not finite", lineno)
    return v


def load_instance(
    source: PathOrStream,
    problem: str | None = None,
    infinitesimal_threshold: float = DEFAULT_INFINITESIMAL_THRESHOLD,
) -> Instance:
    """Read a JSONL instance.

    ``problem`` may be given to insist on a particular tag; otherwise the
    header decides. Every error carries the offending line number.
    """
    with _open(source, "r") as fh:
        records = _records(fh)
        try:
            lineno, header = next(records)
        except StopIteration:
            raise InstanceFormatError("empty input: header line missing") from None
        tag = header.get("problem")
        if tag not in ("otp", "okp"):
            raise InstanceFormatError(f"unknown problem tag {tag!r}", lineno)
        if problem is not None and tag != problem:
            raise InstanceFormatError(f"expected problem {problem!r}, header says {tag!r}", lineno)
        try:
            bounds = Bounds(_number(header, "L", lineno), _number(header, "U", lineno))
        except ValueError as exc:
            if isinstance(exc, InstanceFormatError):
                raise
            raise InstanceFormatError(str(exc), lineno) from None

        rates: list[float] = []
        weights: list[float] = []
        for lineno, rec in records:
            b = _number(rec, "b", lineno)
            if not bounds.L <= b <= bounds.U:
                raise InstanceFormatError(
                    f"rate out of bounds: {b!r} not in [{bounds.L}, {bounds.U}]", lineno
                )
            rates.append(b)
            if tag == "okp":
                w = _number(rec, "w", lineno)
                if w <= 0:
                    raise InstanceFormatError(f"nonpositive weight {w!r}", lineno)
                if w > 1:
                    raise InstanceFormatError(f"weight {w!r} exceeds capacity 1", lineno)
                weights.append(w)
            elif "w" in rec:
                raise InstanceFormatError("OTP record must not carry a weight", lineno)

    if not rates:
        raise InstanceFormatError("N >= 1 required: no arrivals after header")
    if tag == "otp":
        return OtpInstance(bounds, rates)
    return OkpInstance(bounds, rates, weights, infinitesimal_threshold)


def loads_instance(text: str, problem: str | None = None, **kwargs) -> Instance:
    return load_instance(io.StringIO(text), problem, **kwargs)
