"""Threshold functions: flat at L up to a breakpoint, then increasing.

A threshold maps utilization y in [0, 1] to an estimate of the marginal
value of the remaining resource. Two representations of the increasing
segment are supported:

* closed-form exponential ``L * exp(growth * (y - omega))``, which covers the
  optimal threshold and every Gronwall envelope;
* tabulated knots over ``[omega, 1]`` with linear interpolation, for
  user-supplied functions.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .model import Bounds, PathOrStream, _open

# Utilization slightly above 1 from floating-point accumulation is accepted.
DOMAIN_TOL = 1e-9
TIE_RTOL = 1e-12
DEFAULT_GRID_N = 10_001
DEFAULT_SUFFICIENCY_TOL = 1e-7


@dataclass(frozen=True, eq=False)
class ThresholdFunction:
    bounds: Bounds
    omega: float
    alpha: float
    growth: float | None = None
    knots_y: np.ndarray | None = None
    knots_phi: np.ndarray | None = None

    def __post_init__(self):
        L = self.bounds.L
        omega = float(self.omega)
        if not 0 < omega <= 1:
            raise ValueError(f"breakpoint omega must lie in (0, 1], got {omega}")
        if not self.alpha >= 1:
            raise ValueError(f"alpha must be >= 1, got {self.alpha}")
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "alpha", float(self.alpha))
        if self.growth is not None and self.knots_y is not None:
            raise ValueError("give either an exponential growth rate or tabulated knots")
        if omega == 1:
            if self.growth is not None or self.knots_y is not None:
                raise ValueError("omega = 1 leaves no room for an increasing segment")
            return
        if self.growth is not None:
            if not self.growth > 0:
                raise ValueError("exponential growth rate must be positive")
            object.__setattr__(self, "growth", float(self.growth))
            return
        if self.knots_y is None or self.knots_phi is None:
            raise ValueError("omega < 1 needs an increasing segment")
        ky = np.array(self.knots_y, dtype=float)
        kp = np.array(self.knots_phi, dtype=float)
        if ky.ndim != 1 or ky.shape != kp.shape or ky.size < 2:
            raise ValueError("knots must be two equal-length 1-d arrays with >= 2 points")
        if abs(ky[0] - omega) > 1e-12 or abs(ky[-1] - 1) > 1e-12:
            raise ValueError("tabulated knots must span [omega, 1]")
        if np.any(np.diff(ky) <= 0) or np.any(np.diff(kp) <= 0):
            raise ValueError("tabulated knots must be strictly increasing in y and phi")
        if abs(kp[0] - L) > TIE_RTOL * L:
            raise ValueError("tabulated segment must start at L")
        ky[0], ky[-1], kp[0] = omega, 1.0, L
        ky.setflags(write=False)
        kp.setflags(write=False)
        object.__setattr__(self, "knots_y", ky)
        object.__setattr__(self, "knots_phi", kp)

    @property
    def kind(self) -> str:
        if self.omega == 1:
            return "flat"
        return "exponential" if self.growth is not None else "tabulated"

    @property
    def top(self) -> float:
        """phi(1), the largest rate the threshold can price."""
        return float(eval_phi(self, 1.0))

    def __call__(self, y):
        return eval_phi(self, y)

    def scalar_ops(self):
        """Return fast ``(phi, phi_inverse)`` closures on plain floats.

        No domain checks; the engine calls these once per arrival.
        """
        L, omega = self.bounds.L, self.omega
        if self.kind == "flat":
            return (lambda y: L), (lambda b: omega)
        if self.kind == "exponential":
            g, exp, log = self.growth, math.exp, math.log
            logL = log(L)

            def phi(y):
                return L if y <= omega else L * exp(g * (y - omega))

            def inv(b):
                if b <= L:
                    return omega
                return min(omega + (log(b) - logL) / g, 1.0)

            return phi, inv
        ky, kp = self.knots_y.tolist(), self.knots_phi.tolist()
        interp = _scalar_interp

        def phi(y):
            return L if y <= omega else interp(y, ky, kp)

        def inv(b):
            return omega if b <= L else interp(b, kp, ky)

        return phi, inv


def _scalar_interp(x: float, xs: list, ys: list) -> float:
    from bisect import bisect_right

    j = bisect_right(xs, x)
    if j <= 0:
        return ys[0]
    if j >= len(xs):
        return ys[-1]
    x0, x1 = xs[j - 1], xs[j]
    return ys[j - 1] + (ys[j] - ys[j - 1]) * (x - x0) / (x1 - x0)


def _unwrap(arr: np.ndarray, scalar_in: bool):
    return float(arr) if scalar_in else arr


def eval_phi(phi: ThresholdFunction, y):
    """Evaluate the threshold at utilization ``y`` (scalar or array)."""
    scalar_in = np.ndim(y) == 0
    y = np.asarray(y, dtype=float)
    if np.any((y < -DOMAIN_TOL) | (y > 1 + DOMAIN_TOL)) or np.any(np.isnan(y)):
        raise ValueError("utilization must lie in [0, 1]")
    y = np.clip(y, 0.0, 1.0)
    L, omega = phi.bounds.L, phi.omega
    if phi.kind == "flat":
        out = np.full(y.shape, L)
    elif phi.kind == "exponential":
        out = np.where(y <= omega, L, L * np.exp(phi.growth * (np.maximum(y, omega) - omega)))
    else:
        out = np.where(y <= omega, L, np.interp(y, phi.knots_y, phi.knots_phi))
    return _unwrap(out, scalar_in)


def invert_phi(phi: ThresholdFunction, b):
    """Utilization at which the threshold reaches rate ``b``.

    ``b == L`` maps to the breakpoint omega (the right end of the flat segment).
    """
    scalar_in = np.ndim(b) == 0
    b = np.asarray(b, dtype=float)
    L, omega = phi.bounds.L, phi.omega
    top = phi.top
    if np.any(b < L * (1 - TIE_RTOL)):
        raise ValueError(f"rate below L={L} cannot be inverted")
    if np.any(b > top * (1 + TIE_RTOL)):
        raise ValueError(f"rate above phi(1)={top} cannot be inverted")
    tie = b <= L * (1 + TIE_RTOL)
    if phi.kind == "flat":
        out = np.full(b.shape, omega)
    elif phi.kind == "exponential":
        with np.errstate(divide="ignore", invalid="ignore"):
            y = omega + (np.log(b) - math.log(L)) / phi.growth
        out = np.where(tie, omega, np.minimum(y, 1.0))
    else:
        out = np.where(tie, omega, np.interp(b, phi.knots_phi, phi.knots_y))
    return _unwrap(out, scalar_in)


def min_alpha_feasible(bounds: Bounds) -> float:
    """Smallest ratio any flat-plus-increasing threshold can certify: ln(U/L) + 1."""
    return bounds.log_theta + 1.0


def make_phi_star(bounds: Bounds) -> ThresholdFunction:
    """The optimal threshold: L on ``[0, 1/(ln θ+1)]``, then ``(L/e) e^{(ln θ+1) y}``."""
    alpha = min_alpha_feasible(bounds)
    if bounds.theta == 1:
        return ThresholdFunction(bounds, omega=1.0, alpha=1.0)
    return ThresholdFunction(bounds, omega=1.0 / alpha, alpha=alpha, growth=alpha)


def envelope_threshold(
    bounds: Bounds, alpha: float, omega: float | None = None
) -> ThresholdFunction:
    """Threshold whose increasing segment *is* the Gronwall envelope
    ``L exp(alpha (y - omega))``; ``omega`` defaults to ``1/alpha``.

    This is the largest function compatible with the differential
    inequality at ``alpha``, so if it misses ``phi(1) >= U`` nothing does.
    """
    if omega is None:
        omega = 1.0 / alpha
    if omega >= 1:
        return ThresholdFunction(bounds, omega=1.0, alpha=alpha)
    return ThresholdFunction(bounds, omega=omega, alpha=alpha, growth=alpha)


def gronwall_envelope(bounds: Bounds, alpha: float, omega: float, y):
    """Upper bound ``L exp(alpha (y - omega))`` on any admissible increasing segment."""
    if not alpha >= 1:
        raise ValueError("alpha must be >= 1")
    if not (1.0 / alpha - 1e-12 <= omega <= 1):
        raise ValueError("omega must lie in [1/alpha, 1]")
    scalar_in = np.ndim(y) == 0
    y = np.asarray(y, dtype=float)
    if np.any((y < omega - 1e-12) | (y > 1 + DOMAIN_TOL)):
        raise ValueError("y must lie in [omega, 1]")
    out = bounds.L * np.exp(alpha * (np.maximum(y, omega) - omega))
    return _unwrap(out, scalar_in)


def tabulate(phi: ThresholdFunction, n: int = DEFAULT_GRID_N, alpha: float | None = None):
    """Sample ``phi`` on ``n`` uniform knots over ``[omega, 1]``."""
    if phi.kind == "flat":
        return phi
    if n < 2:
        raise ValueError("need at least 2 knots")
    ky = np.linspace(phi.omega, 1.0, n)
    return ThresholdFunction(
        phi.bounds, phi.omega, phi.alpha if alpha is None else alpha,
        knots_y=ky, knots_phi=eval_phi(phi, ky),
    )


def max_slope(phi: ThresholdFunction) -> float:
    """Largest derivative of the increasing segment."""
    if phi.kind == "flat":
        return 0.0
    if phi.kind == "exponential":
        return phi.growth * phi.top
    return float(np.max(np.diff(phi.knots_phi) / np.diff(phi.knots_y)))


# --- sufficiency check -----------------------------------------------------


@dataclass(frozen=True)
class SufficiencyReport:
    passed: bool
    alpha: float
    grid_n: int
    worst_y: float
    worst_margin: float
    differential_ok: bool
    start_ok: bool
    start_value: float
    end_ok: bool
    end_value: float
    breakpoint_ok: bool

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _probe_step(phi: ThresholdFunction, h: float) -> float:
    if phi.kind == "tabulated":
        return float(np.min(np.diff(phi.knots_y)))
    return min(h / 2, 2e-6)


def _derivative(phi: ThresholdFunction, grid: np.ndarray) -> np.ndarray:
    """Finite-difference slope of the increasing segment at each grid point.

    Central differences inside, second-order one-sided stencils at the two
    ends. The probe step is tied to the knot spacing for tabulated
    functions and kept small otherwise.
    """
    if grid.size == 1:
        return np.zeros(1)
    eta = _probe_step(phi, grid[1] - grid[0])
    f = lambda y: eval_phi(phi, np.clip(y, phi.omega, 1.0))
    d = np.empty_like(grid)
    mid = grid[1:-1]
    d[1:-1] = (f(mid + eta) - f(mid - eta)) / (2 * eta)
    a, z = grid[0], grid[-1]
    d[0] = (-3 * f(a) + 4 * f(a + eta) - f(a + 2 * eta)) / (2 * eta)
    d[-1] = (3 * f(z) - 4 * f(z - eta) + f(z - 2 * eta)) / (2 * eta)
    return d


def check_sufficiency(
    phi: ThresholdFunction,
    alpha: float,
    grid_n: int = DEFAULT_GRID_N,
    tol: float = DEFAULT_SUFFICIENCY_TOL,
) -> SufficiencyReport:
    """Grid check of the sufficient conditions for ``alpha``-competitiveness.

    On a uniform grid over ``[omega, 1]``: ``phi >= phi' / alpha`` up to
    ``tol``; ``phi(omega) == L``; ``phi(1) >= U - tol``; ``omega >= 1/alpha - tol``.
    Failures are reported, never raised.
    """
    if grid_n < 2:
        raise ValueError("grid_n must be >= 2")
    L, U = phi.bounds.L, phi.bounds.U
    if phi.kind == "flat":
        grid = np.array([1.0])
    else:
        grid = np.linspace(phi.omega, 1.0, grid_n)
    values = eval_phi(phi, grid)
    margins = values - _derivative(phi, grid) / alpha
    j = int(np.argmin(margins))
    start = float(eval_phi(phi, phi.omega))
    end = float(values[-1])
    differential_ok = bool(margins[j] >= -tol)
    start_ok = abs(start - L) <= TIE_RTOL * L
    end_ok = end >= U - tol
    breakpoint_ok = phi.omega >= 1.0 / alpha - tol
    return SufficiencyReport(
        passed=differential_ok and start_ok and end_ok and breakpoint_ok,
        alpha=float(alpha),
        grid_n=int(grid_n),
        worst_y=float(grid[j]),
        worst_margin=float(margins[j]),
        differential_ok=differential_ok,
        start_ok=start_ok,
        start_value=start,
        end_ok=end_ok,
        end_value=end,
        breakpoint_ok=breakpoint_ok,
    )


# --- tabulated import / export ---------------------------------------------


def threshold_pairs(phi: ThresholdFunction, n: int = 1001) -> list[list[float]]:
    """``(y, phi(y))`` pairs from 0 to 1; flat segment as a single pair at 0."""
    ys = [0.0]
    if phi.kind == "tabulated":
        ys += phi.knots_y.tolist()
    elif phi.kind == "exponential":
        ys += np.linspace(phi.omega, 1.0, n).tolist()
    else:
        ys.append(1.0)
    return [[y, float(eval_phi(phi, y))] for y in ys]


def save_threshold(phi: ThresholdFunction, target: PathOrStream, n: int = 1001):
    with _open(target, "w") as fh:
        json.dump(threshold_pairs(phi, n), fh)
        fh.write("\n")


def threshold_from_pairs(pairs, bounds: Bounds, alpha: float | None = None) -> ThresholdFunction:
    """Build a tabulated threshold from ``(y, phi(y))`` pairs covering [0, 1].

    The flat segment ends at the last leading pair whose value equals
    ``phi(0)``, which must be ``L``.
    """
    arr = np.asarray(pairs, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] < 2:
        raise ValueError("expected a list of (y, phi) pairs")
    y, v = arr[:, 0], arr[:, 1]
    if y[0] != 0 or y[-1] != 1 or np.any(np.diff(y) <= 0):
        raise ValueError("y must increase strictly from 0 to 1")
    L = bounds.L
    if abs(v[0] - L) > TIE_RTOL * L:
        raise ValueError(f"phi(0) = {v[0]} must equal L = {L}")
    flat = np.abs(v - L) <= TIE_RTOL * L
    n_flat = int(np.argmin(flat)) if not flat.all() else y.size
    if alpha is None:
        alpha = min_alpha_feasible(bounds)
    if n_flat == y.size:
        return ThresholdFunction(bounds, omega=1.0, alpha=alpha)
    if n_flat == 1:
        raise ValueError("threshold must be flat at L on a segment [0, omega] with omega > 0")
    omega = y[n_flat - 1]
    return ThresholdFunction(
        bounds, omega, alpha, knots_y=y[n_flat - 1:], knots_phi=v[n_flat - 1:]
    )


def load_threshold(source: PathOrStream, bounds: Bounds, alpha: float | None = None):
    with _open(source, "r") as fh:
        pairs = json.load(fh)
    return threshold_from_pairs(pairs, bounds, alpha)
