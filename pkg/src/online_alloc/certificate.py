"""Primal-dual certificates for runs of the threshold algorithm.

A run is certified ``alpha``-competitive when, alongside its primal
trajectory ``P_0..P_N``, we can exhibit dual values ``D_0..D_N`` such that

* the final primal and dual solutions are feasible,
* ``P_k >= D_k / alpha`` for some starting index ``k``, and
* ``P_i - P_{i-1} >= (D_i - D_{i-1}) / alpha`` for every later step.

Chaining the inequalities gives ``alpha * ALG >= D_N >= OPT``. This module
builds the duals from a trace and audits each inequality numerically.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .model import Trace
from .threshold import ThresholdFunction, eval_phi, max_slope

FEAS_TOL = 1e-9
DEFAULT_STEP_TOL = 1e-9


class DualInfeasibleError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class DualAssignment:
    """Dual variables built alongside a trace.

    ``dual_values[i]`` is ``D_i`` for ``i = 0..N``. For OKP,
    ``lambdas[i]`` is the threshold seen by arrival ``i`` and
    ``final_lambda`` the capacity dual, raised by ``capacity_repair`` above
    ``phi(y_N)`` when an item rejected for lack of room would otherwise be
    left uncovered. ``construction`` is ``"threshold"`` or, for knapsack
    runs that never left the flat segment and rejected nothing,
    ``"accept-all"`` (capacity dual 0, item duals equal to the ratios).
    """

    problem: str
    construction: str
    lambdas: np.ndarray
    final_lambda: float
    betas: np.ndarray | None
    dual_values: np.ndarray
    capacity_repair: float = 0.0
    slope_max: float = 0.0

    @property
    def objective(self) -> float:
        """Value of the (repaired) feasible dual solution."""
        return float(self.dual_values[-1]) + self.capacity_repair


def build_dual_otp(trace: Trace, threshold: ThresholdFunction) -> DualAssignment:
    """``lambda_i = phi(y_i)``; the dual objective after step i is ``lambda_i``."""
    if trace.problem != "otp":
        raise ValueError("expected an OTP trace")
    lambdas = eval_phi(threshold, trace.utilization)
    D = np.concatenate(([threshold.bounds.L], lambdas))
    gap = float(trace.rates.max() - lambdas[-1])
    if gap > FEAS_TOL:
        raise DualInfeasibleError(
            f"final dual {lambdas[-1]!r} falls short of the best rate by {gap:.3g}"
        )
    return DualAssignment("otp", "threshold", lambdas, float(lambdas[-1]), None, D)


def build_dual_okp(trace: Trace, threshold: ThresholdFunction) -> DualAssignment:
    if trace.problem != "okp":
        raise ValueError("expected an OKP trace")
    b, w = trace.rates, trace.weights
    accepted = trace.accepted
    y_prev = trace.utilization_before
    slope = max_slope(threshold)

    if not np.any(~accepted) and trace.final_utilization < threshold.omega:
        betas = b.copy()
        D = np.concatenate(([0.0], np.cumsum(w * b)))
        return DualAssignment("okp", "accept-all", np.zeros_like(b), 0.0, betas, D, 0.0, slope)

    lambdas = eval_phi(threshold, y_prev)
    betas = np.where(accepted, b - lambdas, 0.0)
    if np.any(betas < -FEAS_TOL):
        i = int(np.argmin(betas))
        raise DualInfeasibleError(f"negative item dual {betas[i]!r} at arrival {i}")
    betas = np.maximum(betas, 0.0)
    phi_after = eval_phi(threshold, trace.utilization)
    D = np.concatenate(([threshold.bounds.L], phi_after + np.cumsum(w * betas)))
    lam = float(phi_after[-1])
    rejected = b[~accepted]
    repair = max(0.0, float(rejected.max()) - lam) if rejected.size else 0.0
    return DualAssignment("okp", "threshold", lambdas, lam + repair, betas, D, repair, slope)


@dataclass(frozen=True, eq=False)
class CertificateReport:
    problem: str
    construction: str
    alpha: float
    primal_feasible: bool
    dual_feasible: bool
    initial_ok: bool
    k: int | None
    initial_margin: float | None
    incremental_ok: bool
    violations: int
    worst_margin: float
    worst_index: int | None
    margins: np.ndarray
    slack_budget: float
    slack_consumed: float
    capacity_repair: float
    alg_value: float
    opt_value: float
    dual_objective: float
    weak_duality_ok: bool
    final_ok: bool
    passed: bool

    def to_dict(self, include_margins: bool = False) -> dict:
        out = {k: v for k, v in self.__dict__.items() if k != "margins"}
        if include_margins:
            out["margins"] = self.margins.tolist()
        return out

    def to_json(self, include_margins: bool = False) -> str:
        return json.dumps(self.to_dict(include_margins), indent=2)


def audit(
    trace: Trace,
    dual: DualAssignment,
    alpha: float,
    opt_value: float,
    step_tol: float | None = None,
) -> CertificateReport:
    """Check feasibility, the initial inequality and every incremental inequality.

    OTP steps get ``step_tol`` (default 1e-9). OKP steps get
    ``alpha * w_i**2 * max phi' + 1e-9``: the knapsack argument only
    holds exactly for vanishing weights, and its per-step error is second
    order in the weight. The final check ``alpha * ALG >= OPT - slack``
    allows ``alpha`` times the summed step tolerances plus any capacity
    repair of the dual.
    """
    n = len(trace)
    P = np.concatenate(([0.0], trace.primal))
    D = dual.dual_values
    if D.size != n + 1:
        raise ValueError("trace and dual have different lengths")
    base_tol = DEFAULT_STEP_TOL if step_tol is None else float(step_tol)
    if trace.problem == "okp" and dual.construction == "threshold":
        tol = alpha * trace.weights**2 * dual.slope_max + base_tol
    else:
        tol = np.full(n, base_tol)
    tol_k = np.concatenate(([base_tol], tol))

    x = trace.decisions
    primal_feasible = bool(np.all(x >= 0) and trace.final_utilization <= 1 + FEAS_TOL)
    if trace.problem == "okp":
        primal_feasible &= bool(np.all((x == 0) | (x == trace.weights)))
        betas = dual.betas
        dual_feasible = bool(
            np.all(betas >= 0)
            and dual.final_lambda >= 0
            and np.all(dual.final_lambda + betas >= trace.rates - FEAS_TOL)
        )
    else:
        dual_feasible = bool(dual.final_lambda >= trace.rates.max() - FEAS_TOL)

    init = P - D / alpha
    ok_init = np.flatnonzero(init >= -tol_k)
    margins = np.diff(P) - np.diff(D) / alpha
    if ok_init.size:
        k = int(ok_init[0])
        tail = margins[k:]
        bad = tail < -tol[k:]
        incremental_ok = not bad.any()
        violations = int(bad.sum())
        if tail.size:
            j = int(np.argmin(tail))
            worst_margin, worst_index = float(tail[j]), k + j + 1
        else:
            worst_margin, worst_index = 0.0, None
        slack_budget = float(tol_k[k] + tol[k:].sum())
        slack_consumed = float(max(0.0, -init[k]) + np.maximum(0.0, -tail).sum())
        initial_margin = float(init[k])
    else:
        k = initial_margin = worst_index = None
        incremental_ok = False
        violations = n
        j = int(np.argmin(margins))
        worst_margin = float(margins[j])
        slack_budget = float(tol_k.sum())
        slack_consumed = float(np.maximum(0.0, -margins).sum())

    alg = float(P[-1])
    allowed = alpha * slack_budget + dual.capacity_repair
    final_ok = alpha * alg >= opt_value - allowed - FEAS_TOL
    weak_duality_ok = dual.objective >= opt_value - FEAS_TOL * max(1.0, abs(opt_value))
    initial_ok = k is not None
    return CertificateReport(
        problem=trace.problem,
        construction=dual.construction,
        alpha=float(alpha),
        primal_feasible=primal_feasible,
        dual_feasible=dual_feasible,
        initial_ok=initial_ok,
        k=k,
        initial_margin=initial_margin,
        incremental_ok=incremental_ok,
        violations=violations,
        worst_margin=worst_margin,
        worst_index=worst_index,
        margins=margins,
        slack_budget=slack_budget,
        slack_consumed=slack_consumed,
        capacity_repair=dual.capacity_repair,
        alg_value=alg,
        opt_value=float(opt_value),
        dual_objective=dual.objective,
        weak_duality_ok=bool(weak_duality_ok),
        final_ok=bool(final_ok),
        passed=bool(primal_feasible and dual_feasible and initial_ok and incremental_ok and final_ok),
    )


def certify(trace: Trace, threshold: ThresholdFunction, opt_value: float,
            alpha: float | None = None, step_tol: float | None = None) -> CertificateReport:
    """Build the matching dual for ``trace`` and audit it in one call."""
    build = build_dual_otp if trace.problem == "otp" else build_dual_okp
    dual = build(trace, threshold)
    return audit(trace, dual, threshold.alpha if alpha is None else alpha, opt_value, step_tol)
