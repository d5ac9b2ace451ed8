"""Batch experiment harness.

Subcommands::

    run         run the threshold algorithm (or a baseline) on a batch and audit each run
    audit       certificate report for a single instance
    worst-case  convergence of the worst-case family toward ln(U/L) + 1
    game        adaptive lower-bound game against a named opponent
    sweep       sufficiency pass/fail over a grid of (theta, alpha)
    gen         write a random or worst-case instance as JSONL

Tables go to ``<out>.csv`` and ``<out>.json`` (or CSV on stdout without
``--out``). Exit status: 0 success, 1 usage error, 2 certificate failure
under ``--strict``.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import adversary
from .certificate import certify
from .engine import BASELINE_NAMES, make_baseline, run, run_baseline
from .model import Bounds, OkpInstance, load_instance, save_instance
from .oracle import opt_okp_fractional, opt_otp
from .threshold import (
    check_sufficiency,
    envelope_threshold,
    load_threshold,
    make_phi_star,
    min_alpha_feasible,
)

COMMANDS = ("run", "audit", "worst-case", "game", "sweep", "gen")

RUN_COLUMNS = ["instance_id", "runner", "n", "alg_value", "opt_value", "ratio",
               "certificate", "slack_budget", "slack_consumed"]
WORST_CASE_COLUMNS = ["k", "alg_value", "opt_value", "ratio", "gap"]
SWEEP_COLUMNS = ["theta", "alpha", "sufficiency", "worst_margin", "phi_at_1", "worst_ratio"]

EPILOG = f"""
CSV columns
  run:        {", ".join(RUN_COLUMNS)}
  worst-case: {", ".join(WORST_CASE_COLUMNS)}
  sweep:      {", ".join(SWEEP_COLUMNS)}
The JSON file mirrors the CSV rows and adds aggregates (and transcripts for game).
Exit codes: 0 success, 1 usage error, 2 certificate failure with --strict.
"""


class UsageError(Exception):
    pass


def parse_number(text: str) -> float:
    """Float, or ``e`` / ``e^x`` for powers of Euler's number."""
    t = text.strip()
    if t == "e":
        return math.e
    if t.startswith("e^"):
        return math.exp(float(t[2:]))
    return float(t)


def parse_list(text: str | None, conv=parse_number) -> list:
    if not text:
        return []
    return [conv(p) for p in text.split(",") if p.strip()]


def parse_bounds(text: str) -> Bounds:
    parts = parse_list(text)
    if len(parts) != 2:
        raise UsageError(f"--bounds expects L,U, got {text!r}")
    try:
        return Bounds(*parts)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


@dataclass
class ExperimentConfig:
    command: str
    problem: str = "otp"
    bounds: Bounds = field(default_factory=lambda: Bounds(1.0, math.e))
    threshold: str = "phi-star"
    alpha: float | None = None
    instances: list[str] = field(default_factory=list)
    random: int = 0
    n_max: int = 1000
    distribution: str = "uniform-rate"
    weight: float = 1e-4
    runner: str = "phi-star"
    runner_param: float | None = None
    k: list[int] = field(default_factory=lambda: [1, 2, 10, 100, 1000, 10000])
    k_max: int = 10_000
    opponent: str = "phi-star"
    thetas: list[float] = field(default_factory=list)
    alphas: list[float] = field(default_factory=list)
    grid_n: int = 10_001
    seed: int = 0
    out: str | None = None
    strict: bool = False
    jobs: int = 1
    gen_worst_case: bool = False

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise UsageError(f"unknown command {self.command!r}")
        missing = [p for p in self.instances if not os.path.exists(p)]
        if missing:
            raise UsageError(f"instance file not found: {missing[0]}")
        if self.threshold != "phi-star" and not os.path.exists(self.threshold):
            raise UsageError(f"threshold file not found: {self.threshold}")


@dataclass
class RatioReport:
    rows: list[dict]
    alpha: float

    @property
    def max_ratio(self) -> float:
        return max((r["ratio"] for r in self.rows), default=float("nan"))

    @property
    def mean_ratio(self) -> float:
        return float(np.mean([r["ratio"] for r in self.rows])) if self.rows else float("nan")

    @property
    def certificates_passed(self) -> bool:
        return all(r["certificate"] != "fail" for r in self.rows)

    def aggregate(self) -> dict:
        return {"max_ratio": self.max_ratio, "mean_ratio": self.mean_ratio,
                "theoretical_alpha": self.alpha, "instances": len(self.rows)}


# --- helpers ---------------------------------------------------------------


def _threshold(cfg: ExperimentConfig):
    if cfg.threshold == "phi-star":
        return make_phi_star(cfg.bounds)
    return load_threshold(cfg.threshold, cfg.bounds, cfg.alpha)


def _instances(cfg: ExperimentConfig):
    if cfg.instances:
        out = []
        for path in cfg.instances:
            inst = load_instance(path, cfg.problem)
            if inst.bounds != cfg.bounds:
                raise UsageError(f"bounds mismatch in {path}: {inst.bounds} vs {cfg.bounds}")
            out.append((os.path.basename(path), inst))
        return out
    if cfg.random < 1:
        raise UsageError("give instance files or --random COUNT")
    rng = np.random.default_rng(cfg.seed)
    out = []
    for i in range(cfg.random):
        n = int(rng.integers(1, cfg.n_max + 1))
        inst = adversary.gen_random_instance(
            cfg.bounds, n, cfg.distribution, seed=int(rng.integers(2**63)),
            problem=cfg.problem, max_weight=cfg.weight,
        )
        out.append((f"{cfg.distribution}-{i:05d}", inst))
    return out


def _opt(inst) -> float:
    return (opt_okp_fractional(inst) if isinstance(inst, OkpInstance) else opt_otp(inst)).value


def _ratio(opt: float, alg: float) -> float:
    return opt / alg if alg > 0 else math.inf


def _run_row(args) -> dict:
    cfg, iid, inst = args
    opt = _opt(inst)
    if cfg.runner == "phi-star":
        phi = _threshold(cfg)
        trace = run(inst, phi)
        alpha = cfg.alpha if cfg.alpha is not None else phi.alpha
        rep = certify(trace, phi, opt, alpha)
        cert, budget, used = ("pass" if rep.passed else "fail"), rep.slack_budget, rep.slack_consumed
    else:
        trace = run_baseline(inst, make_baseline(cfg.runner, cfg.bounds, cfg.runner_param))
        cert, budget, used = "n/a", 0.0, 0.0
    return {"instance_id": iid, "runner": cfg.runner, "n": len(inst),
            "alg_value": trace.value, "opt_value": opt, "ratio": _ratio(opt, trace.value),
            "certificate": cert, "slack_budget": budget, "slack_consumed": used}


# --- commands --------------------------------------------------------------


def cmd_run(cfg: ExperimentConfig) -> RatioReport:
    if cfg.runner != "phi-star" and cfg.runner not in BASELINE_NAMES:
        raise UsageError(f"unknown runner {cfg.runner!r}")
    jobs = [(cfg, iid, inst) for iid, inst in _instances(cfg)]
    if cfg.jobs > 1:
        with ProcessPoolExecutor(cfg.jobs) as pool:
            rows = list(pool.map(_run_row, jobs, chunksize=16))
    else:
        rows = [_run_row(j) for j in jobs]
    rows.sort(key=lambda r: r["instance_id"])
    return RatioReport(rows, min_alpha_feasible(cfg.bounds))


def cmd_audit(cfg: ExperimentConfig):
    (iid, inst), *rest = _instances(cfg)
    if rest:
        raise UsageError("audit takes exactly one instance")
    phi = _threshold(cfg)
    trace = run(inst, phi)
    return certify(trace, phi, _opt(inst), cfg.alpha)


def cmd_worst_case(cfg: ExperimentConfig) -> list[dict]:
    """Rows (k, ALG, OPT, ratio, gap to ln θ+1) over the worst-case family.

    In OKP mode ``k`` is the number of ladder levels of the knapsack ladder topped at U and the
    item weight is ``--weight``.
    """
    target = min_alpha_feasible(cfg.bounds)
    phi = make_phi_star(cfg.bounds)
    rows = []
    for k in cfg.k:
        if cfg.problem == "okp":
            inst = adversary.gen_worst_case_okp(cfg.bounds, cfg.bounds.U, cfg.weight, levels=k).instance()
            alg, opt = run(inst, phi).value, opt_okp_fractional(inst).value
        else:
            wc = adversary.gen_worst_case_otp(cfg.bounds, k)
            alg, opt = adversary.eval_alg_on_worst_case(wc), float(wc.rates[-1])
        ratio = _ratio(opt, alg)
        rows.append({"k": k, "alg_value": alg, "opt_value": opt, "ratio": ratio, "gap": target - ratio})
    return rows


def cmd_game(cfg: ExperimentConfig):
    try:
        opponent = make_baseline(cfg.opponent, cfg.bounds, cfg.runner_param)
    except KeyError as exc:
        raise UsageError(str(exc.args[0])) from None
    return adversary.play_lower_bound_game(opponent, cfg.bounds, cfg.k_max)


def cmd_sweep(cfg: ExperimentConfig) -> list[dict]:
    """Sufficiency of the Gronwall-envelope threshold across (θ, α).

    Passing thresholds are also run on the worst-case ladder at every k in
    ``cfg.k`` and the worst ratio recorded.
    """
    thetas = cfg.thetas or [cfg.bounds.theta]
    rows = []
    for theta in thetas:
        bounds = Bounds(cfg.bounds.L, cfg.bounds.L * theta)
        a_star = min_alpha_feasible(bounds)
        alphas = cfg.alphas or [a_star - 0.2, a_star - 0.1, a_star, a_star + 0.1]
        for alpha in alphas:
            if alpha < 1:
                continue
            phi = envelope_threshold(bounds, alpha)
            rep = check_sufficiency(phi, alpha, cfg.grid_n)
            worst = float("nan")
            if rep.passed:
                ks = [1] if bounds.theta == 1 else cfg.k
                ratios = []
                for k in ks:
                    wc = adversary.gen_worst_case_otp(bounds, k)
                    alg = run(wc.instance(), phi).value
                    ratios.append(_ratio(float(wc.rates[-1]), alg))
                worst = max(ratios)
            rows.append({"theta": theta, "alpha": alpha,
                         "sufficiency": "pass" if rep.passed else "fail",
                         "worst_margin": rep.worst_margin, "phi_at_1": rep.end_value,
                         "worst_ratio": worst})
    return rows


def cmd_gen(cfg: ExperimentConfig):
    if cfg.gen_worst_case:
        k = cfg.k[-1]
        if cfg.problem == "okp":
            return adversary.gen_worst_case_okp(cfg.bounds, cfg.bounds.U, cfg.weight, levels=k).instance()
        return adversary.gen_worst_case_otp(cfg.bounds, k).instance()
    return adversary.gen_random_instance(
        cfg.bounds, cfg.n_max, cfg.distribution, cfg.seed, cfg.problem, max_weight=cfg.weight
    )


# --- output ----------------------------------------------------------------


def _jsonable(v):
    if isinstance(v, float) and math.isinf(v):
        return "inf"
    if isinstance(v, float) and math.isnan(v):
        return None
    return v


def write_table(rows: list[dict], columns: list[str], out: str | None, extra: dict | None = None,
                stdout=None):
    stdout = stdout or sys.stdout
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    writer.writeheader()
    for r in rows:
        writer.writerow({c: ("inf" if isinstance(r[c], float) and math.isinf(r[c]) else r[c])
                         for c in columns})
    if out is None:
        stdout.write(buf.getvalue())
        return
    with open(out + ".csv", "w", encoding="utf-8") as fh:
        fh.write(buf.getvalue())
    payload = {"rows": [{k: _jsonable(v) for k, v in r.items()} for r in rows]}
    if extra:
        payload.update({k: _jsonable(v) for k, v in extra.items()})
    with open(out + ".json", "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="online-alloc", description=__doc__.split("\n")[0],
                epilog=EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("instances", nargs="*", help="JSONL instance files")
    p.add_argument("--problem", choices=("otp", "okp"), default="otp")
    p.add_argument("--bounds", default="1,e", help="L,U (accepts e and e^x), default 1,e")
    p.add_argument("--threshold", default="phi-star", help="phi-star or a JSON file of (y, phi) pairs")
    p.add_argument("--alpha", type=float, help="ratio to certify against (default: the threshold's)")
    p.add_argument("--k", help="comma list of worst-case lengths, ladder levels for OKP "
                   "(default 1,2,10,100,1000,10000); "
                   "with gen, write the worst case of the last length")
    p.add_argument("--k-max", type=int, default=10_000)
    p.add_argument("--opponent", default="phi-star", help=", ".join(BASELINE_NAMES))
    p.add_argument("--runner", default="phi-star", help="algorithm for run: phi-star or a baseline")
    p.add_argument("--param", type=float, help="baseline parameter (k for uniform-split, c for greedy-above)")
    p.add_argument("--random", type=int, default=0, help="number of seeded random instances")
    p.add_argument("--n", type=int, default=1000, help="max (run) or exact (gen) instance length")
    p.add_argument("--distribution", default="uniform-rate", choices=adversary.DISTRIBUTIONS)
    p.add_argument("--weight", type=float, default=1e-4, help="max OKP item weight")
    p.add_argument("--thetas", help="comma list of U/L values for sweep")
    p.add_argument("--alphas", help="comma list of alpha values for sweep")
    p.add_argument("--grid-n", type=int, default=10_001)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="output path prefix (.csv/.json appended; .jsonl for gen)")
    p.add_argument("--strict", action="store_true", help="exit 2 if any certificate fails")
    p.add_argument("--jobs", type=int, default=1, help="worker processes for run")
    return p


def config_from_args(ns: argparse.Namespace) -> ExperimentConfig:
    try:
        return ExperimentConfig(
            command=ns.command, problem=ns.problem, bounds=parse_bounds(ns.bounds),
            threshold=ns.threshold, alpha=ns.alpha, instances=list(ns.instances),
            random=ns.random, n_max=ns.n, distribution=ns.distribution, weight=ns.weight,
            runner=ns.runner, runner_param=ns.param,
            k=parse_list(ns.k, int) or [1, 2, 10, 100, 1000, 10000],
            gen_worst_case=ns.k is not None,
            k_max=ns.k_max, opponent=ns.opponent,
            thetas=parse_list(ns.thetas), alphas=parse_list(ns.alphas), grid_n=ns.grid_n,
            seed=ns.seed, out=ns.out, strict=ns.strict, jobs=ns.jobs,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def main(argv: list[str] | None = None) -> int:
    ns = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(ns)
        return _dispatch(cfg)
    except UsageError as exc:
        print(f"online-alloc: error: {exc}", file=sys.stderr)
        return 1


def _dispatch(cfg: ExperimentConfig) -> int:
    if cfg.command == "run":
        rep = cmd_run(cfg)
        write_table(rep.rows, RUN_COLUMNS, cfg.out, rep.aggregate())
        print(f"max ratio {rep.max_ratio:.9g}, mean {rep.mean_ratio:.9g}, "
              f"alpha {rep.alpha:.9g}", file=sys.stderr)
        return 2 if cfg.strict and not rep.certificates_passed else 0
    if cfg.command == "audit":
        rep = cmd_audit(cfg)
        text = rep.to_json()
        if cfg.out:
            with open(cfg.out + ".json", "w", encoding="utf-8") as fh:
                fh.write(text)
        else:
            print(text)
        return 2 if cfg.strict and not rep.passed else 0
    if cfg.command == "worst-case":
        write_table(cmd_worst_case(cfg), WORST_CASE_COLUMNS, cfg.out,
                    {"theoretical_alpha": min_alpha_feasible(cfg.bounds)})
        return 0
    if cfg.command == "game":
        tr = cmd_game(cfg)
        if cfg.out:
            with open(cfg.out + ".json", "w", encoding="utf-8") as fh:
                fh.write(tr.to_json())
        print(tr.summary())
        return 0
    if cfg.command == "sweep":
        write_table(cmd_sweep(cfg), SWEEP_COLUMNS, cfg.out)
        return 0
    inst = cmd_gen(cfg)
    if cfg.out:
        save_instance(inst, cfg.out if cfg.out.endswith(".jsonl") else cfg.out + ".jsonl")
    else:
        save_instance(inst, sys.stdout)
    return 0


if __name__ == "__main__":
    sys.exit(main())
