"""Command-line interface: ``seqalloc {solve,simulate,gen-scenario}``.

Exit codes: 0 success, 1 runtime failure, 2 invalid configuration.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np
import yaml

from seqalloc import __version__, kernels
from seqalloc.errors import SeqAllocError, ValidationError
from seqalloc.files import csv_text, fmt, read_instance, sha256, write_instance, write_text
from seqalloc.policies import POLICIES
from seqalloc.prob import (
    DemandModel,
    covariance_from_correlation,
    expected_min_arrays,
    moment_match,
)
from seqalloc.sim import SimConfig, generate_instance, simulate
from seqalloc.solver import Instance, round_to_integers, solve_static

log = logging.getLogger("seqalloc")

# keys that describe a problem inline rather than a simulation setting
PROBLEM_KEYS = ("prices", "limit", "mu", "sigma", "demand_mean", "demand_std", "correlation")


class ConfigError(ValidationError):
    """Validation failure already carrying its file/line location."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


def _load_yaml(path: Path):
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", str(path)) from None
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{path}:{mark.line + 1}:{mark.column + 1}" if mark else str(path)
        raise ConfigError(f"{where}: {getattr(exc, 'problem', exc)}") from None
    if data is None:
        return {}, {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping of keys to values")
    lines = {k.value: k.start_mark.line + 1 for k, _ in node.value}
    return data, lines


def _located(exc: ValidationError, path, lines) -> ConfigError:
    line = lines.get(exc.field)
    where = f"{path}:{line}" if line else str(path)
    return ConfigError(f"{where}: {exc}", exc.field)


def load_settings(args):
    """Merge config file and flags into ``(SimConfig, problem_keys)``."""
    data, lines, path = {}, {}, "<command line>"
    if args.config:
        path = Path(args.config)
        data, lines = _load_yaml(path)
    problem = {k: data.pop(k) for k in PROBLEM_KEYS if k in data}
    overrides = {
        "master_seed": args.seed,
        "n_trials": getattr(args, "trials", None),
        "horizon": args.horizon,
        "eps": args.eps,
        "out_dir": getattr(args, "out", None),
        "instance_path": getattr(args, "instance", None),
        "threads": _threads(args, data),
    }
    if args.integer:
        overrides["integer_mode"] = True
    data.update({k: v for k, v in overrides.items() if v is not None})
    for key in ("price_range", "demand_mean_range", "demand_std_range", "budget_fraction_range"):
        if isinstance(data.get(key), list):
            data[key] = tuple(data[key])
    try:
        cfg = SimConfig.from_mapping(data)
    except ValidationError as exc:
        raise _located(exc, path, lines) from None
    except TypeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return cfg, problem, (path, lines)


def _threads(args, data):
    if getattr(args, "threads", None) is not None:
        return args.threads
    env = os.environ.get("SEQALLOC_THREADS")
    if env and "threads" not in data:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"SEQALLOC_THREADS must be an integer, got {env!r}") from None
    return None


def _vector(problem, key, n=None):
    try:
        arr = np.asarray(problem[key], dtype=float)
    except (TypeError, ValueError):
        raise ValidationError("expected a list of numbers", key) from None
    if arr.ndim != 1 or (n is not None and arr.size != n):
        raise ValidationError(f"expected a list of {n or 'T'} numbers", key)
    return arr


def instance_from_problem(problem: dict) -> Instance:
    for key in ("prices", "limit"):
        if key not in problem:
            raise ValidationError("missing", key)
    prices = _vector(problem, "prices")
    T = prices.size
    if "mu" in problem or "sigma" in problem:
        mu = _vector(problem, "mu", T)
        try:
            sigma = np.asarray(problem["sigma"], dtype=float)
        except (TypeError, ValueError):
            raise ValidationError("expected a T x T matrix", "sigma") from None
        model = DemandModel(mu, sigma)
    elif "demand_mean" in problem:
        means = _vector(problem, "demand_mean", T)
        stds = _vector(problem, "demand_std", T) if "demand_std" in problem else None
        if stds is None:
            raise ValidationError("missing", "demand_std")
        try:
            marg = [moment_match(m, s) for m, s in zip(means, stds)]
        except SeqAllocError as exc:
            raise ValidationError(str(exc), "demand_mean") from None
        corr = np.asarray(problem.get("correlation", np.eye(T)), dtype=float)
        if corr.shape != (T, T):
            raise ValidationError(f"expected a {T} x {T} matrix", "correlation")
        model = DemandModel(
            [m.log_mean for m in marg],
            covariance_from_correlation(corr, [m.log_std for m in marg]),
        )
    else:
        raise ValidationError("give either mu and sigma or demand_mean and demand_std", "mu")
    try:
        limit = float(problem["limit"])
    except (TypeError, ValueError):
        raise ValidationError("expected a number", "limit") from None
    return Instance(prices, limit, model)


def resolve_instance(cfg: SimConfig, problem: dict, where) -> Instance:
    path, lines = where
    try:
        if cfg.instance_path:
            return read_instance(cfg.instance_path)
        if problem:
            return instance_from_problem(problem)
    except ValidationError as exc:
        raise _located(exc, path, lines) from None
    return generate_instance(cfg, cfg.scenario_seed)


def cmd_solve(args) -> int:
    cfg, problem, where = load_settings(args)
    inst = resolve_instance(cfg, problem, where)
    plan = solve_static(inst, cfg.eps)
    alloc = plan.alloc
    if cfg.integer_mode:
        alloc = round_to_integers(plan, int(round(inst.limit))).astype(float)
    per_period = inst.prices * expected_min_arrays(
        inst.model.log_means, inst.model.log_stds, alloc
    )
    out = Path(cfg.out_dir)
    rows = [(t + 1, inst.prices[t], alloc[t], per_period[t]) for t in range(inst.horizon)]
    write_text(out / "allocation.csv",
               csv_text(("period", "price", "alloc", "expected_min_revenue"), rows))
    summary = {
        "dual": plan.dual,
        "expected_revenue": float(per_period.sum()),
        "iterations": plan.iterations,
        "eps": plan.eps,
        "horizon": inst.horizon,
        "limit": inst.limit,
        "integer": cfg.integer_mode,
    }
    write_text(out / "summary.json", json.dumps(summary, indent=2) + "\n")
    log.info("solved T=%d: expected revenue %s, dual %s", inst.horizon,
             fmt(summary["expected_revenue"]), fmt(plan.dual))
    return 0


def cmd_simulate(args) -> int:
    cfg, problem, where = load_settings(args)
    inst = resolve_instance(cfg, problem, where)
    inst, records, report = simulate(cfg, inst)
    out = Path(cfg.out_dir)

    trial_rows = [(r.trial_index, p, r.revenues[p]) for r in records if r.ok for p in POLICIES]
    agg_rows = [(p, s.mean, s.std, s.min, s.max) for p, s in report.stats.items()]
    trace_rows = [
        (t + 1, p, report.trace_mean[p][t], report.trace_std[p][t])
        for t in range(inst.horizon)
        for p in POLICIES
    ]
    written = [
        write_text(out / "trials.csv", csv_text(("trial", "policy", "revenue"), trial_rows)),
        write_text(out / "aggregate.csv",
                   csv_text(("policy", "mean", "std", "min", "max"), agg_rows)),
        write_text(out / "traces.csv",
                   csv_text(("period", "policy", "mean_cum_revenue", "std_cum_revenue"),
                            trace_rows)),
        write_instance(inst, out / "instance.json"),
    ]
    manifest = {
        "tool": "seqalloc",
        "version": __version__,
        "backend": kernels.NAME,
        "master_seed": cfg.master_seed,
        "config": cfg.to_mapping(),
        "std_divisor": "n-1",
        "n_trials": report.n_trials,
        "warnings": report.warnings,
        "single_trial": report.single_trial,
        "failures": [{"trial": r.trial_index, "error": r.error} for r in records if not r.ok],
        "checksums": {p.name: sha256(p) for p in written},
    }
    write_text(out / "manifest.json", json.dumps(manifest, indent=2) + "\n")
    for p, s in report.stats.items():
        log.info("%-12s mean %.1f std %.1f", p, s.mean, s.std)
    if report.warnings:
        log.warning("%d warning(s); see manifest.json", report.warnings)
    return 0


def cmd_gen_scenario(args) -> int:
    cfg, problem, where = load_settings(args)
    inst = resolve_instance(cfg, problem, where)
    target = Path(args.instance_out or "instance.json")
    if target.suffix.lower() != ".json":
        target = target / "instance.json"
    try:
        write_instance(inst, target)
    except OSError as exc:
        raise SeqAllocError(f"cannot write instance to {target}: {exc.strerror}") from None
    log.info("wrote %s (T=%d, L=%s)", target, inst.horizon, fmt(inst.limit))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="seqalloc",
        description="Resource allocation under stochastic, correlated demand.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML file with flat SimConfig / problem keys")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--horizon", type=int, help="number of periods T")
    common.add_argument("--eps", type=float, help="dual accuracy of the bisection")
    common.add_argument("--integer", action="store_true", help="round allocations to integers")
    common.add_argument("--instance", help="instance file written by gen-scenario")
    common.add_argument("--threads", type=int, help="worker threads (env SEQALLOC_THREADS)")

    p = sub.add_parser("solve", parents=[common], help="solve the static problem")
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("simulate", parents=[common], help="Monte Carlo policy comparison")
    p.add_argument("--out", help="output directory")
    p.add_argument("--trials", type=int, help="number of trials")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("gen-scenario", parents=[common], help="write a synthetic instance")
    p.add_argument("--out", dest="instance_out", help="instance file (.json) or directory")
    p.set_defaults(func=cmd_gen_scenario)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(message)s",
    )
    return _run(args, args.func)


def _run(args, func) -> int:
    try:
        return func(args)
    except ValidationError as exc:
        print(f"seqalloc: invalid input: {exc}", file=sys.stderr)
        return 2
    except (SeqAllocError, OSError, ArithmeticError, RuntimeError) as exc:
        print(f"seqalloc: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
