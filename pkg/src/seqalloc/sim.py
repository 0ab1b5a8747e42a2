"""Synthetic scenarios and seeded Monte Carlo evaluation of the policies.

One instance is drawn per experiment and kept fixed; trials differ only in
the realized demand path. Trial ``i`` draws its path from
``SeedSequence(master_seed, spawn_key=(i,))``, so results do not depend on
execution order or thread count.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from typing import Optional

import numpy as np

from seqalloc.errors import ValidationError
from seqalloc.policies import POLICIES, run_all
from seqalloc.prob import (
    DemandModel,
    covariance_from_correlation,
    moment_match,
    project_to_correlation,
    sample_paths,
)
from seqalloc.solver import Instance, solve_static

log = logging.getLogger(__name__)

CORRELATION_MODES = ("independent", "random_sign")


def _range(value, name):
    try:
        lo, hi = (float(v) for v in value)
    except (TypeError, ValueError):
        raise ValidationError("expected a [lo, hi] pair", name) from None
    if not (math.isfinite(lo) and math.isfinite(hi)) or lo <= 0 or lo > hi:
        raise ValidationError(f"need 0 < lo <= hi, got [{lo}, {hi}]", name)
    return (lo, hi)


@dataclass(frozen=True)
class SimConfig:
    horizon: int = 20
    n_trials: int = 100
    master_seed: int = 0
    instance_seed: Optional[int] = None
    price_range: tuple = (10.0, 100.0)
    demand_mean_range: tuple = (20.0, 100.0)
    demand_std_range: tuple = (10.0, 30.0)
    correlation_magnitude: float = 0.7
    correlation_mode: str = "random_sign"
    budget_fraction_range: tuple = (0.3, 0.6)
    eps: Optional[float] = None
    integer_mode: bool = False
    threads: int = 1
    out_dir: str = "out"
    instance_path: Optional[str] = None

    def __post_init__(self):
        for name in ("horizon", "n_trials", "master_seed", "threads"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
                raise ValidationError(f"expected an integer, got {value!r}", name)
        if self.horizon < 1:
            raise ValidationError(f"must be >= 1, got {self.horizon}", "horizon")
        if self.n_trials < 1:
            raise ValidationError(f"must be >= 1, got {self.n_trials}", "n_trials")
        if self.master_seed < 0:
            raise ValidationError("must be nonnegative", "master_seed")
        if self.threads < 1:
            raise ValidationError(f"must be >= 1, got {self.threads}", "threads")
        if self.instance_seed is not None and (
            isinstance(self.instance_seed, bool)
            or not isinstance(self.instance_seed, (int, np.integer))
            or self.instance_seed < 0
        ):
            raise ValidationError("expected a nonnegative integer", "instance_seed")
        for name in ("price_range", "demand_mean_range", "demand_std_range",
                     "budget_fraction_range"):
            object.__setattr__(self, name, _range(getattr(self, name), name))
        if self.budget_fraction_range[1] > 1:
            raise ValidationError("fractions must lie in (0, 1]", "budget_fraction_range")
        rho = self.correlation_magnitude
        if isinstance(rho, bool) or not isinstance(rho, (int, float)) or not 0 <= rho < 1:
            raise ValidationError(f"need 0 <= value < 1, got {rho!r}", "correlation_magnitude")
        if self.correlation_mode not in CORRELATION_MODES:
            raise ValidationError(
                f"must be one of {CORRELATION_MODES}, got {self.correlation_mode!r}",
                "correlation_mode",
            )
        if self.eps is not None and (
            isinstance(self.eps, bool) or not isinstance(self.eps, (int, float)) or not self.eps > 0
        ):
            raise ValidationError(f"must be > 0, got {self.eps!r}", "eps")
        if not isinstance(self.integer_mode, bool):
            raise ValidationError("expected true or false", "integer_mode")

    @classmethod
    def from_mapping(cls, data: dict) -> "SimConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ValidationError("unknown key", unknown[0])
        return cls(**data)

    def to_mapping(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = list(v) if isinstance(v, tuple) else v
        return out

    @property
    def scenario_seed(self) -> int:
        return self.master_seed if self.instance_seed is None else self.instance_seed


def generate_instance(cfg: SimConfig, seed: int) -> Instance:
    """Draw one synthetic instance.

    Prices, demand means, demand standard deviations and the budget fraction
    are uniform on their configured ranges. In ``random_sign`` mode every
    off-diagonal log-demand correlation starts at +/- the configured
    magnitude with equal odds and the matrix is projected to the nearest
    PSD correlation matrix.
    """
    rng = np.random.default_rng(seed)
    T = cfg.horizon
    prices = rng.uniform(*cfg.price_range, size=T)
    means = rng.uniform(*cfg.demand_mean_range, size=T)
    stds = rng.uniform(*cfg.demand_std_range, size=T)
    marginals = [moment_match(m, s) for m, s in zip(means, stds)]
    mu = np.array([m.log_mean for m in marginals])
    log_std = np.array([m.log_std for m in marginals])

    if cfg.correlation_mode == "independent" or T == 1:
        corr = np.eye(T)
    else:
        iu = np.triu_indices(T, k=1)
        signs = rng.choice((-1.0, 1.0), size=iu[0].size)
        raw = np.eye(T)
        raw[iu] = signs * cfg.correlation_magnitude
        raw.T[iu] = raw[iu]
        corr = project_to_correlation(raw)
        if np.linalg.eigvalsh(corr)[0] < -1e-10:
            raise RuntimeError("correlation projection left a negative eigenvalue")
    sigma = np.diag(log_std**2) if cfg.correlation_mode == "independent" else (
        covariance_from_correlation(corr, log_std)
    )

    limit = rng.uniform(*cfg.budget_fraction_range) * float(means.sum())
    if cfg.integer_mode:
        limit = float(max(1, round(limit)))
    return Instance(prices, limit, DemandModel(mu, sigma))


def trial_seed(master_seed: int, trial_index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(master_seed, spawn_key=(trial_index,))


@dataclass(frozen=True, eq=False)
class TrialRecord:
    trial_index: int
    demand_path: Optional[np.ndarray] = None
    allocations: dict = field(default_factory=dict)
    revenues: dict = field(default_factory=dict)
    cumulative: dict = field(default_factory=dict)
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None


def run_trial(inst: Instance, cfg: SimConfig, trial_index: int, static_plan=None) -> TrialRecord:
    try:
        path = sample_paths(inst.model, 1, trial_seed(cfg.master_seed, trial_index))[0]
        results = run_all(inst, path, cfg.eps, cfg.integer_mode, static_plan=static_plan)
    except Exception as exc:  # noqa: BLE001 - reported per trial
        log.warning("trial %d failed: %s", trial_index, exc)
        return TrialRecord(trial_index, error=f"{type(exc).__name__}: {exc}")
    return TrialRecord(
        trial_index,
        demand_path=path,
        allocations={k: r.alloc for k, r in results.items()},
        revenues={k: r.revenue for k, r in results.items()},
        cumulative={k: r.cumulative_revenue for k, r in results.items()},
    )


def run_trials(inst: Instance, cfg: SimConfig, threads: Optional[int] = None) -> list:
    """Run ``cfg.n_trials`` trials; records come back sorted by trial index.

    A trial that raises is returned as a record carrying the error message
    rather than being dropped.
    """
    threads = cfg.threads if threads is None else threads
    static_plan = solve_static(inst, cfg.eps)
    indices = range(cfg.n_trials)
    if threads <= 1:
        records = [run_trial(inst, cfg, i, static_plan) for i in indices]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            records = list(pool.map(lambda i: run_trial(inst, cfg, i, static_plan), indices))
    return sorted(records, key=lambda r: r.trial_index)


@dataclass(frozen=True)
class PolicyStats:
    mean: float
    std: float
    min: float
    max: float


@dataclass(frozen=True, eq=False)
class AggregateReport:
    """Per-policy revenue statistics and mean cumulative-revenue traces.

    Standard deviations use the ``n - 1`` divisor; with a single trial they
    are reported as 0 and ``single_trial`` is set.
    """

    n_trials: int
    n_failed: int
    stats: dict
    trace_mean: dict
    trace_std: dict
    single_trial: bool = False

    @property
    def warnings(self) -> int:
        return self.n_failed + int(self.single_trial)

    def ratio(self, policy: str, reference: str = "oracle") -> float:
        return self.stats[policy].mean / self.stats[reference].mean


def aggregate(records) -> AggregateReport:
    records = sorted(records, key=lambda r: r.trial_index)
    good = [r for r in records if r.ok]
    if not good:
        raise ValidationError("no successful trials to aggregate", "records")
    n = len(good)
    stats, trace_mean, trace_std = {}, {}, {}
    for policy in POLICIES:
        rev = np.array([r.revenues[policy] for r in good])
        cum = np.vstack([r.cumulative[policy] for r in good])
        ddof = 1 if n > 1 else 0
        stats[policy] = PolicyStats(
            mean=float(rev.mean()),
            std=float(rev.std(ddof=ddof)) if n > 1 else 0.0,
            min=float(rev.min()),
            max=float(rev.max()),
        )
        trace_mean[policy] = cum.mean(axis=0)
        trace_std[policy] = cum.std(axis=0, ddof=ddof) if n > 1 else np.zeros(cum.shape[1])
    return AggregateReport(
        n_trials=len(records),
        n_failed=len(records) - n,
        stats=stats,
        trace_mean=trace_mean,
        trace_std=trace_std,
        single_trial=n == 1,
    )


def simulate(cfg: SimConfig, inst: Optional[Instance] = None, threads: Optional[int] = None):
    """Generate (unless given) an instance, run all trials and aggregate."""
    if inst is None:
        inst = generate_instance(cfg, cfg.scenario_seed)
    records = run_trials(inst, cfg, threads)
    return inst, records, aggregate(records)
