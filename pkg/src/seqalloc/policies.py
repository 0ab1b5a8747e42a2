"""Allocation policies evaluated on a realized demand path.

* static: the open-loop plan fixed before any demand is seen.
* sequential: shrinking-horizon re-planning on the conditional demand
  distribution given everything observed so far.
* roll_forward: causal baseline replaying the last observed demand.
* oracle: prescient per-path optimum, an upper bound for the others.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from seqalloc import kernels
from seqalloc.errors import ValidationError
from seqalloc.prob import condition
from seqalloc.solver import AllocationPlan, Instance, round_to_integers, solve_static

POLICIES = ("static", "sequential", "roll_forward", "oracle")


@dataclass(frozen=True, eq=False)
class PolicyResult:
    name: str
    alloc: np.ndarray
    per_period_revenue: np.ndarray

    @property
    def revenue(self) -> float:
        return float(self.per_period_revenue.sum())

    @property
    def cumulative_revenue(self) -> np.ndarray:
        return np.cumsum(self.per_period_revenue)


def _check_path(inst: Instance, demand_path) -> np.ndarray:
    d = np.asarray(demand_path, dtype=float).reshape(-1)
    if d.size != inst.horizon:
        raise ValidationError(f"expected {inst.horizon} demands, got {d.size}", "demand_path")
    if np.any(~(d > 0)) or not np.all(np.isfinite(d)):
        raise ValidationError("demands must be finite and > 0", "demand_path")
    return d


def _integer_limit(inst: Instance) -> int:
    if inst.limit != round(inst.limit):
        raise ValidationError(f"integer mode needs an integral budget, got {inst.limit}", "limit")
    return int(round(inst.limit))


def _result(name, inst, alloc, d) -> PolicyResult:
    alloc = np.asarray(alloc, dtype=float)
    return PolicyResult(name, alloc, inst.prices * np.minimum(d, alloc))


def run_static(inst, demand_path, eps=None, integer=False, plan: AllocationPlan | None = None,
               backend=None) -> PolicyResult:
    """Open-loop policy; ``plan`` may carry a precomputed static solution."""
    d = _check_path(inst, demand_path)
    if plan is None:
        plan = solve_static(inst, eps, backend=backend)
    alloc = round_to_integers(plan, _integer_limit(inst)) if integer else plan.alloc
    return _result("static", inst, alloc, d)


def _prefix_conditionals(model, log_path):
    """Yield ``(means, stds)`` of periods ``tau..T-1`` given periods ``< tau``.

    Walks the jittered Cholesky factor of the model the same way the
    sequential kernel does, in O(T) work per period.
    """
    chol = model.cholesky
    m = np.array(model.mu, dtype=float)
    var = np.einsum("ij,ij->i", chol, chol)
    for tau in range(model.horizon):
        if tau > 0:
            j = tau - 1
            z = (log_path[j] - m[j]) / chol[j, j] if chol[j, j] > 0 else 0.0
            m[tau:] += chol[tau:, j] * z
            var[tau:] -= chol[tau:, j] ** 2
        yield m[tau:], np.sqrt(np.maximum(var[tau:], 0.0))


def _full_conditionals(model, demand_path):
    for tau in range(model.horizon):
        cond = condition(model, [(j, demand_path[j]) for j in range(tau)])
        yield cond.log_means, cond.log_stds


def run_sequential(inst, demand_path, eps=None, integer=False, conditioning="cholesky",
                   backend=None) -> PolicyResult:
    """Shrinking-horizon policy.

    At period ``tau`` the residual problem over ``tau..T-1`` is solved with
    the remaining budget and the demand distribution conditioned on the
    demands already seen; only its first allocation is committed.

    ``conditioning="cholesky"`` updates the conditional marginals
    incrementally from the model's Cholesky factor. ``"full"`` re-applies
    the partitioned Gaussian formulas to the whole history at every period
    (O(t^3) per step) and serves as a cross-check.
    """
    d = _check_path(inst, demand_path)
    if eps is None:
        eps = inst.default_eps()
    k = backend or kernels
    T = inst.horizon
    if conditioning not in ("cholesky", "full"):
        raise ValidationError(f"unknown conditioning {conditioning!r}", "conditioning")

    if not integer and conditioning == "cholesky":
        alloc = k.sequential_episode(
            inst.prices, inst.model.mu, inst.model.cholesky, inst.limit, np.log(d), float(eps)
        )
        return _result("sequential", inst, alloc, d)

    if conditioning == "cholesky":
        marginals = _prefix_conditionals(inst.model, np.log(d))
    else:
        marginals = _full_conditionals(inst.model, d)
    remaining = _integer_limit(inst) if integer else inst.limit
    alloc = np.zeros(T)
    for tau, (means, stds) in enumerate(marginals):
        if remaining <= 0:
            break
        if tau == T - 1:
            a = remaining
        else:
            p = inst.prices[tau:]
            plan, _ = k.bisect(p, means, stds, float(remaining), k.n_iterations(p.max(), eps))
            a = round_to_integers(plan, remaining)[0] if integer else min(plan[0], remaining)
        alloc[tau] = a
        remaining -= a
    return _result("sequential", inst, alloc, d)


def run_roll_forward(inst, demand_path) -> PolicyResult:
    """Allocate ``L/T`` first, then the previous period's demand while budget lasts.

    Budget left after the final period is stranded.
    """
    d = _check_path(inst, demand_path)
    T = inst.horizon
    alloc = np.zeros(T)
    alloc[0] = inst.limit / T
    remaining = inst.limit - alloc[0]
    for t in range(1, T):
        a = d[t - 1] if remaining > d[t - 1] else remaining
        alloc[t] = a
        remaining -= a
    return _result("roll_forward", inst, alloc, d)


def run_oracle(inst, demand_path) -> PolicyResult:
    """Prescient optimum for a known path.

    Periods are filled greedily by decreasing price (earlier period first
    on ties). Budget left once all demand is met goes to the highest-price
    period, where it earns nothing but keeps the allocation summing to L.
    """
    d = _check_path(inst, demand_path)
    order = np.argsort(-inst.prices, kind="stable")
    alloc = np.zeros(inst.horizon)
    remaining = inst.limit
    for t in order:
        if remaining <= 0:
            break
        a = min(d[t], remaining)
        alloc[t] = a
        remaining -= a
    if remaining > 0:
        alloc[order[0]] += remaining
    return _result("oracle", inst, alloc, d)


def run_all(inst, demand_path, eps=None, integer=False, static_plan=None, backend=None):
    """Evaluate every policy on one path; returns ``{name: PolicyResult}``."""
    return {
        "static": run_static(inst, demand_path, eps, integer, plan=static_plan, backend=backend),
        "sequential": run_sequential(inst, demand_path, eps, integer, backend=backend),
        "roll_forward": run_roll_forward(inst, demand_path),
        "oracle": run_oracle(inst, demand_path),
    }
