"""Static allocation: maximize expected revenue under a total budget.

The problem ``max sum_t p_t E[min(d_t, a_t)]  s.t.  sum_t a_t = L, a >= 0``
is concave and separable, so its KKT conditions reduce to one scalar
equation in the budget dual ``nu``: each period receives the quantile of
its demand at level ``1 - nu / p_t`` (zero once ``nu >= p_t``). The dual
is found by bisection on ``[0, max(p)]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from seqalloc import kernels
from seqalloc.errors import ValidationError
from seqalloc.prob import DemandModel, expected_min_arrays

DEFAULT_REL_EPS = 1e-9


@dataclass(frozen=True, eq=False)
class Instance:
    """One allocation problem: per-period prices, a budget and a demand model."""

    prices: np.ndarray
    limit: float
    model: DemandModel

    def __post_init__(self):
        prices = np.array(self.prices, dtype=float).reshape(-1)
        if not isinstance(self.model, DemandModel):
            raise ValidationError("expected a DemandModel", "model")
        if prices.size != self.model.horizon:
            raise ValidationError(
                f"{prices.size} prices for a {self.model.horizon}-period model", "prices"
            )
        if not np.all(np.isfinite(prices)) or np.any(prices <= 0):
            bad = int(np.argmax(~(np.isfinite(prices) & (prices > 0))))
            raise ValidationError(f"must be finite and > 0 (period {bad + 1})", "prices")
        limit = float(self.limit)
        if not (np.isfinite(limit) and limit > 0):
            raise ValidationError(f"must be finite and > 0, got {self.limit}", "limit")
        prices.setflags(write=False)
        object.__setattr__(self, "prices", prices)
        object.__setattr__(self, "limit", limit)

    @property
    def horizon(self) -> int:
        return self.prices.size

    def default_eps(self) -> float:
        return DEFAULT_REL_EPS * float(self.prices.max())


@dataclass(frozen=True, eq=False)
class AllocationPlan:
    alloc: np.ndarray
    dual: float
    expected_revenue: float
    iterations: int = 0
    eps: float = 0.0


def expected_revenue(inst: Instance, alloc) -> float:
    """Expected revenue ``sum_t p_t E[min(d_t, a_t)]`` of a fixed allocation."""
    per_period = inst.prices * expected_min_arrays(
        inst.model.log_means, inst.model.log_stds, np.asarray(alloc, dtype=float)
    )
    return float(per_period.sum())


def alloc_from_dual(inst: Instance, nu: float, backend=None) -> np.ndarray:
    """Per-period quantile allocation for dual value ``nu``.

    Periods with ``nu >= p_t`` get zero. At ``nu == 0`` every period asks for
    the upper end of its support, returned as ``inf``.
    """
    if nu < 0:
        raise ValidationError(f"dual must be nonnegative, got {nu}", "nu")
    k = backend or kernels
    return k.alloc_from_dual(inst.prices, inst.model.log_means, inst.model.log_stds, float(nu))


def solve_static(inst: Instance, eps: float | None = None, backend=None) -> AllocationPlan:
    """Solve the static problem by bisection on the budget dual.

    Runs ``ceil(log2(max(p) / eps))`` halvings, then blends the allocations
    at the two bracket ends so the plan sums to the budget exactly.

    Args:
        inst: problem instance.
        eps: accuracy on the dual; defaults to ``1e-9 * max(prices)``.
        backend: kernel module; defaults to the active backend.

    Returns:
        The allocation plan with its dual and expected revenue.
    """
    if eps is None:
        eps = inst.default_eps()
    if not eps > 0:
        raise ValidationError(f"must be > 0, got {eps}", "eps")
    k = backend or kernels
    n_iter = k.n_iterations(float(inst.prices.max()), float(eps))
    alloc, dual = k.bisect(
        inst.prices, inst.model.log_means, inst.model.log_stds, inst.limit, n_iter
    )
    alloc = np.maximum(alloc, 0.0)
    return AllocationPlan(
        alloc=alloc,
        dual=float(dual),
        expected_revenue=expected_revenue(inst, alloc),
        iterations=int(n_iter),
        eps=float(eps),
    )


def round_to_integers(plan, limit: int) -> np.ndarray:
    """Round an allocation to integers summing exactly to ``limit``.

    Every entry is floored, then the missing units go to the largest
    fractional remainders; equal remainders favour the earlier period.
    """
    alloc = np.asarray(getattr(plan, "alloc", plan), dtype=float)
    limit = int(limit)
    if limit < 0:
        raise ValidationError(f"must be >= 0, got {limit}", "limit")
    base = np.floor(np.maximum(alloc, 0.0))
    frac = alloc - base
    out = base.astype(np.int64)
    missing = limit - int(out.sum())
    # stable sort keeps earlier indices first among equal remainders
    if missing > 0:
        order = np.argsort(-frac, kind="stable")
        for i in range(missing):
            out[order[i % out.size]] += 1
    elif missing < 0:
        order = np.argsort(frac, kind="stable")
        i = 0
        while missing < 0:
            j = order[i % out.size]
            if out[j] > 0:
                out[j] -= 1
                missing += 1
            i += 1
    return out
