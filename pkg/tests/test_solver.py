import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from seqalloc.errors import ValidationError
from seqalloc.prob import DemandModel, moment_match
from seqalloc.solver import (
    AllocationPlan,
    Instance,
    alloc_from_dual,
    expected_revenue,
    round_to_integers,
    solve_static,
)
from tests.conftest import random_instance


def iid_instance(prices, limit, mean=50.0, std=20.0):
    m = moment_match(mean, std)
    T = len(prices)
    model = DemandModel(np.full(T, m.log_mean), np.eye(T) * m.log_std**2)
    return Instance(prices, limit, model)


def survival_integral_table(inst, t, upper, step):
    """E[min(d_t, a)] on a grid of ``a`` by integrating the survival function."""
    m = inst.model.marginal(t)
    x = np.linspace(0.0, upper, int(round(upper / step)) * 8 + 1)
    cum = integrate.cumulative_trapezoid(m.survival(x), x, initial=0.0)
    return cum[::8]


def grid_optimum(inst, step):
    """Brute-force best split of the budget for T <= 3 on a ``step`` lattice."""
    T, L = inst.horizon, inst.limit
    n = int(round(L / step))
    tables = [inst.prices[t] * survival_integral_table(inst, t, n * step, step) for t in range(T)]
    if T == 1:
        return tables[0][n], np.array([n * step])
    if T == 2:
        i = np.arange(n + 1)
        obj = tables[0][i] + tables[1][n - i]
        k = int(np.argmax(obj))
        return obj[k], np.array([k, n - k]) * step
    best, arg = -np.inf, None
    for i in range(n + 1):
        j = np.arange(n - i + 1)
        obj = tables[0][i] + tables[1][j] + tables[2][n - i - j]
        k = int(np.argmax(obj))
        if obj[k] > best:
            best, arg = obj[k], np.array([i, j[k], n - i - j[k]]) * step
    return best, arg


# -- alloc_from_dual ---------------------------------------------------------

def test_alloc_from_dual_at_max_price_is_zero(backend):
    inst = iid_instance([10.0, 40.0, 25.0], 30.0)
    assert np.array_equal(alloc_from_dual(inst, 40.0, backend=backend), np.zeros(3))


def test_alloc_from_dual_zero_is_infinite(backend):
    inst = iid_instance([10.0, 40.0], 30.0)
    assert np.all(np.isinf(alloc_from_dual(inst, 0.0, backend=backend)))


def test_alloc_from_dual_median(backend):
    inst = Instance([10.0], 1.0, DemandModel([0.0], [[1.0]]))
    assert alloc_from_dual(inst, 5.0, backend=backend)[0] == pytest.approx(1.0, abs=1e-15)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.lists(st.floats(0.0, 1.0), min_size=2, max_size=20))
def test_alloc_from_dual_monotone(seed, fractions):
    inst = random_instance(np.random.default_rng(seed), 12)
    nus = np.sort(np.array(fractions)) * inst.prices.max() + 1e-9
    sums = [alloc_from_dual(inst, nu).sum() for nu in nus]
    per = np.array([alloc_from_dual(inst, nu) for nu in nus])
    assert np.all(np.diff(sums) <= 1e-9 * max(sums[0], 1))
    assert np.all(np.diff(per, axis=0) <= 1e-9)


def test_alloc_from_dual_rejects_negative():
    with pytest.raises(ValidationError):
        alloc_from_dual(iid_instance([1.0], 1.0), -1.0)


# -- solve_static ------------------------------------------------------------

@pytest.mark.parametrize("limit", [1.0, 37.5, 120.0, 1e4])
def test_symmetric_two_periods_split_evenly(backend, limit):
    plan = solve_static(iid_instance([30.0, 30.0], limit), backend=backend)
    np.testing.assert_allclose(plan.alloc, [limit / 2, limit / 2], atol=1e-6 * limit)


@pytest.mark.parametrize("price,limit,mean", [(10, 5, 50), (99, 300, 20), (1, 0.01, 80)])
def test_single_period_takes_whole_budget(backend, price, limit, mean):
    plan = solve_static(iid_instance([price], limit, mean=mean), backend=backend)
    assert plan.alloc.tolist() == [limit]


def test_three_period_example_matches_grid_oracle(backend):
    inst = iid_instance([10.0, 50.0, 100.0], 60.0)
    plan = solve_static(inst, backend=backend)
    # grid search with 0.01-unit steps, objective from survival quadrature
    np.testing.assert_allclose(plan.alloc, [0.0, 13.56, 46.44], atol=0.05)
    assert plan.expected_revenue == pytest.approx(4750.079392664178, rel=1e-6)


def test_plan_fields():
    inst = iid_instance([10.0, 50.0, 100.0], 60.0)
    plan = solve_static(inst, eps=1e-3)
    assert isinstance(plan, AllocationPlan)
    assert plan.iterations == math.ceil(math.log2(100.0 / 1e-3))
    assert 0 <= plan.dual <= inst.prices.max()
    assert plan.expected_revenue == pytest.approx(expected_revenue(inst, plan.alloc))


def test_dual_within_eps_of_root():
    inst = iid_instance([10.0, 50.0, 100.0], 60.0)
    fine = solve_static(inst, eps=1e-12)
    for eps in (1e-1, 1e-3, 1e-6):
        assert abs(solve_static(inst, eps=eps).dual - fine.dual) <= eps


@pytest.mark.parametrize("seed", range(40))
def test_feasibility_and_kkt(backend, seed):
    rng = np.random.default_rng(seed)
    T = int(rng.integers(1, 201))
    inst = random_instance(rng, T, correlated=bool(seed % 2))
    plan = solve_static(inst, backend=backend)
    assert np.all(plan.alloc >= 0)
    assert abs(plan.alloc.sum() - inst.limit) <= 1e-9 * inst.limit
    pos = plan.alloc > 0
    surv = np.array([inst.model.marginal(t).survival(plan.alloc[t]) for t in np.flatnonzero(pos)])
    resid = np.abs(inst.prices[pos] * surv - plan.dual)
    assert np.all(resid <= plan.eps * (1 + inst.prices[pos]))


def test_price_dominance_with_identical_marginals():
    rng = np.random.default_rng(1)
    prices = rng.uniform(10, 100, 25)
    plan = solve_static(iid_instance(prices, 400.0))
    order = np.argsort(prices)
    assert np.all(np.diff(plan.alloc[order]) >= -1e-9)


@pytest.mark.parametrize("seed", range(6))
def test_objective_matches_grid_oracle(seed):
    rng = np.random.default_rng(100 + seed)
    T = 2 + seed % 2
    inst = random_instance(rng, T, correlated=False)
    plan = solve_static(inst)
    best, _ = grid_optimum(inst, step=inst.limit / (4000 if T == 2 else 400))
    assert plan.expected_revenue >= best * (1 - 1e-3)
    assert plan.expected_revenue <= best * (1 + 1e-3)


@pytest.mark.parametrize("seed", range(5))
def test_expected_revenue_midpoint_concave(seed):
    rng = np.random.default_rng(seed)
    inst = random_instance(rng, 8)
    for _ in range(50):
        a = rng.dirichlet(np.ones(8)) * inst.limit
        b = rng.dirichlet(np.ones(8)) * inst.limit
        mid = expected_revenue(inst, 0.5 * (a + b))
        chord = 0.5 * (expected_revenue(inst, a) + expected_revenue(inst, b))
        assert mid >= chord - 1e-9 * abs(chord)


def test_huge_budget_still_feasible(backend):
    # budget far beyond the 1 - 1e-9 quantiles of every period
    inst = iid_instance([20.0, 30.0], 1e9, mean=10.0, std=2.0)
    plan = solve_static(inst, backend=backend)
    assert plan.alloc.sum() == pytest.approx(1e9, rel=1e-12)
    assert np.all(plan.alloc >= 0)


def test_validation_errors():
    with pytest.raises(ValidationError, match="prices"):
        iid_instance([10.0, -1.0], 5.0)
    with pytest.raises(ValidationError, match="limit"):
        iid_instance([10.0], 0.0)
    with pytest.raises(ValidationError, match="prices"):
        Instance([1.0, 2.0], 1.0, DemandModel([0.0], [[1.0]]))
    with pytest.raises(ValidationError, match="eps"):
        solve_static(iid_instance([1.0], 1.0), eps=0.0)


# -- integer rounding --------------------------------------------------------

@pytest.mark.parametrize(
    "alloc,limit,expected",
    [
        ((2.0, 3.0, 5.0), 10, (2, 3, 5)),
        ((2.5, 2.5, 5.0), 10, (3, 2, 5)),
        ((0.4, 0.3, 0.3), 1, (1, 0, 0)),
    ],
)
def test_round_examples(alloc, limit, expected):
    assert round_to_integers(np.array(alloc), limit).tolist() == list(expected)


def test_round_accepts_plan():
    plan = AllocationPlan(np.array([1.5, 1.5]), 0.0, 0.0)
    assert round_to_integers(plan, 3).tolist() == [2, 1]


@settings(max_examples=100)
@given(st.integers(1, 30), st.integers(0, 2**31 - 1), st.integers(0, 500))
def test_round_properties(T, seed, limit):
    rng = np.random.default_rng(seed)
    alloc = rng.dirichlet(np.ones(T)) * limit
    out = round_to_integers(alloc, limit)
    assert out.sum() == limit
    assert np.all(out >= 0)
    assert np.max(np.abs(out - alloc)) <= 1 + 1e-9
