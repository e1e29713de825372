import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from riskmdp import (StationaryPolicy, ValueTable, classify_states,
                     evaluate_policy, extract_policy, residual, value_iteration)
from riskmdp.generators import random_model
from riskmdp.stationary import iterate_policy

from conftest import make_model
from oracles import is_supersolution, random_supersolution


def test_chain_reaches_mgf(chain):
    V, tr = value_iteration(chain, tol=1e-12)
    assert V.values.tolist() == [1.0, 2.0]
    assert tr.converged and tr.converged_at == 1 and tr.iterations == 2
    assert residual(chain, V) == {"0": 0.0, "1": 0.0}


def test_zero_cost_converges_immediately(zero_cost):
    V, tr = value_iteration(zero_cost)
    assert V.values.tolist() == [1.0] * 4
    assert tr.converged_at == 0


def test_residual_at_one(chain, zero_cost):
    assert residual(chain, ValueTable.ones(chain.states))["1"] == 1.0
    assert set(residual(zero_cost, ValueTable.ones(zero_cost.states)).values()) == {0.0}


def test_two_action_policy(two_action):
    V, _ = value_iteration(two_action)
    assert V.values[1] == pytest.approx(4 / 3, rel=1e-14)
    f = extract_policy(two_action, V)
    assert f["1"] == "a2"
    a1 = StationaryPolicy.from_labels(two_action, {"0": "a1", "1": "a1"})
    assert evaluate_policy(two_action, a1).values[1] == pytest.approx(2.0, rel=1e-14)


def test_optimal_policy_value_equals_optimum(chain):
    V, _ = value_iteration(chain)
    np.testing.assert_array_equal(evaluate_policy(chain, extract_policy(chain, V)).values,
                                  V.values)


def test_single_action_and_ties():
    dup = make_model(["0", "1"], ["p", "q"], {("1", "p", "0"): 3.0, ("1", "q", "0"): 3.0},
                     {("1", "p"): 1.0, ("1", "q"): 1.0})
    V, _ = value_iteration(dup)
    assert extract_policy(dup, V).actions.tolist() == [0, 0]


def test_trap_classification(trap):
    V, tr = value_iteration(trap)
    part = classify_states(trap, V, tr)
    assert set(part.infinite_exact) == {"trap", "up", "up2"}
    assert part.infinite_suspected == ()
    assert set(part.finite) == {"0", "safe"}
    first = dict(zip(trap.states, tr.first_inf_iter))
    assert (first["trap"], first["up"], first["up2"]) == (1, 2, 3)
    f = extract_policy(trap, V)
    assert f["safe"] == "a"
    assert f.unconstrained.tolist() == [False, True, True, True, False]


def test_policy_into_trap_is_infinite(trap):
    f = StationaryPolicy.from_labels(trap, {x: "a" for x in trap.states})
    V = evaluate_policy(trap, f)
    assert np.isinf(V.values[[1, 2, 3]]).all() and np.isfinite(V.values[[0, 4]]).all()


def test_geometric_cycle_is_suspected():
    # per-cycle growth factor (q/(q-c))^2 = 4 with q > c everywhere: no exact certificate
    m = make_model(["x", "y"], ["a"], {("x", "a", "y"): 1.0, ("y", "a", "x"): 1.0},
                   {("x", "a"): 0.5, ("y", "a"): 0.5})
    V, tr = value_iteration(m, cap=1e15)
    part = classify_states(m, V, tr)
    assert part.infinite_suspected == ("x", "y") and part.infinite_exact == ()
    assert tr.capped.all() and tr.converged
    n = math.ceil(math.log(1e15) / math.log(2))
    assert tr.first_inf_iter.tolist() == [n, n]


def test_nonconvergence_reported_not_raised():
    leaky = make_model(["0", "x", "y"], ["a"],
                       {("x", "a", "y"): 1.0, ("y", "a", "x"): 0.9, ("y", "a", "0"): 0.1},
                       {("x", "a"): 0.1, ("y", "a"): 0.1})
    V, tr = value_iteration(leaky, tol=1e-12, max_iter=3)
    assert not tr.converged and tr.iterations == 3 and tr.converged_at is None


def test_bad_arguments(chain):
    with pytest.raises(ValueError):
        value_iteration(chain, tol=0)


models = st.builds(lambda seed, S, A: random_model(np.random.default_rng(seed), S, A),
                   st.integers(0, 2**32 - 1), st.integers(2, 8), st.integers(1, 4))


@settings(max_examples=60, deadline=None)
@given(models)
def test_iterates_increase(m):
    bad = []

    def check(n, V, TV):
        if not (TV >= V).all():
            bad.append(n)
    _, tr = value_iteration(m, tol=1e-10, callback=check)
    assert bad == []
    assert len(tr.deltas) == tr.iterations


@settings(max_examples=60, deadline=None)
@given(models)
def test_fixed_point_and_policy(m):
    tol = 1e-10
    V, tr = value_iteration(m, tol=tol)
    if not tr.converged:
        return
    fin = np.isfinite(V.values)
    res = [abs(r) for r in residual(m, V).values() if r is not None]
    assert max(res, default=0.0) <= 10 * tol
    W = evaluate_policy(m, extract_policy(m, V), tol=tol)
    np.testing.assert_array_equal(np.isfinite(W.values), fin)
    assert np.abs(W.values[fin] - V.values[fin]).max(initial=0) <= 10 * tol


@settings(max_examples=60, deadline=None)
@given(models, st.integers(0, 2**32 - 1))
def test_minimality(m, seed):
    V, tr = value_iteration(m, tol=1e-12)
    if not tr.converged:
        return
    U = random_supersolution(m, np.random.default_rng(seed))
    assert is_supersolution(m, U)
    assert (U >= V.values * (1 - 1e-12)).all()


def test_policy_iteration_trace(chain):
    f = StationaryPolicy.from_labels(chain, {"0": "go", "1": "go"})
    V, tr = iterate_policy(chain, f)
    assert tr.converged and V.values.tolist() == [1.0, 2.0]
