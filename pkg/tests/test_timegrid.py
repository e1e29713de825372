import math

import numpy as np
import pytest
from scipy.integrate import quad

from riskmdp import CtmdpModel, TerminalCost, augment_discounted, augment_finite_horizon
from riskmdp.model import TimeVaryingModel
from riskmdp.timefn import TimeFn
from riskmdp.timegrid import (BackwardIntegrationError, discounted_value, extract_markov_policy,
                              finite_horizon_value, solve_backward, tail_bound,
                              truncation_horizon)

from conftest import make_model


def single(cost=1.0):
    return CtmdpModel(("x",), ("a",), np.zeros((1, 1, 1)), np.array([[cost]]))


@pytest.mark.parametrize("c0, T", [(1.0, 1.0), (0.3, 4.0)])
def test_constant_cost_exponential(c0, T):
    g = finite_horizon_value(single(c0), T, 0.0, TerminalCost([0.0]), step=1e-3)
    assert abs(g.values[0, 0] - math.exp(c0 * T)) <= 1e-6
    np.testing.assert_allclose(g.values[:, 0], np.exp(c0 * (T - g.times)), rtol=1e-10)


def test_discounted_cost_closed_form():
    c0, alpha, T = 1.5, 0.7, 2.0
    aug = augment_discounted(single(c0), alpha)
    out = solve_backward(aug, np.linspace(0, T, 401), [1.0])
    assert out.values[0, 0] == pytest.approx(math.exp(c0 * (1 - math.exp(-alpha * T)) / alpha),
                                             rel=1e-10)


def test_zero_cost_stays_at_one(zero_cost):
    g = finite_horizon_value(zero_cost, 2.0, 0.5, TerminalCost([0.0] * 4), step=1e-2)
    np.testing.assert_allclose(g.values, 1.0, atol=1e-12)


def test_zero_horizon_is_terminal(chain):
    g = finite_horizon_value(chain, 0.0, 0.0, TerminalCost([0.0, 1.0]))
    assert g.times.tolist() == [0.0]
    assert g.values[0].tolist() == [1.0, math.e]


def test_constant_terminal_utility(chain):
    m = chain.with_costs([[0.0], [0.0]])
    g = finite_horizon_value(m, 1.0, 0.0, TerminalCost([math.log(2)] * 2), step=1e-2)
    np.testing.assert_allclose(g.values, 2.0, rtol=1e-12)


def test_chain_finite_horizon_closed_form(chain):
    # E[exp(min(tau, 1)) * 3^{1(tau > 1)}], tau ~ Exp(2)
    g = finite_horizon_value(chain, 1.0, 0.0, TerminalCost([0.0, math.log(3)]), step=1e-3)
    expected = 2 * (1 - math.exp(-1)) + 3 * math.exp(-1)
    assert g.values[0, 1] == pytest.approx(expected, rel=1e-10)
    assert g.values[0, 0] == pytest.approx(1.0, rel=1e-12)


def test_time_varying_rate_matches_quadrature():
    # hazard 1 + t on [0, 1), 3 afterwards; cost 0.5 until absorption or T = 2
    q = TimeFn.from_spec([(1.0, [1.0, 1.0]), (None, [3.0])])
    zero = TimeFn.constant(0.0)
    m = TimeVaryingModel(("0", "1"), ("a",), [[[zero, zero]], [[q, zero]]],
                         [[zero], [TimeFn.constant(0.5)]])
    T, c = 2.0, 0.5
    def surv(t): return math.exp(-q.integral(0, t))
    jump, _ = quad(lambda t: q(t) * surv(t) * math.exp(c * t), 0, T, points=[1.0],
                   epsabs=0, epsrel=1e-12)
    expected = jump + surv(T) * math.exp(c * T)
    g = finite_horizon_value(m, T, 0.0, TerminalCost([0.0, 0.0]), step=1e-3)
    assert g.values[0, 1] == pytest.approx(expected, rel=1e-9)


def test_richardson_order():
    m = single(1.0)
    err = [abs(finite_horizon_value(m, 1.0, 0.0, TerminalCost([0.0]), step=h).values[0, 0]
               - math.e) for h in (1e-2, 5e-3, 2.5e-3)]
    assert err[0] / err[1] >= 8 and err[1] / err[2] >= 8


def test_floor_violation_raises():
    # a negative cost bypasses validation here and drives the value below 1
    m = CtmdpModel(("x",), ("a",), np.zeros((1, 1, 1)), np.array([[-1.0]]))
    with pytest.raises(BackwardIntegrationError):
        finite_horizon_value(m, 1.0, 0.0, TerminalCost([0.0]), step=1e-2)


def test_grid_must_end_at_horizon(chain):
    with pytest.raises(ValueError):
        finite_horizon_value(chain, 1.0, 0.0, TerminalCost([0, 0]), grid=[0.0, 0.5])


def test_discounted_single_state():
    L, grid = discounted_value(single(1.0), 1.0, tail_tol=1e-8, grid_step=1e-2)
    T_h = grid.meta["truncation_horizon"]
    assert abs(L.values[0] - math.exp(1 - math.exp(-T_h))) <= 1e-6
    assert abs(L.values[0] - math.e) <= 2e-6
    assert grid.meta["error_bound"][0] < 1e-6
    band = tail_bound(1.0, 1.0, grid.times)
    assert (grid.values[:, 0] >= 1 - 1e-9).all() and (grid.values[:, 0] <= band + 1e-9).all()


def test_discounted_zero_cost(zero_cost):
    L, _ = discounted_value(zero_cost, 2.0)
    np.testing.assert_array_equal(L.values, 1.0)


def test_discounted_chain_matches_quadrature(chain):
    # E[exp(int_0^tau e^{-t} dt)] = int 2 e^{-2t} exp(1 - e^{-t}) dt, tau ~ Exp(2)
    expected, _ = quad(lambda t: 2 * math.exp(-2 * t) * math.exp(1 - math.exp(-t)), 0, math.inf,
                       epsabs=0, epsrel=1e-13)
    L, grid = discounted_value(chain, 1.0, tail_tol=1e-10, grid_step=1e-2)
    assert L.values[1] == pytest.approx(expected, rel=1e-8)


def test_truncation_horizon_meets_tolerance():
    for c, a, tol in [(1.0, 1.0, 1e-8), (3.0, 0.2, 1e-6)]:
        T = truncation_horizon(c, a, tol)
        assert tail_bound(c, a, T) - 1 == pytest.approx(tol, rel=1e-6)


# -- Markov policies ------------------------------------------------------------

def test_single_action_policy(chain):
    g = finite_horizon_value(chain, 1.0, 0.0, TerminalCost([0, 0]), step=1e-2)
    pol = extract_markov_policy(chain, g)
    assert (pol.actions == 0).all()


def test_cheaper_action_everywhere():
    m = make_model(["0", "1"], ["dear", "cheap"],
                   {("1", "dear", "0"): 1.0, ("1", "cheap", "0"): 1.0},
                   {("1", "dear"): 0.6, ("1", "cheap"): 0.5})
    L, grid = discounted_value(m, 1.0, grid_step=1e-2)
    pol = extract_markov_policy(augment_discounted(m, 1.0), grid)
    assert (pol.actions[:, 1] == 1).all()


def test_policy_switches_when_costs_cross():
    t_star = 0.5
    zero = TimeFn.constant(0.0)
    one = TimeFn.constant(1.0)
    early = TimeFn.from_spec([(t_star, [0.2]), (None, [0.8])])
    late = TimeFn.from_spec([(t_star, [0.8]), (None, [0.2])])
    m = TimeVaryingModel(("0", "1"), ("a1", "a2"), [[[zero, zero]] * 2, [[one, zero]] * 2],
                         [[zero, zero], [early, late]])
    T = 1.0
    g = finite_horizon_value(m, T, 0.0, TerminalCost([0, 0]), step=1e-2)
    pol = extract_markov_policy(augment_finite_horizon(m, T, 0.0, TerminalCost([0, 0])), g)
    a = pol.actions[:, 1]
    k = int(np.argmin(np.abs(g.times - t_star)))
    assert (a[:k] == 0).all() and (a[k:-1] == 1).all()


def test_terminal_values_exact(chain):
    g = TerminalCost([0.3, 1.7])
    out = finite_horizon_value(chain, 0.7, 0.2, g, step=0.05)
    assert out.values[-1].tolist() == np.exp(g.as_array()).tolist()


@pytest.mark.parametrize("c, alpha", [(1.0, 1.0), (0.4, 2.0), (2.0, 0.8)])
def test_discounted_limit_closed_form(c, alpha):
    tail_tol = 1e-8
    L, _ = discounted_value(single(c), alpha, tail_tol=tail_tol, grid_step=1e-2)
    exact = math.exp(c / alpha)
    assert abs(L.values[0] - exact) <= tail_tol * exact + 1e-6
