"""Random finite models for property tests and experiments.

Models are drawn as exit rate plus jump distribution: ``q_x(a)`` is
Uniform(0, rate_max) and the jump law is Dirichlet on a random support.
"""

from __future__ import annotations

import numpy as np

from .model import CtmdpModel


def _labels(prefix: str, n: int) -> tuple:
    return tuple(f"{prefix}{i}" for i in range(n))


def random_model(rng: np.random.Generator, n_states: int, n_actions: int,
                 rate_max: float = 5.0, cost_max: float = 1.0, density: float = 0.5,
                 n_absorbing: int = 1) -> CtmdpModel:
    """Random model whose first ``n_absorbing`` states are absorbing and cost-free."""
    S, A = int(n_states), int(n_actions)
    rates = np.zeros((S, A, S))
    for x in range(n_absorbing, S):
        for a in range(A):
            support = rng.random(S) < density
            support[x] = False
            if not support.any():
                support[rng.choice([y for y in range(S) if y != x])] = True
            w = np.zeros(S)
            w[support] = rng.dirichlet(np.ones(support.sum()))
            rates[x, a] = rng.uniform(0.0, rate_max) * w
    costs = rng.uniform(0.0, cost_max, (S, A))
    costs[:n_absorbing] = 0.0
    return CtmdpModel(_labels("s", S), _labels("a", A), rates, costs)


def random_margin_model(rng: np.random.Generator, n_states: int, n_actions: int,
                        rate_max: float = 5.0, margin: float = 2.0, **kw) -> CtmdpModel:
    """Random model with q_x(a) > margin * c(x, a) at every non-absorbing state-action."""
    m = random_model(rng, n_states, n_actions, rate_max=rate_max, **kw)
    n_abs = kw.get("n_absorbing", 1)
    q = m.exit_rates
    costs = np.minimum(m.costs, rng.uniform(0.2, 0.95, q.shape) * q / margin)
    costs[:n_abs] = 0.0
    return CtmdpModel(m.states, m.actions, m.rates, costs)


def random_suite(seed: int, count: int, max_states: int = 8, max_actions: int = 4, **kw):
    """``count`` random models with 2..max_states states and 1..max_actions actions."""
    rng = np.random.default_rng(seed)
    return [random_model(rng, rng.integers(2, max_states + 1), rng.integers(1, max_actions + 1),
                         **kw) for _ in range(count)]
