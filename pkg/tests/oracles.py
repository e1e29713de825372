"""Independent reference computations shared by the test modules."""

import math

import numpy as np
from scipy.integrate import quad

from riskmdp import StationaryPolicy, ValueTable, bellman_apply, evaluate_policy


def sojourn_quadrature(q, c, jm):
    """Adaptive quadrature of int_0^inf e^{-(q-c)t} jm dt (the no-jump term vanishes for q > 0)."""
    val, _ = quad(lambda t: jm * math.exp(-(q - c) * t), 0, math.inf, epsabs=0, epsrel=1e-12,
                  limit=200)
    return val


def random_supersolution(m, rng, n_policies=3, max_push=3):
    """A table U >= 1 with U >= TU by construction.

    Values of stationary policies satisfy V^f = T_f V^f >= T V^f; positive
    scalings >= 1, pointwise minima and further applications of T keep the
    inequality because T is monotone and (on nonabsorbing states) homogeneous.
    """
    tables = []
    for _ in range(n_policies):
        f = StationaryPolicy(m.states, rng.integers(0, m.n_actions, m.n_states), m.actions)
        tables.append(rng.uniform(1.0, 2.0) * evaluate_policy(m, f, tol=1e-13).values)
    U = np.minimum.reduce(tables)
    for _ in range(rng.integers(0, max_push + 1)):
        U = bellman_apply(m, ValueTable(m.states, U)).values
    return U


def is_supersolution(m, U, rel=1e-9):
    TU = bellman_apply(m, ValueTable(m.states, U)).values
    fin = np.isfinite(TU)
    return bool((U[fin] >= TU[fin] * (1 - rel)).all() and np.isinf(U[~fin]).all())
