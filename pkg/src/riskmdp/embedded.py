"""Exponential-utility Bellman operator of the embedded jump chain.

For a constant action the sojourn in ``x`` is Exp(q) and the cost accrues
at rate ``c``, so the one-step utility

    int_0^inf e^{-(q - c) t} * sum_y qt(y|x,a) V(y) dt  +  e^{-Q} e^{C}

has the closed form implemented by :func:`sojourn_value`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .extreal import INF, ONE, ExtReal, xdiv, xdot_array
from .model import CtmdpModel


@dataclass(frozen=True, eq=False)
class ValueTable:
    """Utility values per state, ``np.inf`` marking infinite entries."""

    states: tuple
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (len(self.states),):
            raise ValueError("one value per state required")
        if np.isnan(v).any():
            raise ValueError("NaN in value table")
        v.setflags(write=False)
        object.__setattr__(self, "states", tuple(self.states))
        object.__setattr__(self, "values", v)

    @classmethod
    def ones(cls, states) -> "ValueTable":
        return cls(states, np.ones(len(states)))

    def __getitem__(self, state) -> ExtReal:
        return ExtReal(self.values[self.states.index(state)])

    def __len__(self) -> int:
        return len(self.states)

    def items(self):
        return ((x, ExtReal(v)) for x, v in zip(self.states, self.values))

    @property
    def finite(self) -> np.ndarray:
        return np.isfinite(self.values)

    def to_json(self) -> dict:
        return {str(x): ExtReal(v).to_json() for x, v in zip(self.states, self.values)}

    @classmethod
    def from_json(cls, states, obj: dict) -> "ValueTable":
        return cls(states, [float(ExtReal.from_json(obj[str(x)])) for x in states])


def sojourn_value(q, c, jump_mass) -> ExtReal:
    """Closed-form utility of one sojourn with constant rate ``q`` and cost ``c``.

    ``jump_mass`` is sum_y qt(y) V(y). Divergent integrals return inf.
    """
    q, c, jm = ExtReal(q), ExtReal(c), ExtReal(jump_mass)
    if q.is_inf or c.is_inf:
        raise ValueError("sojourn rates must be finite")
    qf, cf = float(q), float(c)
    if qf == 0.0:
        if not jm.is_zero:
            raise ValueError("positive jump mass with zero exit rate")
        return ONE if cf == 0.0 else INF
    if qf <= cf:
        return INF
    return xdiv(jm, ExtReal(qf - cf))


def sojourn_array(q, c, jump_mass) -> np.ndarray:
    """Vectorized :func:`sojourn_value` on float arrays."""
    q, c, jm = np.broadcast_arrays(*(np.asarray(z, dtype=float) for z in (q, c, jump_mass)))
    out = np.full(q.shape, np.inf)
    absorbing = q == 0.0
    out[absorbing & (c == 0.0)] = 1.0
    ok = q > c
    with np.errstate(divide="ignore", invalid="ignore"):
        out[ok] = np.where(jm[ok] == 0.0, 0.0, jm[ok] / (q[ok] - c[ok]))
    return out


def jump_masses(m: CtmdpModel, V) -> np.ndarray:
    """sum_y qt(y|x,a) V(y) with 0*inf = 0, shape (S, A)."""
    return xdot_array(m.rates, np.asarray(V, dtype=float))


def action_values(m: CtmdpModel, V) -> np.ndarray:
    """Per-(state, action) one-step utility, shape (S, A)."""
    values = V.values if isinstance(V, ValueTable) else V
    return sojourn_array(m.exit_rates, m.costs, jump_masses(m, values))


def _check_floor(V: ValueTable):
    if (V.values < 1.0).any():
        raise ValueError("value tables must be >= 1 everywhere")


def bellman_apply(m: CtmdpModel, V: ValueTable) -> ValueTable:
    """(TV)(x) = min_a sojourn utility; ties are irrelevant for the value."""
    _check_floor(V)
    return ValueTable(m.states, action_values(m, V).min(axis=1))


def bellman_apply_policy(m: CtmdpModel, policy, V: ValueTable) -> ValueTable:
    """Operator restricted to a stationary selector (``policy.actions``: index per state)."""
    _check_floor(V)
    f = np.asarray(policy.actions if hasattr(policy, "actions") else policy, dtype=int)
    if f.shape != (m.n_states,) or (f < 0).any() or (f >= m.n_actions).any():
        raise ValueError("policy must map every state to a valid action index")
    # same kernel as bellman_apply, so a greedy selector reproduces it bit for bit
    return ValueTable(m.states, action_values(m, V)[np.arange(m.n_states), f])
