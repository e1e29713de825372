"""Value iteration and stationary policies for homogeneous models."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .embedded import ValueTable, jump_masses, sojourn_array
from .extreal import xdot_array
from .model import CtmdpModel

DEFAULT_CAP = 1e15


@dataclass(frozen=True, eq=False)
class StationaryPolicy:
    """Deterministic stationary selector: one action index per state.

    ``unconstrained`` marks states of infinite value, where any action is
    as good as any other and the choice is only a deterministic tie-break.
    """

    states: tuple
    actions: np.ndarray
    action_labels: tuple = ()
    unconstrained: Optional[np.ndarray] = None

    def __post_init__(self):
        a = np.array(self.actions, dtype=int)
        if a.shape != (len(self.states),):
            raise ValueError("policy must assign one action per state")
        if self.action_labels and ((a < 0).any() or (a >= len(self.action_labels)).any()):
            raise ValueError("policy action index out of range")
        a.setflags(write=False)
        object.__setattr__(self, "actions", a)
        object.__setattr__(self, "states", tuple(self.states))
        object.__setattr__(self, "action_labels", tuple(self.action_labels))
        if self.unconstrained is None:
            object.__setattr__(self, "unconstrained", np.zeros(len(a), dtype=bool))

    def __getitem__(self, state):
        i = self.actions[self.states.index(state)]
        return self.action_labels[i] if self.action_labels else int(i)

    @classmethod
    def from_labels(cls, m: CtmdpModel, mapping: dict) -> "StationaryPolicy":
        idx = []
        for x in m.states:
            key = x if x in mapping else str(x)
            if key not in mapping:
                raise ValueError(f"policy has no action for state {x!r}")
            a = mapping[key]
            if a in m.actions:
                idx.append(m.actions.index(a))
            elif isinstance(a, int) and 0 <= a < m.n_actions:
                idx.append(a)
            else:
                raise ValueError(f"unknown action {a!r} for state {x!r}")
        return cls(m.states, idx, m.actions)

    def to_json(self) -> dict:
        labels = self.action_labels or tuple(range(self.actions.max(initial=0) + 1))
        return {str(x): labels[a] for x, a in zip(self.states, self.actions)}


@dataclass
class IterationTrace:
    deltas: list = field(default_factory=list)
    inf_counts: list = field(default_factory=list)
    wall_times: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    # index n of the returned iterate V^(n); it equals V^(n+1) within tol
    converged_at: Optional[int] = None
    first_inf_iter: Optional[np.ndarray] = None
    inf_exact: Optional[np.ndarray] = None
    capped: Optional[np.ndarray] = None

    def rows(self):
        return list(zip(range(1, self.iterations + 1), self.deltas, self.inf_counts))

    def to_json(self) -> dict:
        return {
            "iterations": self.iterations,
            "converged": self.converged,
            "converged_at": self.converged_at,
            "deltas": [float(d) for d in self.deltas],
            "inf_counts": [int(c) for c in self.inf_counts],
            "wall_times": [float(t) for t in self.wall_times],
        }


@dataclass(frozen=True)
class StatePartition:
    finite: tuple
    infinite_exact: tuple
    infinite_suspected: tuple

    def to_json(self) -> dict:
        return {"finite": list(map(str, self.finite)),
                "infinite_exact": list(map(str, self.infinite_exact)),
                "infinite_suspected": list(map(str, self.infinite_suspected))}


def _certified_infinite(m: CtmdpModel, rates, q, c, V, exact):
    """Per-(x, a) flag: infinite value with a certificate that needs no cap.

    Either the sojourn integral itself diverges, or the action jumps with
    positive rate into a state already certified infinite.
    """
    divergent = ((q == 0.0) & (c > 0.0)) | ((q > 0.0) & (q <= c))
    certified_targets = np.isinf(V) & exact
    via_jump = (rates[..., certified_targets] > 0.0).any(axis=-1)
    return divergent | via_jump


def _monotone_iterate(m: CtmdpModel, rates, q, c, tol, max_iter, cap,
                      callback: Optional[Callable] = None):
    S = m.n_states
    V = np.ones(S)
    exact = np.zeros(S, dtype=bool)
    capped = np.zeros(S, dtype=bool)
    first_inf = np.full(S, -1)
    trace = IterationTrace()
    # loop-invariant part of the sojourn case table
    ok = q > c
    denom = np.where(ok, q - c, 1.0)
    fallback = sojourn_array(q, c, 0.0)
    any_inf = False
    t0 = time.perf_counter()
    for n in range(1, max_iter + 1):
        jm = xdot_array(rates, V) if any_inf else rates @ V
        av = np.where(ok, jm / denom, fallback)
        TV = av.min(axis=1)
        inf_tv = np.isinf(TV)
        if inf_tv.any():
            cert = _certified_infinite(m, rates, q, c, V, exact)
            exact |= (cert & np.isinf(av)).all(axis=1)
        over = (TV > cap) & ~inf_tv
        if over.any():
            capped |= over
            TV[over] = np.inf
        # entries already at inf (possibly via the cap) stay there
        if any_inf:
            TV[np.isinf(V)] = np.inf
        inf_now = np.isinf(TV)
        first_inf[inf_now & (first_inf < 0)] = n
        if inf_now.any():
            both = ~inf_now & np.isfinite(V)
            delta = float(np.max(np.abs(TV[both] - V[both]), initial=0.0))
            same_pattern = np.array_equal(inf_now, np.isinf(V))
            any_inf = True
        else:
            delta = float(np.max(np.abs(TV - V)))
            same_pattern = True
        trace.deltas.append(delta)
        trace.inf_counts.append(int(inf_now.sum()))
        trace.wall_times.append(time.perf_counter() - t0)
        trace.iterations = n
        if callback is not None:
            callback(n, V, TV)
        V = TV
        if same_pattern and delta < tol:
            trace.converged = True
            trace.converged_at = n - 1
            break
    trace.first_inf_iter = first_inf
    trace.inf_exact = exact & np.isinf(V)
    trace.capped = capped
    return V, trace


def _exit_rates(rates):
    # same reduction as the jump masses at V = 1 so that T1 >= 1 holds in floating point
    return rates @ np.ones(rates.shape[-1])


def value_iteration(m: CtmdpModel, tol: float = 1e-12, max_iter: int = 100_000,
                    cap: float = DEFAULT_CAP, callback: Optional[Callable] = None):
    """Monotone iteration V^(0) = 1, V^(n+1) = T V^(n).

    Stops once an application changes no finite entry by ``tol`` or more and
    creates no new infinite entry. Returns ``(ValueTable, IterationTrace)``;
    non-convergence is reported through ``trace.converged``.
    """
    if not tol > 0 or not max_iter >= 1 or not cap > 0:
        raise ValueError("tol, max_iter and cap must be positive")
    V, trace = _monotone_iterate(m, m.rates, _exit_rates(m.rates), m.costs, tol, max_iter, cap,
                                 callback)
    return ValueTable(m.states, V), trace


def iterate_policy(m: CtmdpModel, policy: StationaryPolicy, tol: float = 1e-12,
                   max_iter: int = 100_000, cap: float = DEFAULT_CAP):
    """Monotone iteration of the policy-restricted operator; returns (table, trace)."""
    f = np.asarray(policy.actions)
    if f.shape != (m.n_states,) or (f < 0).any() or (f >= m.n_actions).any():
        raise ValueError("policy must map every state to a valid action index")
    idx = np.arange(m.n_states)
    rates = m.rates[idx, f][:, None, :]
    costs = m.costs[idx, f][:, None]
    V, trace = _monotone_iterate(m, rates, _exit_rates(rates), costs, tol, max_iter, cap)
    return ValueTable(m.states, V), trace


def evaluate_policy(m: CtmdpModel, policy: StationaryPolicy, tol: float = 1e-12,
                    max_iter: int = 100_000, cap: float = DEFAULT_CAP) -> ValueTable:
    """Expected exponential utility of a stationary policy (minimal fixed point)."""
    return iterate_policy(m, policy, tol, max_iter, cap)[0]


def brackets(m: CtmdpModel, V) -> np.ndarray:
    """sum_y V(y) qt(y|x,a) - (q_x(a) - c(x,a)) V(x), shape (S, A).

    Infinite V(x) follows 0*inf = 0 and inf - inf = inf, so the entry can be
    -inf when the action leaves ``x`` faster than it accrues cost.
    """
    V = np.asarray(V.values if isinstance(V, ValueTable) else V, dtype=float)
    jm = jump_masses(m, V)
    d = _exit_rates(m.rates) - m.costs
    with np.errstate(invalid="ignore"):
        prod = np.where(d == 0.0, 0.0, d * V[:, None])
        out = jm - prod
    return np.where(np.isnan(out), np.inf, out)


def extract_policy(m: CtmdpModel, V: ValueTable) -> StationaryPolicy:
    """Greedy selector for the optimality equation, lowest index on ties."""
    f = np.argmin(brackets(m, V), axis=1)
    return StationaryPolicy(m.states, f, m.actions, unconstrained=np.isinf(V.values))


def residual(m: CtmdpModel, V: ValueTable) -> dict:
    """Per-state optimality-equation residual; ``None`` for infinite states."""
    r = brackets(m, V).min(axis=1)
    return {x: (None if np.isinf(v) else float(ri))
            for x, v, ri in zip(m.states, V.values, r)}


def classify_states(m: CtmdpModel, V: ValueTable, trace: IterationTrace) -> StatePartition:
    inf = np.isinf(V.values)
    exact = inf & trace.inf_exact
    return StatePartition(
        finite=tuple(x for x, i in zip(m.states, inf) if not i),
        infinite_exact=tuple(x for x, e in zip(m.states, exact) if e),
        infinite_suspected=tuple(x for x, i, e in zip(m.states, inf, exact) if i and not e),
    )
