"""Model types, invariant validation and the time-augmented reformulations."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .timefn import TimeFn

KINDS = ("homogeneous", "time-varying", "finite-horizon", "discounted")


@dataclass(frozen=True, eq=False)
class CtmdpModel:
    """Finite homogeneous model.

    ``rates[x, a, y]`` is the jump rate from ``x`` to ``y != x`` under action
    ``a``; the diagonal is ignored and the exit rate is the off-diagonal row
    sum, so the generator is conservative by construction. ``costs[x, a]`` is
    the cost per unit time. The cemetery state is implicit.
    """

    states: tuple
    actions: tuple
    rates: np.ndarray
    costs: np.ndarray

    def __post_init__(self):
        S, A = len(self.states), len(self.actions)
        rates = np.array(self.rates, dtype=float)
        costs = np.array(self.costs, dtype=float)
        if rates.shape != (S, A, S) or costs.shape != (S, A):
            raise ValueError(f"table shapes {rates.shape}, {costs.shape} do not match "
                             f"{S} states x {A} actions")
        if len(set(self.states)) != S or len(set(self.actions)) != A:
            raise ValueError("state and action labels must be unique")
        idx = np.arange(S)
        rates[idx, :, idx] = 0.0
        rates.setflags(write=False)
        costs.setflags(write=False)
        object.__setattr__(self, "states", tuple(self.states))
        object.__setattr__(self, "actions", tuple(self.actions))
        object.__setattr__(self, "rates", rates)
        object.__setattr__(self, "costs", costs)

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def n_actions(self) -> int:
        return len(self.actions)

    @property
    def exit_rates(self) -> np.ndarray:
        """q_x(a), shape (S, A)."""
        # same reduction as the jump masses so that T1 >= 1 holds in floating point
        return self.rates @ np.ones(self.n_states)

    @property
    def max_exit_rates(self) -> np.ndarray:
        return self.exit_rates.max(axis=1)

    def state_index(self, x) -> int:
        return self.states.index(x)

    def action_index(self, a) -> int:
        return self.actions.index(a)

    def with_costs(self, costs) -> "CtmdpModel":
        return CtmdpModel(self.states, self.actions, self.rates, costs)

    def to_time_varying(self) -> "TimeVaryingModel":
        S, A = self.n_states, self.n_actions
        rates = [[[TimeFn.constant(self.rates[x, a, y]) for y in range(S)]
                  for a in range(A)] for x in range(S)]
        costs = [[TimeFn.constant(self.costs[x, a]) for a in range(A)] for x in range(S)]
        return TimeVaryingModel(self.states, self.actions, rates, costs)


@dataclass(frozen=True, eq=False)
class TimeVaryingModel:
    """Nonhomogeneous model with time-function entries.

    The drift is the time shift (t, x) -> (t + s, x), so a state of the
    augmented process is a pair (time, label) and only the label is stored.
    """

    states: tuple
    actions: tuple
    rates: Sequence  # rates[x][a][y] -> TimeFn
    costs: Sequence  # costs[x][a] -> TimeFn
    horizon_hint: Optional[float] = None

    def __post_init__(self):
        S, A = len(self.states), len(self.actions)
        if len(self.rates) != S or any(len(r) != A or any(len(ry) != S for ry in r)
                                       for r in self.rates):
            raise ValueError("rate table shape mismatch")
        if len(self.costs) != S or any(len(c) != A for c in self.costs):
            raise ValueError("cost table shape mismatch")
        zero = TimeFn.constant(0.0)
        rates = tuple(tuple(tuple(zero if y == x else self.rates[x][a][y] for y in range(S))
                            for a in range(A)) for x in range(S))
        costs = tuple(tuple(self.costs[x][a] for a in range(A)) for x in range(S))
        object.__setattr__(self, "states", tuple(self.states))
        object.__setattr__(self, "actions", tuple(self.actions))
        object.__setattr__(self, "rates", rates)
        object.__setattr__(self, "costs", costs)

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def n_actions(self) -> int:
        return len(self.actions)

    def entries(self):
        """Yield ((x, a, y), fn) for rates and ((x, a, None), fn) for costs."""
        for x in range(self.n_states):
            for a in range(self.n_actions):
                for y in range(self.n_states):
                    if y != x:
                        yield (x, a, y), self.rates[x][a][y]
                yield (x, a, None), self.costs[x][a]

    def breakpoints(self) -> list[float]:
        pts = set()
        for _, fn in self.entries():
            pts.update(fn.breakpoints())
        return sorted(pts)

    def rates_at(self, ts, left: bool = False) -> np.ndarray:
        """Jump rates at each time, shape (len(ts), S, A, S)."""
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        S, A = self.n_states, self.n_actions
        out = np.zeros((len(ts), S, A, S))
        for x in range(S):
            for a in range(A):
                for y in range(S):
                    fn = self.rates[x][a][y]
                    if y == x:
                        continue
                    if fn.is_constant:
                        out[:, x, a, y] = fn.constant_value
                    else:
                        out[:, x, a, y] = fn.evaluate(ts, left)
        return out

    def costs_at(self, ts, left: bool = False) -> np.ndarray:
        """Cost rates at each time, shape (len(ts), S, A)."""
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        out = np.zeros((len(ts), self.n_states, self.n_actions))
        for x in range(self.n_states):
            for a in range(self.n_actions):
                fn = self.costs[x][a]
                out[:, x, a] = fn.constant_value if fn.is_constant else fn.evaluate(ts, left)
        return out

    def exit_rate_fn(self, x: int, a: int) -> TimeFn:
        """Total exit rate as a single TimeFn (sum of the row)."""
        return sum_timefns([self.rates[x][a][y] for y in range(self.n_states) if y != x])


def sum_timefns(fns: Sequence[TimeFn]) -> TimeFn:
    """Pointwise sum of polynomial-or-decaying time functions on a merged mesh."""
    from .timefn import Piece

    fns = [f for f in fns if not (f.is_constant and f.constant_value == 0.0)]
    if not fns:
        return TimeFn.constant(0.0)
    if len(fns) == 1:
        return fns[0]
    if all(f.is_constant for f in fns):
        return TimeFn.constant(sum(f.constant_value for f in fns))
    mesh = sorted({0.0, *[b for f in fns for b in f.breakpoints()]})
    bounds = list(zip(mesh, mesh[1:] + [math.inf]))
    keys = set()
    per_interval = []
    for lo, hi in bounds:
        terms: dict = {}
        for f in fns:
            p = f.pieces[f.piece_index(lo)]
            key = (p.decay, p.anchor)
            acc = terms.setdefault(key, np.zeros(0))
            c = np.asarray(p.coeffs, dtype=float)
            n = max(len(acc), len(c))
            terms[key] = np.pad(acc, (0, n - len(acc))) + np.pad(c, (0, n - len(c)))
        keys.update(terms)
        per_interval.append(terms)
    if len(keys) > 1:
        raise ValueError("cannot sum time functions with different decay factors")
    pieces = []
    for (lo, hi), terms in zip(bounds, per_interval):
        (decay, anchor), coeffs = next(iter(terms.items()))
        pieces.append(Piece(lo, hi, tuple(float(c) for c in coeffs), decay, anchor))
    return TimeFn(pieces)


@dataclass(frozen=True)
class TerminalCost:
    g: tuple

    def __post_init__(self):
        object.__setattr__(self, "g", tuple(float(v) for v in self.g))

    def as_array(self) -> np.ndarray:
        return np.array(self.g)


@dataclass(eq=False)
class ModelDoc:
    kind: str
    model: object  # CtmdpModel or TimeVaryingModel
    alpha: Optional[float] = None
    horizon: Optional[float] = None
    terminal: Optional[TerminalCost] = None
    name: str = ""
    description: str = ""
    metadata: dict = field(default_factory=dict)

    def homogeneous(self) -> CtmdpModel:
        if not isinstance(self.model, CtmdpModel):
            raise TypeError(f"{self.kind} model has time-varying entries")
        return self.model

    def time_varying(self) -> TimeVaryingModel:
        if isinstance(self.model, CtmdpModel):
            return self.model.to_time_varying()
        return self.model


@dataclass(frozen=True)
class Violation:
    path: str
    message: str
    t_range: Optional[tuple] = None

    def __str__(self) -> str:
        where = f" on t in [{self.t_range[0]}, {self.t_range[1]})" if self.t_range else ""
        return f"{self.path}: {self.message}{where}"


def validate_model(doc: ModelDoc) -> list[Violation]:
    """All invariant violations of ``doc``; empty when the model is well formed."""
    out: list[Violation] = []
    if doc.kind not in KINDS:
        out.append(Violation("kind", f"unknown kind {doc.kind!r}"))
        return out
    m = doc.model
    if isinstance(m, CtmdpModel):
        for x, a, y in zip(*np.nonzero(~(m.rates >= 0))):
            out.append(Violation(f"rates.{m.states[x]}.{m.actions[a]}.{m.states[y]}",
                                 f"negative rate {m.rates[x, a, y]!r}"))
        for x, a in zip(*np.nonzero(~(m.costs >= 0))):
            out.append(Violation(f"costs.{m.states[x]}.{m.actions[a]}",
                                 f"negative cost {m.costs[x, a]!r}"))
        for x, a, y in zip(*np.nonzero(~np.isfinite(m.rates))):
            out.append(Violation(f"rates.{m.states[x]}.{m.actions[a]}.{m.states[y]}",
                                 "rate must be finite"))
        for x, a in zip(*np.nonzero(~np.isfinite(m.costs))):
            out.append(Violation(f"costs.{m.states[x]}.{m.actions[a]}", "cost must be finite"))
    elif isinstance(m, TimeVaryingModel):
        for (x, a, y), fn in m.entries():
            if y is None:
                path, what = f"costs.{m.states[x]}.{m.actions[a]}", "cost"
            else:
                path, what = f"rates.{m.states[x]}.{m.actions[a]}.{m.states[y]}", "rate"
            if any(not math.isfinite(c) for p in fn.pieces for c in p.coeffs):
                out.append(Violation(path, f"{what} has non-finite coefficients"))
                continue
            for rng in fn.negative_ranges():
                out.append(Violation(path, f"{what} takes negative values", rng))
    else:
        out.append(Violation("model", f"unsupported model type {type(m).__name__}"))
        return out

    if doc.kind == "discounted":
        if doc.alpha is None or not doc.alpha > 0:
            out.append(Violation("alpha", "discounted models need alpha > 0"))
        if not isinstance(m, CtmdpModel):
            out.append(Violation("model", "discounted models must have constant entries"))
    if doc.kind == "finite-horizon":
        if doc.horizon is None or not doc.horizon > 0:
            out.append(Violation("T", "finite-horizon models need T > 0"))
        if doc.alpha is not None and not doc.alpha >= 0:
            out.append(Violation("alpha", "alpha must be nonnegative"))
    if doc.kind == "homogeneous" and not isinstance(m, CtmdpModel):
        out.append(Violation("model", "homogeneous models must have constant entries"))
    if doc.terminal is not None:
        if len(doc.terminal.g) != len(m.states):
            out.append(Violation("terminal_g", "one terminal cost per state required"))
        for x, g in zip(m.states, doc.terminal.g):
            if not (g >= 0 and math.isfinite(g)):
                out.append(Violation(f"terminal_g.{x}", f"terminal cost must be finite and >= 0, got {g!r}"))
    return out


def augment_discounted(m: CtmdpModel | TimeVaryingModel, alpha: float) -> TimeVaryingModel:
    """Time-augmented model with cost e^{-alpha t} c and unchanged rates."""
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha!r}")
    tv = m.to_time_varying() if isinstance(m, CtmdpModel) else m
    costs = [[fn.times_exp(alpha) for fn in row] for row in tv.costs]
    return TimeVaryingModel(tv.states, tv.actions, tv.rates, costs, tv.horizon_hint)


def augment_finite_horizon(m: CtmdpModel | TimeVaryingModel, T: float, alpha: float,
                           g: TerminalCost) -> TimeVaryingModel:
    """Rates switched off from T on; cost e^{-alpha t} c before T, e^{-(t-T)} g(x) after."""
    if not T > 0:
        raise ValueError(f"horizon must be positive, got {T!r}")
    if not alpha >= 0:
        raise ValueError(f"alpha must be nonnegative, got {alpha!r}")
    tv = m.to_time_varying() if isinstance(m, CtmdpModel) else m
    zero = TimeFn.constant(0.0)
    rates = [[[TimeFn.splice(fn, zero, T) for fn in ry] for ry in rx] for rx in tv.rates]
    costs = []
    for x, row in enumerate(tv.costs):
        tail = TimeFn.constant(g.g[x]).times_exp(1.0, anchor=T)
        costs.append([TimeFn.splice(fn.times_exp(alpha), tail, T) for fn in row])
    return TimeVaryingModel(tv.states, tv.actions, rates, costs, horizon_hint=T)


def shift(point: tuple[float, object], s: float) -> tuple[float, object]:
    """The drift of the augmented process: (t, x) -> (t + s, x)."""
    t, x = point
    return (t + s, x)
