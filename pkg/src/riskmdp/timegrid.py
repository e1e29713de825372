"""Backward integration of the time-dependent optimality equation.

Along the drift (t, x) -> (t + s, x) the value satisfies

    dV/dt (t, x) = -min_a { sum_y V(t, y) qt(y|t,x,a) + (c(t,x,a) - q_(t,x)(a)) V(t, x) }

which is integrated backward from a terminal condition with classic RK4.
The min over actions is taken inside every stage.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .embedded import ValueTable
from .model import CtmdpModel, TerminalCost, TimeVaryingModel, augment_discounted, \
    augment_finite_horizon

FLOOR_SLACK = 1e-9
_CHUNK = 1024


class BackwardIntegrationError(RuntimeError):
    """A value dropped below 1 during the backward sweep."""


@dataclass(frozen=True, eq=False)
class MarkovValueGrid:
    times: np.ndarray
    states: tuple
    values: np.ndarray  # shape (len(times), len(states))
    meta: dict = field(default_factory=dict)

    def at(self, k: int) -> ValueTable:
        return ValueTable(self.states, self.values[k])

    def initial(self) -> ValueTable:
        return self.at(0)

    def rows(self):
        """(t, state, value) sorted by time then state order."""
        for t, row in zip(self.times, self.values):
            for x, v in zip(self.states, row):
                yield float(t), x, float(v)


@dataclass(frozen=True, eq=False)
class MarkovPolicyGrid:
    """Action index per (grid time, state), constant on [t_k, t_{k+1})."""

    times: np.ndarray
    states: tuple
    actions: np.ndarray  # shape (len(times), len(states))
    action_labels: tuple = ()

    def action_at(self, t: float, x: int) -> int:
        k = max(int(np.searchsorted(self.times, t, side="right")) - 1, 0)
        return int(self.actions[k, x])

    def rows(self):
        for t, row in zip(self.times, self.actions):
            for x, a in zip(self.states, row):
                yield float(t), x, (self.action_labels[a] if self.action_labels else int(a))


def _check_grid(grid) -> np.ndarray:
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or len(grid) < 1 or grid[0] < 0 or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be a nonempty, strictly increasing array of times >= 0")
    return grid


def _substeps(grid: np.ndarray, breakpoints, step: Optional[float]):
    """Substep endpoints ``(a, b)`` in backward order; none straddles a breakpoint."""
    bps = np.asarray(breakpoints, dtype=float)
    mesh = np.union1d(grid, bps[(bps > grid[0]) & (bps < grid[-1])])
    lens = np.diff(mesh)
    if step is None:
        n = np.ones(len(lens), dtype=int)
    else:
        n = np.maximum(1, np.ceil(lens / step - 1e-9).astype(int))
    last = np.cumsum(n) - 1
    j = np.arange(n.sum()) - np.repeat(last - n + 1, n)
    h = np.repeat(lens / n, n)
    a = np.repeat(mesh[:-1], n) + j * h
    b = a + h
    b[last] = mesh[1:]
    return a[::-1], b[::-1]


def _stage_matrices(m: TimeVaryingModel, ts, left=False) -> np.ndarray:
    """M[x, a, y] = qt(y|t,x,a) + [x == y] (c(t,x,a) - q_(t,x)(a)), per time."""
    R = m.rates_at(ts, left)
    D = m.costs_at(ts, left) - R @ np.ones(m.n_states)
    idx = np.arange(m.n_states)
    R[:, idx, :, idx] += D.transpose(1, 0, 2)
    return R


def _rhs(M, V):
    return -np.minimum.reduce(M @ V, axis=1)


def solve_backward(m: TimeVaryingModel, grid, terminal, step: Optional[float] = None
                   ) -> MarkovValueGrid:
    """RK4 sweep from ``terminal`` at ``grid[-1]`` back to ``grid[0]``.

    ``step`` bounds the substep size (default: one step per grid cell, with
    model breakpoints always inserted). Raises :class:`BackwardIntegrationError`
    if any value falls below 1 - 1e-9.
    """
    if isinstance(m, CtmdpModel):
        m = m.to_time_varying()
    grid = _check_grid(grid)
    V = np.array(terminal, dtype=float)
    if V.shape != (m.n_states,):
        raise ValueError("one terminal value per state required")
    if (V < 1.0).any() or not np.isfinite(V).all():
        raise ValueError("terminal values must be finite and >= 1")
    if step is not None and not step > 0:
        raise ValueError("step must be positive")

    values = np.empty((len(grid), m.n_states))
    values[-1] = V
    a_all, b_all = _substeps(grid, m.breakpoints(), step)
    # substeps whose left end is a grid point, and which one
    hit = np.searchsorted(grid, a_all)
    on_grid = (hit < len(grid)) & (grid[np.minimum(hit, len(grid) - 1)] == a_all)
    floor = 1.0 - FLOOR_SLACK

    for c0 in range(0, len(a_all), _CHUNK):
        a, b = a_all[c0:c0 + _CHUNK], b_all[c0:c0 + _CHUNK]
        Mb = _stage_matrices(m, b, left=True)
        Mm = _stage_matrices(m, 0.5 * (a + b))
        Ma = _stage_matrices(m, a)
        hs = (b - a).tolist()
        for i, h in enumerate(hs):
            half = 0.5 * h
            k1 = _rhs(Mb[i], V)
            k2 = _rhs(Mm[i], V - half * k1)
            k3 = _rhs(Mm[i], V - half * k2)
            k4 = _rhs(Ma[i], V - h * k3)
            V = V - (h / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)
            if V.min() < floor:
                x = int(np.argmin(V))
                raise BackwardIntegrationError(
                    f"value {V[x]!r} < 1 at t={a[i]!r}, state {m.states[x]!r}; "
                    "step too large or model invalid")
            if on_grid[c0 + i]:
                values[hit[c0 + i]] = V
    return MarkovValueGrid(grid, m.states, values, {"substeps": len(a_all)})


def finite_horizon_value(m, T: float, alpha: float, g: TerminalCost, grid=None,
                         step: Optional[float] = None) -> MarkovValueGrid:
    """Value of the horizon-T problem with terminal utility e^{g(x)}.

    ``T == 0`` is accepted as the degenerate limit and returns e^{g} alone.
    """
    terminal = np.exp(g.as_array())
    if T == 0:
        return MarkovValueGrid(np.array([0.0]), m.states, terminal[None, :].copy(),
                               {"horizon": 0.0})
    if grid is None:
        h = step if step is not None else T / 1000
        grid = np.linspace(0.0, T, max(1, math.ceil(T / h - 1e-9)) + 1)
    grid = _check_grid(grid)
    if not math.isclose(grid[-1], T, rel_tol=0, abs_tol=1e-12 * max(1.0, T)):
        raise ValueError(f"grid must end at the horizon T={T!r}")
    aug = augment_finite_horizon(m, T, alpha, g)
    out = solve_backward(aug, grid, terminal, step)
    out.meta.update(horizon=T, alpha=alpha)
    return out


def truncation_horizon(c_max: float, alpha: float, tail_tol: float) -> float:
    """Smallest T with exp(c_max e^{-alpha T} / alpha) - 1 <= tail_tol."""
    if c_max <= 0:
        return 0.0
    return max(0.0, math.log(c_max / (alpha * math.log1p(tail_tol))) / alpha)


def tail_bound(c_max: float, alpha: float, t) -> np.ndarray:
    """Upper envelope exp(c_max e^{-alpha t} / alpha) of the discounted value."""
    return np.exp(c_max * np.exp(-alpha * np.asarray(t, dtype=float)) / alpha)


def discounted_value(m: CtmdpModel, alpha: float, tail_tol: float = 1e-8,
                     grid_step: float = 1e-3, estimate_error: bool = True):
    """Discounted risk-sensitive value L*(x) = V(0, x) of the augmented model.

    The horizon is truncated where the tail bound drops below ``tail_tol``
    and the terminal condition there is 1. Returns ``(ValueTable, MarkovValueGrid)``;
    ``grid.meta`` carries the truncation horizon and the error budget.
    """
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha!r}")
    if not tail_tol > 0 or not grid_step > 0:
        raise ValueError("tail_tol and grid_step must be positive")
    c_max = float(m.costs.max(initial=0.0))
    T_h = max(truncation_horizon(c_max, alpha, tail_tol), grid_step)
    K = max(1, math.ceil(T_h / grid_step - 1e-9))
    if estimate_error and K % 2:
        K += 1
    grid = np.linspace(0.0, T_h, K + 1)
    aug = augment_discounted(m, alpha)
    ones = np.ones(m.n_states)
    sol = solve_backward(aug, grid, ones)
    L = sol.values[0]
    # terminal 1 <= V(T_h) <= 1 + tail_tol, and the flow is positively homogeneous
    truncation_err = tail_tol * L
    integration_err = np.zeros_like(L)
    if estimate_error:
        coarse = solve_backward(aug, grid[::2], ones)
        integration_err = np.abs(L - coarse.values[0]) / 15.0
    sol.meta.update(alpha=alpha, truncation_horizon=T_h, tail_tol=tail_tol, c_max=c_max,
                    truncation_error=truncation_err.tolist(),
                    integration_error=integration_err.tolist(),
                    error_bound=(truncation_err + integration_err).tolist())
    return ValueTable(m.states, L), sol


def extract_markov_policy(m: TimeVaryingModel, Vg: MarkovValueGrid) -> MarkovPolicyGrid:
    """Greedy action per grid point; the last point uses left limits of the model."""
    if isinstance(m, CtmdpModel):
        m = m.to_time_varying()
    t = Vg.times
    K = len(t)
    M = _stage_matrices(m, t)
    if K > 1:
        M[-1] = _stage_matrices(m, t[-1:], left=True)[0]
    bracket = np.einsum("kxay,ky->kxa", M, Vg.values)
    return MarkovPolicyGrid(t, m.states, np.argmin(bracket, axis=2), m.actions)
