"""Exact simulation of the controlled jump process and Monte Carlo utilities.

Randomness comes from fixed blocks of ``BLOCK`` trajectories; block ``b``
draws from ``Philox`` seeded by ``SeedSequence(seed, spawn_key=(b,))``.
Blocks are the unit of parallel work and results are reduced in block
order, so estimates do not depend on the number of workers.
"""

from __future__ import annotations

import bisect
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .model import CtmdpModel, TimeVaryingModel
from .stationary import StationaryPolicy
from .timefn import TimeFn, invert_hazard
from .timegrid import MarkovPolicyGrid

BLOCK = 4096
DEFAULT_T_MAX = 1e6
DEFAULT_JUMP_CAP = 10**6

ABSORBED = "absorbed"
TIME_TRUNCATED = "time_truncated"
JUMP_CAPPED = "jump_capped"

Policy = Union[StationaryPolicy, MarkovPolicyGrid]


@dataclass
class TrajectorySample:
    jumps: list  # (t_n, state index, action index in force)
    accumulated_exponent: float
    terminated_by: str
    divergent: bool = False

    @property
    def utility(self) -> float:
        if self.divergent:
            return math.inf
        try:
            return math.exp(self.accumulated_exponent)
        except OverflowError:
            return math.inf


@dataclass
class McEstimate:
    mean: float
    std_error: float
    n_samples: int
    truncation_fraction: float
    seed: int
    divergent: bool = False
    heavy_tail: bool = False
    x0: object = None
    flags: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {"x0": None if self.x0 is None else str(self.x0),
                "mean": _num(self.mean), "std_error": _num(self.std_error),
                "n_samples": self.n_samples, "truncation_fraction": self.truncation_fraction,
                "seed": self.seed, "divergent": self.divergent,
                "heavy_tail": self.heavy_tail, "flags": list(self.flags)}


def _num(v: float):
    return "inf" if math.isinf(v) else v


def worker_count(workers: Optional[int] = None) -> int:
    if workers is not None:
        return max(1, int(workers))
    env = os.environ.get("RISKMDP_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(block,))))


def sample_sojourn(rate_profile: TimeFn, u: float) -> float:
    """First time the cumulative hazard reaches -ln(u); inf if it never does."""
    if not 0.0 < u <= 1.0:
        raise ValueError("u must lie in (0, 1]")
    return invert_hazard([(0.0, math.inf, rate_profile)], -math.log(u))


# -- general sampler ------------------------------------------------------------

class _Dynamics:
    """Per-(state, action) exit-rate and cost functions of a time-varying model."""

    def __init__(self, m: TimeVaryingModel):
        self.m = m
        self._exit: dict = {}

    def exit_rate(self, x: int, a: int) -> TimeFn:
        key = (x, a)
        if key not in self._exit:
            self._exit[key] = self.m.exit_rate_fn(x, a)
        return self._exit[key]

    def cost(self, x: int, a: int) -> TimeFn:
        return self.m.costs[x][a]

    def jump_weights(self, x: int, a: int, t: float) -> np.ndarray:
        w = np.array([0.0 if y == x else fn(t, left=True)
                      for y, fn in enumerate(self.m.rates[x][a])])
        if w.sum() <= 0:
            w = np.array([0.0 if y == x else fn(t) for y, fn in enumerate(self.m.rates[x][a])])
        return w


class _ActionRuns:
    """A policy as per-state runs of constant action: (run start times, actions)."""

    def __init__(self, policy: Policy):
        self.policy = policy
        if isinstance(policy, StationaryPolicy):
            self.runs = [([0.0], [int(a)]) for a in policy.actions]
            return
        times, acts = policy.times, policy.actions
        self.runs = []
        for x in range(acts.shape[1]):
            col = acts[:, x]
            change = np.concatenate(([0], np.nonzero(col[1:] != col[:-1])[0] + 1))
            self.runs.append(([0.0] + times[change[1:]].tolist(), col[change].tolist()))

    def segments(self, x: int, t: float) -> list:
        """(start, end, action) pieces of constant action from time ``t`` on."""
        starts, acts = self.runs[x]
        j = max(bisect.bisect_right(starts, t) - 1, 0)
        out = []
        start = t
        for k in range(j, len(starts)):
            end = starts[k + 1] if k + 1 < len(starts) else math.inf
            out.append((start, end, acts[k]))
            start = end
        return out


def sample_trajectory(m, policy: Policy, x0, rng: np.random.Generator,
                      t_max: float = DEFAULT_T_MAX, jump_cap: int = DEFAULT_JUMP_CAP
                      ) -> TrajectorySample:
    """One path of the jump chain under ``policy`` started at state ``x0`` at time 0.

    Cost is integrated in closed form per sojourn. On absorption the residual
    cost from the last jump to infinity is added; an infinite residual marks
    the sample divergent.
    """
    dyn = m if isinstance(m, _Dynamics) else _Dynamics(
        m.to_time_varying() if isinstance(m, CtmdpModel) else m)
    runs = policy if isinstance(policy, _ActionRuns) else _ActionRuns(policy)
    x = x0 if isinstance(x0, (int, np.integer)) else dyn.m.states.index(x0)
    t = 0.0
    expo = 0.0
    jumps = []
    while True:
        segs = runs.segments(x, t)
        jumps.append((t, x, segs[0][2]))
        target = -math.log(1.0 - rng.random())
        t_jump = invert_hazard(((a, b, dyn.exit_rate(x, act)) for a, b, act in segs), target)
        end = min(t_jump, t_max)
        for a, b, act in segs:
            if a >= end:
                break
            expo += dyn.cost(x, act).integral(a, min(b, end))
        if math.isinf(t_jump):
            divergent = math.isinf(expo)
            return TrajectorySample(jumps, expo, ABSORBED, divergent)
        if t_jump > t_max:
            return TrajectorySample(jumps, expo, TIME_TRUNCATED)
        if len(jumps) >= jump_cap:
            return TrajectorySample(jumps, expo, JUMP_CAPPED)
        act = next(act for a, b, act in segs if a <= t_jump < b)
        w = dyn.jump_weights(x, act, t_jump)
        cdf = np.cumsum(w)
        x = int(min(np.searchsorted(cdf / cdf[-1], rng.random(), side="right"), len(w) - 1))
        t = t_jump


# -- vectorized sampler for homogeneous models under stationary policies -------

def _block_homogeneous(m: CtmdpModel, f: np.ndarray, x0: int, n: int, rng, t_max, jump_cap):
    idx = np.arange(m.n_states)
    rates = m.rates[idx, f]
    q = rates @ np.ones(m.n_states)
    c = m.costs[idx, f]
    with np.errstate(invalid="ignore", divide="ignore"):
        cdf = np.cumsum(rates, axis=1) / q[:, None]
    cdf[q == 0] = 1.0

    state = np.full(n, x0)
    t = np.zeros(n)
    expo = np.zeros(n)
    count = np.zeros(n, dtype=np.int64)
    divergent = np.zeros(n, dtype=bool)
    truncated = np.zeros(n, dtype=bool)
    active = np.arange(n)
    while active.size:
        xs = state[active]
        qa = q[xs]
        stuck = qa == 0.0
        if stuck.any():
            done = active[stuck]
            divergent[done] = c[state[done]] > 0.0
            active, xs, qa = active[~stuck], xs[~stuck], qa[~stuck]
        if not active.size:
            break
        u = rng.random(active.size)
        tau = -np.log1p(-u) / qa
        t_new = t[active] + tau
        late = t_new > t_max
        expo[active] += c[xs] * np.where(late, t_max - t[active], tau)
        truncated[active[late]] = True
        active, xs, t_new = active[~late], xs[~late], t_new[~late]
        t[active] = t_new
        count[active] += 1
        capped = count[active] >= jump_cap
        truncated[active[capped]] = True
        active, xs = active[~capped], xs[~capped]
        if not active.size:
            break
        v = rng.random(active.size)
        nxt = (cdf[xs] <= v[:, None]).sum(axis=1)
        state[active] = np.minimum(nxt, m.n_states - 1)
    with np.errstate(over="ignore"):
        util = np.where(divergent, np.inf, np.exp(expo))
    return util, truncated, divergent


def _block_general(m, policy, x0, n, rng, t_max, jump_cap):
    dyn = _Dynamics(m.to_time_varying() if isinstance(m, CtmdpModel) else m)
    runs = _ActionRuns(policy)
    util = np.empty(n)
    truncated = np.zeros(n, dtype=bool)
    divergent = np.zeros(n, dtype=bool)
    for i in range(n):
        s = sample_trajectory(dyn, runs, x0, rng, t_max, jump_cap)
        util[i] = s.utility
        truncated[i] = s.terminated_by != ABSORBED
        divergent[i] = s.divergent
    return util, truncated, divergent


def _reachable(adjacency: np.ndarray, x0: int) -> np.ndarray:
    seen = np.zeros(len(adjacency), dtype=bool)
    seen[x0] = True
    stack = [x0]
    while stack:
        for y in np.nonzero(adjacency[stack.pop()] & ~seen)[0]:
            seen[y] = True
            stack.append(int(y))
    return seen


def heavy_tail_flag(m, policy: Policy, x0: int) -> bool:
    """True when a state-action reachable from ``x0`` has c >= q/2 (possibly infinite variance).

    Time-varying models are inspected at the policy grid times and the model breakpoints.
    """
    tv = m.to_time_varying() if isinstance(m, CtmdpModel) else m
    if isinstance(policy, StationaryPolicy):
        times = np.array([0.0] + tv.breakpoints())
        acts = np.broadcast_to(np.asarray(policy.actions), (len(times), tv.n_states))
    else:
        times = np.union1d(policy.times, tv.breakpoints())
        k = np.clip(np.searchsorted(policy.times, times, side="right") - 1, 0, None)
        acts = policy.actions[k]
    idx = np.arange(tv.n_states)
    R = np.stack([r[idx, a] for r, a in zip(tv.rates_at(times), acts)])  # (K, S, S)
    C = np.stack([c[idx, a] for c, a in zip(tv.costs_at(times), acts)])  # (K, S)
    Q = R.sum(axis=2)
    seen = _reachable((R > 0).any(axis=0), x0)
    return bool(((Q > 0) & (C >= Q / 2))[:, seen].any())


def estimate_utility(m, policy: Policy, x0, n: int, seed: int, workers: Optional[int] = None,
                     t_max: float = DEFAULT_T_MAX, jump_cap: int = DEFAULT_JUMP_CAP
                     ) -> McEstimate:
    """Monte Carlo estimate of E_x0[exp(total cost)] under ``policy``."""
    if n < 2:
        raise ValueError("need at least two samples")
    x = x0 if isinstance(x0, (int, np.integer)) else m.states.index(x0)
    fast = isinstance(m, CtmdpModel) and isinstance(policy, StationaryPolicy)
    blocks = [(b, min(BLOCK, n - b * BLOCK)) for b in range(math.ceil(n / BLOCK))]

    def run(block):
        b, size = block
        rng = block_rng(seed, b)
        if fast:
            return _block_homogeneous(m, np.asarray(policy.actions), x, size, rng, t_max,
                                      jump_cap)
        return _block_general(m, policy, x, size, rng, t_max, jump_cap)

    nw = min(worker_count(workers), len(blocks))
    if nw == 1:
        results = [run(b) for b in blocks]
    else:
        with ThreadPoolExecutor(max_workers=nw) as pool:
            results = list(pool.map(run, blocks))
    util = np.concatenate([r[0] for r in results])
    truncated = np.concatenate([r[1] for r in results])
    divergent = bool(np.concatenate([r[2] for r in results]).any())
    if np.isinf(util).any():
        mean, se = math.inf, math.inf
    else:
        mean = float(np.mean(util))
        se = float(np.std(util, ddof=1) / math.sqrt(n))
    flags = []
    heavy = heavy_tail_flag(m, policy, x)
    if heavy:
        flags.append("potential infinite variance: cost rate >= half the exit rate")
    if truncated.any():
        flags.append(f"{int(truncated.sum())} samples truncated (t_max={t_max}, "
                     f"jump_cap={jump_cap})")
    return McEstimate(mean, se, n, float(truncated.mean()), int(seed), divergent, heavy,
                      m.states[x], flags)
