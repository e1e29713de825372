"""Observed order of the backward RK4 sweep on problems with closed-form values.

Errors halve by ~16 per step halving until round-off (~1e-14) takes over.
"""

import argparse
import math
from dataclasses import dataclass, field

import numpy as np

from riskmdp import CtmdpModel, TerminalCost
from riskmdp.timegrid import discounted_value, finite_horizon_value, truncation_horizon


@dataclass
class Config:
    steps: list = field(default_factory=lambda: [4e-2, 2e-2, 1e-2, 5e-3, 2.5e-3, 1.25e-3])
    cost: float = 1.0
    horizon: float = 1.0
    alpha: float = 1.0


def single(cost):
    return CtmdpModel(("x",), ("a",), np.zeros((1, 1, 1)), np.array([[cost]]))


def table(title, exact, solve, steps):
    print(f"\n{title}  (exact {exact!r})")
    print(f"{'h':>10} {'error':>12} {'ratio':>8}")
    prev = None
    for h in steps:
        err = abs(solve(h) - exact)
        ratio = "" if prev is None or err == 0 else f"{prev / err:8.2f}"
        print(f"{h:10.2e} {err:12.3e} {ratio}")
        prev = err


def main(cfg: Config):
    m = single(cfg.cost)
    table("finite horizon, constant cost", math.exp(cfg.cost * cfg.horizon),
          lambda h: finite_horizon_value(m, cfg.horizon, 0.0, TerminalCost([0.0]),
                                         step=h).values[0, 0], cfg.steps)

    tail_tol = 1e-12
    T_h = truncation_horizon(cfg.cost, cfg.alpha, tail_tol)
    exact = math.exp(cfg.cost * (1 - math.exp(-cfg.alpha * T_h)) / cfg.alpha)
    table("discounted, truncated horizon", exact,
          lambda h: discounted_value(m, cfg.alpha, tail_tol, h, estimate_error=False)[0].values[0],
          cfg.steps)


if __name__ == "__main__":
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--steps", type=float, nargs="+", default=Config().steps)
    p.add_argument("--cost", type=float, default=1.0)
    p.add_argument("--horizon", type=float, default=1.0)
    p.add_argument("--alpha", type=float, default=1.0)
    main(Config(**vars(p.parse_args())))
