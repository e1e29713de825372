"""Solver against simulator on random models with exit rate above twice the cost rate.

    python scripts/cross_check.py --models 20 --samples 100000
"""

import argparse
import time
from dataclasses import dataclass

import numpy as np

from riskmdp import evaluate_policy, extract_policy, value_iteration
from riskmdp.generators import random_margin_model
from riskmdp.simulate import estimate_utility


@dataclass
class Config:
    models: int = 20
    samples: int = 100_000
    seed: int = 1
    max_states: int = 8
    max_actions: int = 4
    margin: float = 2.0


def draw(cfg: Config, rng):
    while True:
        m = random_margin_model(rng, rng.integers(2, cfg.max_states + 1),
                                rng.integers(1, cfg.max_actions + 1), margin=cfg.margin)
        V, tr = value_iteration(m, tol=1e-12)
        f = extract_policy(m, V)
        doubled = evaluate_policy(m.with_costs(2 * m.costs), f, tol=1e-9)
        if tr.converged and V.finite.all() and np.isfinite(doubled.values).all():
            return m, V, f


def main(cfg: Config):
    rng = np.random.default_rng(cfg.seed)
    z = []
    t0 = time.perf_counter()
    print(f"{'model':>5} {'state':>5} {'solver':>12} {'mc mean':>12} {'std err':>10} {'z':>7}")
    for i in range(cfg.models):
        m, V, f = draw(cfg, rng)
        for x in range(m.n_states):
            est = estimate_utility(m, f, x, cfg.samples, seed=cfg.seed * 1000 + i)
            zi = 0.0 if est.std_error == 0 else (est.mean - V.values[x]) / est.std_error
            z.append(zi)
            print(f"{i:5d} {m.states[x]:>5} {V.values[x]:12.6f} {est.mean:12.6f} "
                  f"{est.std_error:10.2e} {zi:7.2f}")
    z = np.array(z)
    print(f"\n{len(z)} checks, {np.mean(np.abs(z) <= 3):.1%} within 3 SE, "
          f"z std {z.std():.3f}, {time.perf_counter() - t0:.1f} s")


if __name__ == "__main__":
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    for name, default in vars(Config()).items():
        p.add_argument(f"--{name.replace('_', '-')}", type=type(default), default=default)
    main(Config(**vars(p.parse_args())))
