"""How the optimality residual at the stopping iterate scales with the exit rate.

Value iteration stops once an application moves no finite entry by ``tol``.
The residual there is roughly (q - c) times the next change, so its ratio to
``tol`` grows with the exit rate. Two ways of drawing random models are
compared: exit rate in [0, rate_max] spread over a jump law, and every
off-diagonal rate drawn in [0, rate_max] independently.
"""

import argparse
from dataclasses import dataclass

import numpy as np

from riskmdp import CtmdpModel, residual, value_iteration
from riskmdp.generators import random_model


@dataclass
class Config:
    models: int = 200
    seed: int = 1
    tol: float = 1e-10
    rate_max: float = 5.0


def per_entry_model(rng, S, A, rate_max):
    mask = rng.random((S, A, S)) < 0.5
    R = np.where(mask, rng.uniform(0, rate_max, (S, A, S)), 0.0)
    R[0] = 0.0
    C = rng.uniform(0, 1, (S, A))
    C[0] = 0.0
    return CtmdpModel(tuple(map(str, range(S))), tuple(map(str, range(A))), R, C)


def ratios(cfg, make):
    rng = np.random.default_rng(cfg.seed)
    out, qmax = [], []
    for _ in range(cfg.models):
        m = make(rng, rng.integers(2, 9), rng.integers(1, 5))
        V, tr = value_iteration(m, tol=cfg.tol)
        if not tr.converged:
            continue
        r = [abs(v) for v in residual(m, V).values() if v is not None]
        out.append(max(r, default=0.0) / cfg.tol)
        qmax.append(m.exit_rates.max())
    return np.array(out), np.array(qmax)


def main(cfg: Config):
    for name, make in [
        ("exit rate in [0, rate_max]", lambda r, S, A: random_model(r, S, A, cfg.rate_max)),
        ("each rate in [0, rate_max]", lambda r, S, A: per_entry_model(r, S, A, cfg.rate_max)),
    ]:
        rho, q = ratios(cfg, make)
        print(f"{name:28s} max q {q.max():6.2f}  residual/tol median {np.median(rho):6.2f}  "
              f"max {rho.max():6.2f}  over 10: {(rho > 10).sum()}/{len(rho)}")


if __name__ == "__main__":
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    for name, default in vars(Config()).items():
        p.add_argument(f"--{name.replace('_', '-')}", type=type(default), default=default)
    main(Config(**vars(p.parse_args())))
