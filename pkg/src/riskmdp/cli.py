"""Command-line entry point: ``riskmdp <subcommand> --model PATH ...``.

Exit codes: 0 success, 1 non-convergence (or a failed check), 2 input error.
"""

from __future__ import annotations

import argparse
import math
import sys
import time


from .io import (ModelError, RunReport, load_model, load_policy, load_values, model_digest,
                 policy_to_json, value_rows, write_report)
from .model import CtmdpModel, TerminalCost, augment_discounted, augment_finite_horizon
from .simulate import DEFAULT_JUMP_CAP, DEFAULT_T_MAX, estimate_utility
from .stationary import (DEFAULT_CAP, StationaryPolicy, classify_states, extract_policy,
                         iterate_policy, residual, value_iteration)
from .timegrid import (BackwardIntegrationError, MarkovPolicyGrid, discounted_value,
                       extract_markov_policy, finite_horizon_value)

EXIT_OK, EXIT_NONCONVERGED, EXIT_INPUT = 0, 1, 2


class InputError(Exception):
    pass


def _homogeneous(doc) -> CtmdpModel:
    if not isinstance(doc.model, CtmdpModel):
        raise InputError(f"command needs constant rates and costs; model kind is {doc.kind!r}")
    return doc.model


def _residual_rows(res):
    return ("state", "residual"), [(x, math.inf if r is None else r) for x, r in res.items()]


def _policy_rows(policy):
    if isinstance(policy, MarkovPolicyGrid):
        return ("t", "state", "action"), list(policy.rows())
    return ("state", "action"), [(x, policy.action_labels[a])
                                 for x, a in zip(policy.states, policy.actions)]


def _grid_rows(grid):
    return ("t", "state", "value"), list(grid.rows())


def _trace_rows(trace):
    return ("iter", "delta", "inf_count"), [(n, float(d), c) for n, d, c in trace.rows()]


def cmd_solve(args, doc, report):
    m = _homogeneous(doc)
    V, trace = value_iteration(m, args.tol, args.max_iter, args.cap)
    policy = extract_policy(m, V)
    res = residual(m, V)
    part = classify_states(m, V, trace)
    report.results.update(
        values=V.to_json(), policy=policy.to_json(),
        unconstrained_states=[str(x) for x, u in zip(m.states, policy.unconstrained) if u],
        residual={str(x): r for x, r in res.items()},
        max_abs_residual=max((abs(r) for r in res.values() if r is not None), default=0.0),
        partition=part.to_json(), trace=trace.to_json(), tol=args.tol, cap=args.cap)
    report.tables.update(values=value_rows(V), policy=_policy_rows(policy),
                         residual=_residual_rows(res), trace=_trace_rows(trace))
    return EXIT_OK if trace.converged else EXIT_NONCONVERGED


def cmd_iterate(args, doc, report):
    m = _homogeneous(doc)
    V, trace = value_iteration(m, args.tol, args.max_iter, args.cap)
    report.results.update(values=V.to_json(), trace=trace.to_json(), tol=args.tol)
    report.tables.update(values=value_rows(V), trace=_trace_rows(trace))
    for n, d, c in trace.rows():
        print(f"iter {n:6d}  delta {d:.6e}  inf {c}", file=sys.stderr)
    return EXIT_OK if trace.converged else EXIT_NONCONVERGED


def cmd_evaluate(args, doc, report):
    m = _homogeneous(doc)
    if args.policy is None:
        raise InputError("evaluate needs --policy")
    policy = load_policy(args.policy, m)
    if not isinstance(policy, StationaryPolicy):
        raise InputError("evaluate takes a stationary policy")
    V, trace = iterate_policy(m, policy, args.tol, args.max_iter, args.cap)
    report.results.update(values=V.to_json(), policy=policy.to_json(), trace=trace.to_json(),
                          tol=args.tol)
    report.tables.update(values=value_rows(V), trace=_trace_rows(trace))
    return EXIT_OK if trace.converged else EXIT_NONCONVERGED


def _horizon_setup(args, doc):
    T = args.horizon if args.horizon is not None else doc.horizon
    if T is None:
        raise InputError("solve-horizon needs --horizon or a model with T")
    alpha = args.alpha if args.alpha is not None else (doc.alpha or 0.0)
    g = doc.terminal or TerminalCost([0.0] * len(doc.model.states))
    return T, alpha, g


def cmd_solve_horizon(args, doc, report):
    T, alpha, g = _horizon_setup(args, doc)
    step = args.step if args.step is not None else T / 1000
    grid = finite_horizon_value(doc.model, T, alpha, g, step=step)
    policy = extract_markov_policy(augment_finite_horizon(doc.model, T, alpha, g), grid)
    report.results.update(values=grid.initial().to_json(), horizon=T, alpha=alpha, step=step,
                          policy=policy_to_json(policy), meta=grid.meta)
    report.tables.update(values=value_rows(grid.initial()), grid=_grid_rows(grid),
                         policy=_policy_rows(policy))
    return EXIT_OK


def cmd_solve_discounted(args, doc, report):
    m = _homogeneous(doc)
    alpha = args.alpha if args.alpha is not None else doc.alpha
    if alpha is None:
        raise InputError("solve-discounted needs --alpha or a model with alpha")
    step = args.step if args.step is not None else 1e-2
    L, grid = discounted_value(m, alpha, args.tail_tol, step)
    policy = extract_markov_policy(augment_discounted(m, alpha), grid)
    report.results.update(values=L.to_json(), alpha=alpha, step=step, meta=grid.meta,
                          policy=policy_to_json(policy))
    report.tables.update(values=value_rows(L), grid=_grid_rows(grid),
                         policy=_policy_rows(policy))
    return EXIT_OK


def cmd_simulate(args, doc, report):
    m = doc.model
    if doc.kind == "finite-horizon":
        T, alpha, g = _horizon_setup(args, doc)
        sim_model = augment_finite_horizon(m, T, alpha, g)
        default = lambda: extract_markov_policy(  # noqa: E731
            sim_model, finite_horizon_value(m, T, alpha, g, step=T / 1000))
    elif doc.kind == "discounted":
        alpha = args.alpha if args.alpha is not None else doc.alpha
        sim_model = augment_discounted(m, alpha)
        default = lambda: extract_markov_policy(  # noqa: E731
            sim_model, discounted_value(m, alpha, args.tail_tol, 1e-2)[1])
    else:
        sim_model = m
        if isinstance(m, CtmdpModel):
            default = lambda: extract_policy(m, value_iteration(m, args.tol, args.max_iter,  # noqa: E731
                                                                args.cap)[0])
        else:
            default = None
    if args.policy is not None:
        policy = load_policy(args.policy, m)
    elif default is not None:
        policy = default()
    else:
        raise InputError("time-varying models need --policy for simulation")
    starts = [args.x0] if args.x0 is not None else list(m.states)
    for x in starts:
        if x not in m.states:
            raise InputError(f"unknown initial state {x!r}")
    estimates = [estimate_utility(sim_model, policy, x, args.n, args.seed, None, args.t_max,
                                  args.jump_cap) for x in starts]
    report.results.update(estimates=[e.to_json() for e in estimates],
                          policy=policy_to_json(policy), n=args.n, seed=args.seed,
                          t_max=args.t_max, jump_cap=args.jump_cap)
    report.tables["estimates"] = (
        ("state", "mean", "std_error", "n_samples", "truncation_fraction"),
        [(e.x0, e.mean, e.std_error, e.n_samples, e.truncation_fraction) for e in estimates])
    return EXIT_OK


def cmd_check(args, doc, report):
    m = _homogeneous(doc)
    if args.values is None:
        raise InputError("check needs --values")
    V = load_values(args.values, m)
    if (V.values < 1).any():
        raise InputError("value tables must be >= 1")
    res = residual(m, V)
    worst = max((abs(r) for r in res.values() if r is not None), default=0.0)
    report.results.update(residual={str(x): r for x, r in res.items()}, max_abs_residual=worst,
                          skipped_infinite=[str(x) for x, r in res.items() if r is None],
                          tol=args.tol, passed=worst <= args.tol)
    report.tables["residual"] = _residual_rows(res)
    return EXIT_OK if worst <= args.tol else EXIT_NONCONVERGED


COMMANDS = {
    "solve": cmd_solve,
    "evaluate": cmd_evaluate,
    "solve-horizon": cmd_solve_horizon,
    "solve-discounted": cmd_solve_discounted,
    "simulate": cmd_simulate,
    "check": cmd_check,
    "iterate": cmd_iterate,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="riskmdp", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--model", required=True)
        s.add_argument("--policy")
        s.add_argument("--values", help="value table JSON (check)")
        s.add_argument("--tol", type=float, default=1e-9 if name == "check" else 1e-12)
        s.add_argument("--max-iter", type=int, default=100_000)
        s.add_argument("--cap", type=float, default=DEFAULT_CAP)
        s.add_argument("--alpha", type=float)
        s.add_argument("--horizon", type=float)
        s.add_argument("--tail-tol", type=float, default=1e-8)
        s.add_argument("--step", type=float)
        s.add_argument("--n", type=int, default=10_000)
        s.add_argument("--seed", type=int, default=0)
        s.add_argument("--x0", help="initial state (simulate; default: every state)")
        s.add_argument("--t-max", type=float, default=DEFAULT_T_MAX)
        s.add_argument("--jump-cap", type=int, default=DEFAULT_JUMP_CAP)
        s.add_argument("--out")
        s.add_argument("--format", choices=("json", "csv"), default="json")
    return p


def _run(args, argv) -> tuple[int, RunReport | None]:
    report = RunReport(command=list(argv))
    t0 = time.perf_counter()
    try:
        doc = load_model(args.model)
        report.model_digest = model_digest(doc)
        code = COMMANDS[args.command](args, doc, report)
    except ModelError as e:
        print(f"riskmdp: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INPUT, None
    except (InputError, ValueError, TypeError) as e:
        print(f"riskmdp: input error: {e}", file=sys.stderr)
        return EXIT_INPUT, None
    except BackwardIntegrationError as e:
        print(f"riskmdp: {e}", file=sys.stderr)
        return EXIT_NONCONVERGED, None
    report.wall_clock = time.perf_counter() - t0
    report.results["exit_code"] = code
    return code, report


def run_command(argv) -> tuple[int, RunReport | None]:
    """Run one subcommand without writing the report; returns (exit code, report)."""
    argv = list(argv)
    return _run(build_parser().parse_args(argv), argv)


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    code, report = _run(args, argv)
    if report is not None:
        try:
            write_report(report, args.format, args.out)
        except OSError as e:
            print(f"riskmdp: cannot write report: {e}", file=sys.stderr)
            return EXIT_INPUT
    return code


if __name__ == "__main__":
    sys.exit(main())
