"""Model, policy and value-table files; run reports."""

from __future__ import annotations

import csv
import hashlib
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import jsonschema
import numpy as np

from .embedded import ValueTable
from .extreal import ExtReal
from .model import KINDS, CtmdpModel, ModelDoc, TerminalCost, TimeVaryingModel, Violation, \
    validate_model
from .stationary import StationaryPolicy
from .timefn import TimeFn
from .timegrid import MarkovPolicyGrid


class ModelError(Exception):
    """Base class for unusable model or policy files."""


class ModelParseError(ModelError):
    pass


class ModelSchemaError(ModelError):
    pass


class ModelInvariantError(ModelError):
    def __init__(self, violations: list[Violation]):
        self.violations = violations
        super().__init__("; ".join(map(str, violations)))


_NUMBER = {"type": "number"}
_UNTIL = {"oneOf": [{"type": "number"}, {"type": "null"}, {"const": "inf"}]}
_PIECEWISE = {
    "type": "object",
    "required": ["time_pieces"],
    "additionalProperties": False,
    "properties": {"time_pieces": {
        "type": "array", "minItems": 1,
        "items": {"type": "object", "required": ["coeffs"], "additionalProperties": False,
                  "properties": {"until": _UNTIL,
                                 "coeffs": {"type": "array", "items": _NUMBER}}}}},
}
_ENTRY = {"oneOf": [_NUMBER, _PIECEWISE]}
_LABEL = {"type": ["string", "integer"]}

MODEL_SCHEMA = {
    "type": "object",
    "required": ["kind", "states", "actions"],
    "properties": {
        "kind": {"enum": list(KINDS)},
        "name": {"type": "string"},
        "description": {"type": "string"},
        "states": {"type": "array", "minItems": 1, "items": _LABEL},
        "actions": {"type": "array", "minItems": 1, "items": _LABEL},
        "rates": {"type": "object", "additionalProperties": {
            "type": "object", "additionalProperties": {
                "type": "object", "additionalProperties": _ENTRY}}},
        "costs": {"type": "object", "additionalProperties": {
            "type": "object", "additionalProperties": _ENTRY}},
        "alpha": _NUMBER,
        "T": _NUMBER,
        "terminal_g": {"type": "object", "additionalProperties": _NUMBER},
    },
    "additionalProperties": False,
}


def _read_json(path):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as e:
        raise ModelParseError(f"{path}: {e}") from e
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise ModelParseError(f"{path}:{e.lineno}:{e.colno}: {e.msg}") from e


def _entry(obj) -> TimeFn | float:
    if isinstance(obj, dict):
        spec = []
        for i, piece in enumerate(obj["time_pieces"]):
            until = piece.get("until")
            until = None if until in (None, "inf") else float(until)
            spec.append((until, piece["coeffs"]))
        if spec[-1][0] is not None:
            raise ModelSchemaError("the last time piece must extend to infinity (until: null)")
        try:
            return TimeFn.from_spec(spec)
        except ValueError as e:
            raise ModelSchemaError(f"bad time pieces: {e}") from e
    return float(obj)


def parse_model(obj: dict, source: str = "<model>") -> ModelDoc:
    """Schema-check and build a :class:`ModelDoc`; invariants are not checked here."""
    try:
        jsonschema.validate(obj, MODEL_SCHEMA)
    except jsonschema.ValidationError as e:
        path = ".".join(str(p) for p in e.absolute_path) or "<root>"
        raise ModelSchemaError(f"{source}: {path}: {e.message}") from e
    states = tuple(str(s) for s in obj["states"])
    actions = tuple(str(a) for a in obj["actions"])
    if len(set(states)) != len(states) or len(set(actions)) != len(actions):
        raise ModelSchemaError(f"{source}: duplicate state or action labels")
    sidx = {x: i for i, x in enumerate(states)}
    aidx = {a: i for i, a in enumerate(actions)}
    S, A = len(states), len(actions)

    def lookup(table, key, what, path):
        if key not in table:
            raise ModelSchemaError(f"{source}: {path}: unknown {what} {key!r}")
        return table[key]

    rates = [[[0.0] * S for _ in range(A)] for _ in range(S)]
    costs = [[0.0] * A for _ in range(S)]
    diagonal = []
    for x, row in obj.get("rates", {}).items():
        xi = lookup(sidx, x, "state", f"rates.{x}")
        for a, targets in row.items():
            ai = lookup(aidx, a, "action", f"rates.{x}.{a}")
            for y, v in targets.items():
                yi = lookup(sidx, y, "state", f"rates.{x}.{a}.{y}")
                if yi == xi:
                    diagonal.append(Violation(f"rates.{x}.{a}.{y}",
                                              "diagonal entries are implied by the exit rate"))
                    continue
                rates[xi][ai][yi] = _entry(v)
    for x, row in obj.get("costs", {}).items():
        xi = lookup(sidx, x, "state", f"costs.{x}")
        for a, v in row.items():
            costs[xi][lookup(aidx, a, "action", f"costs.{x}.{a}")] = _entry(v)

    time_varying = any(isinstance(v, TimeFn) for r in rates for ra in r for v in ra) or \
        any(isinstance(v, TimeFn) for r in costs for v in r)
    if time_varying:
        as_fn = lambda v: v if isinstance(v, TimeFn) else TimeFn.constant(v)  # noqa: E731
        model = TimeVaryingModel(states, actions,
                                 [[[as_fn(v) for v in ra] for ra in r] for r in rates],
                                 [[as_fn(v) for v in r] for r in costs])
    else:
        model = CtmdpModel(states, actions, np.array(rates), np.array(costs))
    terminal = None
    if "terminal_g" in obj:
        g = [0.0] * S
        for x, v in obj["terminal_g"].items():
            g[lookup(sidx, x, "state", f"terminal_g.{x}")] = float(v)
        terminal = TerminalCost(g)
    doc = ModelDoc(obj["kind"], model, obj.get("alpha"), obj.get("T"), terminal,
                   obj.get("name", ""), obj.get("description", ""))
    doc.metadata["diagonal_violations"] = diagonal
    return doc


def load_model(path) -> ModelDoc:
    """Read, schema-check and invariant-check a model file.

    Raises ModelParseError, ModelSchemaError or ModelInvariantError.
    """
    doc = parse_model(_read_json(path), str(path))
    violations = doc.metadata.pop("diagonal_violations", []) + validate_model(doc)
    if violations:
        raise ModelInvariantError(violations)
    return doc


def _dump_entry(v):
    if isinstance(v, TimeFn):
        if v.is_constant:
            return v.constant_value
        return {"time_pieces": [{"until": None if math.isinf(u) else u, "coeffs": list(c)}
                                for u, c in v.to_spec()]}
    return float(v)


def _is_zero(v) -> bool:
    return (v.is_constant and v.constant_value == 0.0) if isinstance(v, TimeFn) else v == 0.0


def dump_model(doc: ModelDoc) -> dict:
    m = doc.model
    out: dict = {"kind": doc.kind}
    if doc.name:
        out["name"] = doc.name
    if doc.description:
        out["description"] = doc.description
    out["states"] = list(m.states)
    out["actions"] = list(m.actions)
    S, A = m.n_states, m.n_actions
    if isinstance(m, CtmdpModel):
        rate = lambda x, a, y: float(m.rates[x, a, y])  # noqa: E731
        cost = lambda x, a: float(m.costs[x, a])  # noqa: E731
    else:
        rate = lambda x, a, y: m.rates[x][a][y]  # noqa: E731
        cost = lambda x, a: m.costs[x][a]  # noqa: E731
    rates: dict = {}
    costs: dict = {}
    for x in range(S):
        for a in range(A):
            for y in range(S):
                v = rate(x, a, y)
                if y != x and not _is_zero(v):
                    rates.setdefault(m.states[x], {}).setdefault(m.actions[a], {})[
                        m.states[y]] = _dump_entry(v)
            v = cost(x, a)
            if not _is_zero(v):
                costs.setdefault(m.states[x], {})[m.actions[a]] = _dump_entry(v)
    out["rates"] = rates
    out["costs"] = costs
    if doc.alpha is not None:
        out["alpha"] = doc.alpha
    if doc.horizon is not None:
        out["T"] = doc.horizon
    if doc.terminal is not None:
        out["terminal_g"] = dict(zip(m.states, doc.terminal.g))
    return out


def save_model(doc: ModelDoc, path) -> None:
    Path(path).write_text(json.dumps(dump_model(doc), indent=2) + "\n", encoding="utf-8")


def model_digest(doc: ModelDoc) -> str:
    canon = json.dumps(dump_model(doc), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


# -- policies and value tables ----------------------------------------------------

def load_policy(path, m) -> StationaryPolicy | MarkovPolicyGrid:
    """``{"policy": {state: action}}`` or ``{"times": [...], "policy": [{state: action}, ...]}``."""
    obj = _read_json(path)
    if not isinstance(obj, dict) or "policy" not in obj:
        raise ModelSchemaError(f"{path}: policy file needs a 'policy' entry")
    try:
        if "times" in obj:
            times = np.asarray(obj["times"], dtype=float)
            rows = obj["policy"]
            if len(rows) != len(times) or not len(times) or np.any(np.diff(times) <= 0):
                raise ValueError("one policy row per strictly increasing grid time required")
            acts = np.array([StationaryPolicy.from_labels(m, r).actions for r in rows])
            return MarkovPolicyGrid(times, m.states, acts, m.actions)
        return StationaryPolicy.from_labels(m, obj["policy"])
    except (ValueError, TypeError, AttributeError) as e:
        raise ModelSchemaError(f"{path}: {e}") from e


def policy_to_json(policy) -> dict:
    if isinstance(policy, MarkovPolicyGrid):
        labels = policy.action_labels
        return {"times": [float(t) for t in policy.times],
                "policy": [{str(x): labels[a] for x, a in zip(policy.states, row)}
                           for row in policy.actions]}
    return {"policy": policy.to_json()}


def load_values(path, m) -> ValueTable:
    obj = _read_json(path)
    if isinstance(obj, dict) and "values" in obj:
        obj = obj["values"]
    try:
        return ValueTable.from_json(m.states, obj)
    except (KeyError, ValueError, TypeError) as e:
        raise ModelSchemaError(f"{path}: bad value table: {e}") from e


# -- reports ------------------------------------------------------------------------

def render_number(v) -> str:
    """Shortest round-trip decimal for finite values, ``inf`` for the infinite tag."""
    v = float(v)
    return "inf" if math.isinf(v) else repr(v)


@dataclass
class RunReport:
    command: list
    model_digest: Optional[str] = None
    results: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)  # name -> (header, rows)
    wall_clock: float = 0.0

    def to_json(self) -> dict:
        return {"command": self.command, "model_digest": self.model_digest,
                "results": self.results, "wall_clock": self.wall_clock}


def value_rows(V: ValueTable):
    return ("state", "value"), [(x, v) for x, v in zip(V.states, V.values)]


def write_report(report: RunReport, fmt: str = "json", out=None) -> list[Path]:
    """JSON: the whole report to ``out`` (stdout when None). CSV: one file per table in ``out``."""
    if fmt == "json":
        text = json.dumps(jsonable(report.to_json()), indent=2) + "\n"
        if out is None:
            sys.stdout.write(text)
            return []
        Path(out).write_text(text, encoding="utf-8")
        return [Path(out)]
    if fmt != "csv":
        raise ValueError(f"unknown report format {fmt!r}")
    outdir = Path(out if out is not None else ".")
    outdir.mkdir(parents=True, exist_ok=True)
    written = []
    for name, (header, rows) in report.tables.items():
        path = outdir / f"{name}.csv"
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([render_number(c) if isinstance(c, (float, np.floating)) else c
                            for c in row])
        written.append(path)
    return written


def jsonable(o):
    """Recursively convert to JSON-safe values; infinities become ``"inf"``."""
    if isinstance(o, dict):
        return {str(k): jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple, np.ndarray)):
        return [jsonable(v) for v in o]
    if isinstance(o, ExtReal):
        return o.to_json()
    if isinstance(o, (bool, np.bool_)):
        return bool(o)
    if isinstance(o, (int, np.integer)):
        return int(o)
    if isinstance(o, (float, np.floating)):
        return "inf" if math.isinf(o) else float(o)
    return o
