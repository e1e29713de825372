import json

import numpy as np
import pytest

from riskmdp import CtmdpModel


def make_model(states, actions, rates, costs):
    """Dense model from {(x, a, y): rate} and {(x, a): cost} dicts."""
    S, A = len(states), len(actions)
    R = np.zeros((S, A, S))
    C = np.zeros((S, A))
    for (x, a, y), v in rates.items():
        R[states.index(x), actions.index(a), states.index(y)] = v
    for (x, a), v in costs.items():
        C[states.index(x), actions.index(a)] = v
    return CtmdpModel(tuple(states), tuple(actions), R, C)


@pytest.fixture
def chain():
    """State 1 jumps to absorbing 0 at rate 2 with cost rate 1."""
    return make_model(["0", "1"], ["go"], {("1", "go", "0"): 2.0}, {("1", "go"): 1.0})


@pytest.fixture
def two_action():
    return make_model(["0", "1"], ["a1", "a2"],
                      {("1", "a1", "0"): 2.0, ("1", "a2", "0"): 4.0},
                      {("1", "a1"): 1.0, ("1", "a2"): 1.0})


@pytest.fixture
def trap():
    """'trap' has c >= q under both actions; 'up' feeds it with probability 1; 'safe' escapes."""
    return make_model(
        ["0", "trap", "up", "up2", "safe"], ["a", "b"],
        {("trap", "a", "0"): 1.0, ("trap", "b", "up"): 0.5,
         ("up", "a", "trap"): 3.0, ("up", "b", "trap"): 1.0,
         ("up2", "a", "up"): 2.0, ("up2", "b", "up"): 2.0,
         ("safe", "a", "0"): 1.0, ("safe", "b", "up"): 1.0},
        {("trap", "a"): 1.0, ("trap", "b"): 2.0, ("up", "a"): 0.1, ("up", "b"): 0.1,
         ("up2", "a"): 0.1, ("up2", "b"): 0.2, ("safe", "a"): 0.1, ("safe", "b"): 0.1})


@pytest.fixture
def zero_cost():
    rng = np.random.default_rng(0)
    R = rng.uniform(0, 3, (4, 2, 4))
    return CtmdpModel(tuple("abcd"), ("u", "v"), R, np.zeros((4, 2)))


@pytest.fixture
def write_json(tmp_path):
    def write(name, obj):
        p = tmp_path / name
        p.write_text(json.dumps(obj))
        return p
    return write


CHAIN_DOC = {
    "kind": "homogeneous",
    "name": "absorbing chain",
    "states": ["0", "1"],
    "actions": ["go"],
    "rates": {"1": {"go": {"0": 2.0}}},
    "costs": {"1": {"go": 1.0}},
}


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[key])
