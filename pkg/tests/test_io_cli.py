import json
import math
import subprocess
import sys

import numpy as np
import pytest

from riskmdp import CtmdpModel, ModelDoc, ValueTable
from riskmdp.cli import main, run_command
from riskmdp.generators import random_model
from riskmdp.io import (ModelInvariantError, ModelParseError, ModelSchemaError, RunReport,
                        dump_model, load_model, model_digest, save_model, value_rows,
                        write_report)

from conftest import CHAIN_DOC

TRAP_DOC = {
    "kind": "homogeneous", "states": ["0", "trap", "up"], "actions": ["a"],
    "rates": {"trap": {"a": {"0": 1.0}}, "up": {"a": {"trap": 2.0}}},
    "costs": {"trap": {"a": 3.0}, "up": {"a": 0.5}},
}


@pytest.fixture
def chain_file(write_json):
    return write_json("chain.json", CHAIN_DOC)


def test_load_homogeneous(chain_file):
    doc = load_model(chain_file)
    assert doc.kind == "homogeneous" and isinstance(doc.model, CtmdpModel)
    assert doc.model.rates[1, 0, 0] == 2.0


def test_negative_rate_is_invariant_error(write_json):
    bad = json.loads(json.dumps(CHAIN_DOC))
    bad["rates"]["1"]["go"]["0"] = -2.0
    with pytest.raises(ModelInvariantError) as e:
        load_model(write_json("bad.json", bad))
    assert [v.path for v in e.value.violations] == ["rates.1.go.0"]


@pytest.mark.parametrize("patch", [
    {"kind": "semi-markov"}, {"states": []}, {"rates": {"1": {"go": {"0": "fast"}}}},
    {"extra": 1}, {"costs": {"1": {"go": {"time_pieces": [{"until": 1.0, "coeffs": [1]}]}}}},
    {"rates": {"9": {"go": {"0": 1.0}}}}])
def test_schema_errors(write_json, patch):
    with pytest.raises(ModelSchemaError):
        load_model(write_json("bad.json", {**CHAIN_DOC, **patch}))


def test_parse_error_reports_position(tmp_path):
    p = tmp_path / "broken.json"
    p.write_text('{"kind": "homogeneous",\n  "states": [0, 1,,]}')
    with pytest.raises(ModelParseError, match=r"broken.json:2:"):
        load_model(p)


def test_time_varying_file(write_json):
    doc = {**CHAIN_DOC, "kind": "time-varying",
           "rates": {"1": {"go": {"0": {"time_pieces": [{"until": 1.0, "coeffs": [1.0, 1.0]},
                                                        {"until": None, "coeffs": [2.0]}]}}}}}
    m = load_model(write_json("tv.json", doc)).model
    assert m.rates_at([0.5])[0, 1, 0, 0] == 1.5
    neg = {**doc, "costs": {"1": {"go": {"time_pieces": [{"until": None, "coeffs": [1.0, -1.0]}]}}}}
    with pytest.raises(ModelInvariantError):
        load_model(write_json("neg.json", neg))


def test_round_trip_digest(tmp_path):
    rng = np.random.default_rng(4)
    for i in range(5):
        doc = ModelDoc("homogeneous", random_model(rng, 5, 3), name=f"m{i}")
        save_model(doc, tmp_path / "m.json")
        again = load_model(tmp_path / "m.json")
        assert model_digest(again) == model_digest(doc)
        assert dump_model(again) == dump_model(doc)


def test_csv_value_table(tmp_path):
    V = ValueTable(("0", "1"), [1.0, 2.0])
    write_report(RunReport([], tables={"values": value_rows(V)}), "csv", tmp_path)
    assert (tmp_path / "values.csv").read_text() == "state,value\n0,1.0\n1,2.0\n"
    V = ValueTable(("0", "1"), [1.0, math.inf])
    write_report(RunReport([], tables={"values": value_rows(V)}), "csv", tmp_path)
    assert (tmp_path / "values.csv").read_text().splitlines()[-1] == "1,inf"


def test_csv_round_trips_floats(tmp_path):
    vals = [1.0, 1 / 3, 2.0000000000000004, 123456789.123456789]
    V = ValueTable(tuple("abcd"), vals)
    write_report(RunReport([], tables={"values": value_rows(V)}), "csv", tmp_path)
    rows = (tmp_path / "values.csv").read_text().splitlines()[1:]
    assert [float(r.split(",")[1]) for r in rows] == vals


# -- subcommands ----------------------------------------------------------------

def test_solve_chain(chain_file):
    code, rep = run_command(["solve", "--model", str(chain_file), "--tol", "1e-12"])
    assert code == 0
    assert rep.results["values"] == {"0": 1.0, "1": 2.0}
    assert rep.results["policy"] == {"0": "go", "1": "go"}
    assert rep.results["max_abs_residual"] <= 1e-9
    assert rep.model_digest == model_digest(load_model(chain_file))


def test_solve_trap_partition(write_json):
    code, rep = run_command(["solve", "--model", str(write_json("trap.json", TRAP_DOC))])
    assert code == 0
    part = rep.results["partition"]
    assert part["finite"] == ["0"] and part["infinite_exact"] == ["trap", "up"]
    assert rep.results["values"]["trap"] == "inf"


def test_solve_nonconvergence_exit_1(chain_file, write_json):
    loop = {"kind": "homogeneous", "states": ["0", "x", "y"], "actions": ["a"],
            "rates": {"x": {"a": {"y": 1.0}}, "y": {"a": {"x": 0.9, "0": 0.1}}},
            "costs": {"x": {"a": 0.1}, "y": {"a": 0.1}}}
    code, rep = run_command(["solve", "--model", str(write_json("l.json", loop)),
                             "--max-iter", "2"])
    assert code == 1 and rep.results["trace"]["converged"] is False


def test_evaluate_and_check(chain_file, write_json):
    pol = write_json("p.json", {"policy": {"0": "go", "1": "go"}})
    code, rep = run_command(["evaluate", "--model", str(chain_file), "--policy", str(pol)])
    assert code == 0 and rep.results["values"]["1"] == 2.0
    good = write_json("v.json", {"values": {"0": 1.0, "1": 2.0}})
    assert run_command(["check", "--model", str(chain_file), "--values", str(good)])[0] == 0
    off = write_json("w.json", {"0": 1.0, "1": 1.5})
    code, rep = run_command(["check", "--model", str(chain_file), "--values", str(off)])
    assert code == 1 and rep.results["max_abs_residual"] == pytest.approx(0.5)


def test_simulate(chain_file, write_json):
    pol = write_json("p.json", {"policy": {"0": "go", "1": "go"}})
    code, rep = run_command(["simulate", "--model", str(chain_file), "--policy", str(pol),
                             "--n", "100000", "--seed", "7", "--x0", "1"])
    assert code == 0
    (est,) = rep.results["estimates"]
    assert abs(est["mean"] - 2.0) <= 3 * est["std_error"] and est["seed"] == 7


def test_solve_horizon_and_discounted(chain_file, tmp_path):
    code, rep = run_command(["solve-horizon", "--model", str(chain_file), "--horizon", "1",
                             "--step", "1e-3"])
    assert code == 0
    assert rep.results["values"]["1"] == pytest.approx(2 - math.exp(-1), rel=1e-10)
    code, rep = run_command(["solve-discounted", "--model", str(chain_file), "--alpha", "1"])
    assert code == 0 and rep.results["meta"]["truncation_horizon"] > 0
    assert rep.tables["grid"][0] == ("t", "state", "value")


def test_iterate_trace_csv(chain_file, tmp_path, capsys):
    out = tmp_path / "csv"
    assert main(["iterate", "--model", str(chain_file), "--format", "csv", "--out",
                 str(out)]) == 0
    assert (out / "trace.csv").read_text().splitlines()[0] == "iter,delta,inf_count"
    assert "iter" in capsys.readouterr().err


def test_grid_csv_sorted(chain_file, tmp_path):
    out = tmp_path / "h"
    main(["solve-horizon", "--model", str(chain_file), "--horizon", "0.1", "--step", "0.05",
          "--format", "csv", "--out", str(out)])
    rows = [r.split(",") for r in (out / "grid.csv").read_text().splitlines()]
    assert rows[0] == ["t", "state", "value"]
    keys = [(float(t), x) for t, x, _ in rows[1:]]
    assert keys == sorted(keys) and len(keys) == 6


@pytest.mark.parametrize("argv", [
    ["solve", "--model", "/nonexistent.json"],
    ["evaluate", "--model", "{chain}"],
    ["solve-discounted", "--model", "{chain}"],
    ["simulate", "--model", "{chain}", "--x0", "nowhere", "--n", "10"],
])
def test_input_errors_exit_2(chain_file, argv, capsys):
    argv = [a.format(chain=chain_file) for a in argv]
    assert main(argv) == 2
    assert "riskmdp" in capsys.readouterr().err


def test_json_report_to_stdout(chain_file, capsys):
    assert main(["solve", "--model", str(chain_file)]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["results"]["values"]["1"] == 2.0 and rep["command"][0] == "solve"


def test_module_entry_point(chain_file):
    out = subprocess.run([sys.executable, "-m", "riskmdp", "solve", "--model", str(chain_file)],
                         capture_output=True, text=True, check=True)
    assert json.loads(out.stdout)["results"]["exit_code"] == 0
