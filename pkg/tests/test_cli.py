import json
import subprocess
import sys
from pathlib import Path

import jsonschema
import pytest

from contestdesign import cli
from contestdesign._validation import CapacityError, InfeasibleError

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"
SCHEMAS = ROOT / "docs" / "schemas"


def schema(name):
    return json.loads((SCHEMAS / f"{name}.schema.json").read_text())


def run(tmp_path, command, config, *extra, out="out"):
    target = tmp_path / out
    code = cli.main([command, "--config", str(config), "--out", str(target), *extra])
    return code, target


def write_config(tmp_path, raw, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(raw))
    return path


def base_config(**overrides):
    raw = json.loads((CONFIGS / "increasing.json").read_text())
    raw.update(overrides)
    return raw


def error_line(capsys):
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1
    payload = json.loads(err[0])
    jsonschema.validate(payload, schema("error"))
    return payload


class TestSubcommands:
    def test_solve(self, tmp_path):
        code, out = run(tmp_path, "solve", CONFIGS / "increasing.json")
        assert code == 0
        doc = json.loads((out / "solve.json").read_text())
        jsonschema.validate(doc, schema("solve"))
        assert doc["result"]["case"] == "single-threshold"
        assert doc["result"]["thresholds"]["x_low"] == pytest.approx(0.7)
        assert doc["seed"] == 7 and len(doc["config_hash"]) == 64

    def test_solve_with_prior(self, tmp_path):
        raw = base_config(prior=[{"measure": {"type": "uniform"}, "weight": 0.5}, {"measure": {"type": "triangular"}, "weight": 0.5}])
        code, out = run(tmp_path, "solve", write_config(tmp_path, raw))
        assert code == 0
        doc = json.loads((out / "solve.json").read_text())
        jsonschema.validate(doc, schema("solve"))
        assert len(doc["prior"]["results"]) == 2

    def test_vertices(self, tmp_path):
        code, out = run(tmp_path, "vertices", CONFIGS / "vertices.json")
        assert code == 0
        doc = json.loads((out / "vertices.json").read_text())
        jsonschema.validate(doc, schema("vertices"))
        assert doc["all_certified"] and doc["count"] == len(doc["vertices"]) > 0

    def test_vertices_slack_on_lattice(self, tmp_path):
        raw = {"domain": {"x": {"points": [0, 1, 2]}, "y": {"points": [0, 1]}}, "budget": 0.25, "measure": {"type": "uniform", "exact": True}}
        code, out = run(tmp_path, "vertices", write_config(tmp_path, raw), "--slack")
        doc = json.loads((out / "vertices.json").read_text())
        assert code == 0 and doc["constraint"] == "inequality" and doc["all_certified"]

    @pytest.mark.parametrize("fmt", ["csv", "json"])
    def test_sweep(self, tmp_path, fmt):
        code, out = run(tmp_path, "sweep", CONFIGS / "increasing.json", "--format", fmt, "--k-steps", "20")
        assert code == 0
        doc = json.loads((out / "sweep.json").read_text())
        jsonschema.validate(doc, schema("sweep"))
        assert doc["concave"]
        if fmt == "csv":
            lines = (out / "sweep.csv").read_text().splitlines()
            assert lines[0].startswith("# config_hash=")
            assert lines[1] == "k,payoff,x_low,x_high,alpha,marginal_fd,pi_at_threshold"
            assert len(lines) == 22
        else:
            assert len(doc["rows"]) == 20

    def test_equilibrium(self, tmp_path):
        code, out = run(tmp_path, "equilibrium", CONFIGS / "increasing.json")
        assert code == 0
        doc = json.loads((out / "equilibrium.json").read_text())
        jsonschema.validate(doc, schema("equilibrium"))
        assert doc["is_equilibrium"] and doc["converged"]
        assert (out / "trace.csv").read_text().splitlines()[1] == "iter,tv_change,max_gain,mean_effort"

    def test_equilibrium_from_profile_json_trace(self, tmp_path):
        raw = base_config(profile={"type": "atoms", "support": [0.5], "mass": [1]}, dynamics={"max_iters": 5})
        code, out = run(tmp_path, "equilibrium", write_config(tmp_path, raw), "--format", "json")
        doc = json.loads((out / "equilibrium.json").read_text())
        assert code == 0 and not doc["is_equilibrium"] and doc["iterations"] == 5
        assert len(json.loads((out / "trace.json").read_text())) == 5

    def test_check(self, tmp_path):
        code, out = run(tmp_path, "check", CONFIGS / "noisy.json")
        assert code == 0
        doc = json.loads((out / "check.json").read_text())
        jsonschema.validate(doc, schema("check"))
        assert doc["fan_lorentz"]["passed"]
        assert doc["topkis"]["argmax_invariant"]
        assert doc["budget_conservation"]["passed"]

    def test_check_reports_witness(self, tmp_path):
        raw = base_config(surface={"family": "product-decreasing"}, samples=100)
        code, out = run(tmp_path, "check", write_config(tmp_path, raw))
        doc = json.loads((out / "check.json").read_text())
        assert code == 0 and not doc["fan_lorentz"]["supermodular"]
        assert doc["fan_lorentz"]["witness"] is not None

    def test_compare(self, tmp_path):
        code, out = run(tmp_path, "compare", CONFIGS / "bump.json")
        assert code == 0
        doc = json.loads((out / "compare.json").read_text())
        jsonschema.validate(doc, schema("compare"))
        payoff = {d["family"]: d["payoff"] for d in doc["designs"]}
        assert payoff["two-step"] >= payoff["constant"]

    def test_stdout_lists_files(self, tmp_path, capsys):
        run(tmp_path, "solve", CONFIGS / "increasing.json")
        msg = json.loads(capsys.readouterr().out)
        assert msg["command"] == "solve" and msg["written"][0].endswith("solve.json")

    def test_seed_flag_overrides(self, tmp_path):
        _, out = run(tmp_path, "solve", CONFIGS / "increasing.json", "--seed", "99")
        assert json.loads((out / "solve.json").read_text())["seed"] == 99


class TestErrors:
    def test_budget_out_of_range(self, tmp_path, capsys):
        code, _ = run(tmp_path, "solve", write_config(tmp_path, base_config(budget=1.5)))
        assert code == 2
        assert error_line(capsys)["path"] == "budget"

    def test_missing_field(self, tmp_path, capsys):
        raw = base_config()
        del raw["budget"]
        code, _ = run(tmp_path, "solve", write_config(tmp_path, raw))
        assert code == 2 and error_line(capsys)["path"] == "budget"

    def test_unknown_field(self, tmp_path, capsys):
        code, _ = run(tmp_path, "solve", write_config(tmp_path, base_config(colour="red")))
        assert code == 2 and error_line(capsys)["path"] == "colour"

    def test_nested_path(self, tmp_path, capsys):
        raw = base_config(measure={"type": "atoms", "support": [0.5], "mass": [0.2]})
        code, _ = run(tmp_path, "solve", write_config(tmp_path, raw))
        assert code == 2 and error_line(capsys)["path"] == "measure"

    def test_unreadable_config(self, tmp_path, capsys):
        code, _ = run(tmp_path, "solve", tmp_path / "missing.json")
        assert code == 2 and error_line(capsys)["path"] == "<config>"

    def test_concave_cost(self, tmp_path, capsys):
        raw = base_config(primitives={"cost": {"family": "power", "p": 0.5}})
        code, _ = run(tmp_path, "equilibrium", write_config(tmp_path, raw))
        assert code == 2 and error_line(capsys)["path"] == "primitives"

    def test_capacity(self, tmp_path, capsys):
        raw = base_config(domain={"start": 0, "stop": 1, "num": 20})
        code, _ = run(tmp_path, "vertices", write_config(tmp_path, raw))
        assert code == 3 and error_line(capsys)["error"] == "capacity"

    @pytest.mark.parametrize("exc,code", [(InfeasibleError("no rule"), 4), (CapacityError("too big"), 3)])
    def test_exit_code_mapping(self, tmp_path, capsys, monkeypatch, exc, code):
        def boom(cfg, args):
            raise exc

        monkeypatch.setitem(cli.COMMANDS, "solve", boom)
        assert run(tmp_path, "solve", CONFIGS / "increasing.json")[0] == code
        assert error_line(capsys)["exit_code"] == code

    def test_nothing_written_on_error(self, tmp_path):
        run(tmp_path, "solve", write_config(tmp_path, base_config(budget=0)))
        assert not (tmp_path / "out").exists()


class TestDeterminism:
    @pytest.mark.parametrize(
        "command,config,files",
        [
            ("solve", "bump.json", ["solve.json"]),
            ("sweep", "increasing.json", ["sweep.json", "sweep.csv"]),
            ("equilibrium", "bump.json", ["equilibrium.json", "trace.csv"]),
            ("check", "noisy.json", ["check.json"]),
        ],
    )
    def test_rerun_identical(self, tmp_path, command, config, files):
        _, a = run(tmp_path, command, CONFIGS / config, out="a")
        _, b = run(tmp_path, command, CONFIGS / config, out="b")
        for f in files:
            assert (a / f).read_bytes() == (b / f).read_bytes()

    def test_sweep_jobs(self, tmp_path):
        _, a = run(tmp_path, "sweep", CONFIGS / "bump.json", "--jobs", "1", out="a")
        _, b = run(tmp_path, "sweep", CONFIGS / "bump.json", "--jobs", "8", out="b")
        assert (a / "sweep.csv").read_bytes() == (b / "sweep.csv").read_bytes()

    def test_parallel_processes(self, tmp_path):
        procs = [
            subprocess.Popen(
                [sys.executable, "-m", "contestdesign", "sweep", "--config", str(CONFIGS / "increasing.json"), "--out", str(tmp_path / f"p{i}"), "--jobs", str(1 + i)],
                stdout=subprocess.DEVNULL,
            )
            for i in range(4)
        ]
        assert all(p.wait(timeout=120) == 0 for p in procs)
        ref = (tmp_path / "p0" / "sweep.csv").read_bytes()
        assert all((tmp_path / f"p{i}" / "sweep.csv").read_bytes() == ref for i in range(1, 4))
