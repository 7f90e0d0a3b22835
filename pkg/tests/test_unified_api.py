"""
Tests for the hocpdmp unified API, tools and CLI.

Tests cover:
- ToolResult dataclass
- api.py: threshold(), check_good(), simulate(), neuron_demo(), run_experiment()
- tools.py: TOOLS schema, dispatch()
- CLI: subcommands, --json, exit codes, reproducible artifacts
- __init__.py: public exports
"""

import json
import subprocess
import sys
from pathlib import Path

import pytest

PROJECT_ROOT = Path(__file__).resolve().parent.parent

NEURON2 = {
    "type": "neuron",
    "N": 2,
    "lambda": 1.0,
    "v_star": 1.0,
    "weights": 0.2,
    "rates": {"kind": "constant", "value": 1.0},
}


# ---------------------------------------------------------------------------
# ToolResult
# ---------------------------------------------------------------------------

class TestToolResult:
    def test_success_result(self):
        from hocpdmp.api import ToolResult
        r = ToolResult(success=True, data={"k_star": 3}, metadata={"v": "1"})
        assert r.success is True
        assert r.error is None
        assert r.to_dict() == {"success": True, "data": {"k_star": 3}, "error": None, "metadata": {"v": "1"}}

    def test_default_metadata_is_independent(self):
        from hocpdmp.api import ToolResult
        r1 = ToolResult(success=True)
        r2 = ToolResult(success=True)
        r1.metadata["a"] = 1
        assert "a" not in r2.metadata


# ---------------------------------------------------------------------------
# api.py
# ---------------------------------------------------------------------------

class TestThresholdAPI:
    def test_value(self):
        from hocpdmp.api import threshold
        result = threshold(3, 2.0, 1.0)
        assert result.success is True
        assert result.data["k_star"] == 3
        assert result.data["guaranteed"] is True
        assert "version" in result.metadata

    def test_invalid_bound(self):
        from hocpdmp.api import threshold
        result = threshold(2, 1.0, 0.0)
        assert result.success is False
        assert result.metadata["module"] == "density"
        assert result.metadata["invariant"] == "B > 0"


class TestCheckGoodAPI:
    def test_description(self):
        from hocpdmp.api import check_good
        result = check_good(NEURON2, [0.5, 0.7], [1, 2], samples=20)
        assert result.success is True, result.error
        assert len(result.data["sigma"]) == 2
        assert result.data["at_y"]["good"] is True
        assert result.data["certificate"]["verdict"] == "good"
        assert result.metadata["model"] == "neuron(N=2)"

    def test_model_file(self, tmp_path):
        from hocpdmp.api import check_good
        path = tmp_path / "model.json"
        path.write_text(json.dumps(NEURON2), encoding="utf-8")
        assert check_good(path, [0.5, 0.7], [1, 2], samples=5).success is True

    def test_bad_schedule(self):
        from hocpdmp.api import check_good
        result = check_good(NEURON2, [0.5], [1, 2])
        assert result.success is False
        assert result.metadata["module"] == "skeleton"

    def test_missing_file(self, tmp_path):
        from hocpdmp.api import check_good
        result = check_good(tmp_path / "none.json", [0.5, 0.7], [1, 2])
        assert result.success is False
        assert result.metadata["module"] == "cli"


class TestSimulateAPI:
    def test_paths(self):
        from hocpdmp.api import simulate
        result = simulate(NEURON2, horizon=20.0, paths=2, seed=5)
        assert result.success is True
        assert [p["stream"] for p in result.data] == [0, 1]
        for p in result.data:
            assert p["final_time"] == pytest.approx(20.0)
            assert len(p["times"]) == p["n_jumps"] == len(p["indices"])

    def test_reproducible(self):
        from hocpdmp.api import simulate
        a = simulate(NEURON2, max_jumps=30, seed=11)
        b = simulate(NEURON2, max_jumps=30, seed=11)
        assert a.data == b.data

    def test_needs_stopping_rule(self):
        from hocpdmp.api import simulate
        result = simulate(NEURON2)
        assert result.success is False
        assert result.metadata["module"] == "cli"


class TestNeuronDemoAPI:
    def test_closed_form(self):
        from hocpdmp.api import neuron_demo
        result = neuron_demo(3, lam=1.3, v_star=0.8, schedules=10, seed=2)
        assert result.success is True
        assert result.data["det_max_rel_error"] < 1e-6
        assert result.data["tolerance"] == 1e-6


class TestRunExperimentAPI:
    def test_threshold(self, tmp_path):
        from hocpdmp.api import run_experiment
        result = run_experiment({"command": "threshold", "params": {"N": 2, "f0": 1.0, "B": 1.0}, "out": str(tmp_path)})
        assert result.success is True
        assert result.metadata["exit_code"] == 0
        assert result.data["data"]["k_star"] == 0
        assert (tmp_path / "report.json").exists()
        assert (tmp_path / "config.json").exists()

    def test_threshold_from_model_file(self, tmp_path):
        from hocpdmp.api import run_experiment
        path = tmp_path / "model.json"
        path.write_text(json.dumps(NEURON2), encoding="utf-8")
        result = run_experiment({"command": "threshold", "model_path": str(path), "out": str(tmp_path / "out")})
        # N f0 = 2 and (N - 1) B = 1: k* = 0
        assert result.data["data"]["k_star"] == 0

    def test_unknown_command(self, tmp_path):
        from hocpdmp.api import run_experiment
        result = run_experiment({"command": "nope", "out": str(tmp_path)})
        assert result.success is False
        assert "Unknown subcommand" in result.error

    def test_estimate_density_artifacts(self, tmp_path):
        from hocpdmp.api import run_experiment
        model = dict(NEURON2, N=1, weights=0.0)
        result = run_experiment({
            "command": "estimate-density",
            "model": model,
            "params": {"d": 0.3, "k": 0},
            "simulation": {"horizon": 400.0},
            "seed": 1,
            "out": str(tmp_path),
        })
        assert result.success is True, result.data
        data = result.data["data"]
        assert data["kde"]["rule"] == "silverman"
        assert "1" in data["smoothness"]
        for name in ("density_hist.csv", "density_kde.csv", "density_representation.csv"):
            assert (tmp_path / name).exists()

    def test_propagate_density(self, tmp_path):
        from hocpdmp.api import run_experiment
        result = run_experiment({
            "command": "propagate-density",
            "model": NEURON2,
            "params": {"mass_points": 201, "points": 20},
            "out": str(tmp_path),
        })
        assert result.success is True, result.data
        names = [c["name"] for c in result.data["checks"]]
        assert names == ["total_mass", "closed_form"]
        assert (tmp_path / "q_1.csv").exists() and (tmp_path / "q_2.csv").exists()


# ---------------------------------------------------------------------------
# tools.py
# ---------------------------------------------------------------------------

class TestToolsSchema:
    def test_tool_structure(self):
        from hocpdmp.tools import TOOLS
        assert len(TOOLS) >= 1
        for tool in TOOLS:
            assert tool["type"] == "function"
            func = tool["function"]
            assert func["name"].startswith("hocpdmp_")
            assert func["description"]
            params = func["parameters"]
            assert params["type"] == "object"
            for req in params["required"]:
                assert req in params["properties"], f"Required field '{req}' not in properties"


class TestToolsDispatch:
    def test_unknown_tool(self):
        from hocpdmp.tools import dispatch
        with pytest.raises(ValueError, match="Unknown tool"):
            dispatch("nonexistent_tool", {})

    def test_json_string_args(self):
        from hocpdmp.tools import dispatch
        result = dispatch("hocpdmp_threshold", json.dumps({"N": 1, "f0": 2.0, "B": 1.0}))
        assert result["success"] is True
        assert result["data"]["k_star"] == 1

    def test_dict_args(self):
        from hocpdmp.tools import dispatch
        result = dispatch("hocpdmp_simulate", {"model": NEURON2, "max_jumps": 5})
        assert result["success"] is True
        assert result["data"][0]["n_jumps"] == 5

    def test_invalid_model(self):
        from hocpdmp.tools import dispatch
        result = dispatch("hocpdmp_check_good", {"model": {"type": "nope"}, "times": [1.0], "indices": [1]})
        assert result["success"] is False
        assert "Unknown model type" in result["error"]


# ---------------------------------------------------------------------------
# CLI
# ---------------------------------------------------------------------------

def _run_cli(*args, timeout=120):
    return subprocess.run(
        [sys.executable, "-m", "hocpdmp.cli.main"] + [str(a) for a in args],
        capture_output=True, text=True, timeout=timeout, cwd=PROJECT_ROOT,
    )


class TestCLIFlags:
    def test_version(self):
        r = _run_cli("-V")
        assert r.returncode == 0
        assert "hocpdmp" in r.stdout

    def test_help_lists_subcommands(self):
        r = _run_cli("--help")
        assert r.returncode == 0
        for name in ("simulate", "check-good", "verify-identities", "estimate-density",
                     "propagate-density", "neuron-demo", "threshold"):
            assert name in r.stdout

    def test_subcommand_help_flags(self):
        r = _run_cli("simulate", "--help")
        assert r.returncode == 0
        for flag in ("--json", "--quiet", "--verbose", "--seed", "--horizon"):
            assert flag in r.stdout

    def test_missing_subcommand(self):
        assert _run_cli().returncode == 2


class TestCLIRuns:
    def test_threshold_json(self, tmp_path):
        r = _run_cli("threshold", "--N", 3, "--f0", 2, "--B", 1, "--json", "--out", tmp_path)
        assert r.returncode == 0, r.stderr
        report = json.loads(r.stdout)
        assert report["data"]["k_star"] == 3
        assert report["passed"] is True

    def test_threshold_without_parameters(self, tmp_path):
        r = _run_cli("threshold", "--out", tmp_path)
        assert r.returncode == 2
        report = json.loads((tmp_path / "report.json").read_text(encoding="utf-8"))
        assert report["error"]["type"] == "ConfigError"

    def test_missing_config_file(self, tmp_path):
        r = _run_cli("threshold", "--config", tmp_path / "missing.json", "--out", tmp_path)
        assert r.returncode == 2
        assert "Configuration error" in r.stderr

    def test_config_file_and_flag_override(self, tmp_path):
        config = tmp_path / "run.json"
        config.write_text(json.dumps({"command": "threshold", "params": {"N": 3, "f0": 2.0, "B": 1.0}}), encoding="utf-8")
        r = _run_cli("threshold", "--config", config, "--f0", 1.0, "--json", "--out", tmp_path / "out")
        assert r.returncode == 0, r.stderr
        # 3 * 1 - 2 = 1 so k* = 0
        assert json.loads(r.stdout)["data"]["k_star"] == 0

    def test_neuron_demo(self, tmp_path):
        r = _run_cli("neuron-demo", "--N", 2, "--skip-identities", "--schedules", 20, "--out", tmp_path)
        assert r.returncode == 0, r.stderr
        report = json.loads((tmp_path / "report.json").read_text(encoding="utf-8"))
        assert report["checks"][0]["name"] == "det_sigma_closed_form"
        # rate floor 0.5 with N = 2 and lam = 1: N f0 = (N - 1) B
        assert report["data"]["threshold"]["guaranteed"] is False

    def test_verify_identities(self, tmp_path):
        model = tmp_path / "model.json"
        model.write_text(json.dumps(NEURON2), encoding="utf-8")
        out = tmp_path / "out"
        r = _run_cli("verify-identities", "--model", model, "--horizon", 2000, "--samples", 300,
                     "--d", 0.3, "--k", 0, "--ipp-support", 0.45, 0.65, "--seed", 5, "--out", out,
                     timeout=600)
        # exit 1 only when a statistical check misses its band
        assert r.returncode in (0, 1), r.stderr
        report = json.loads((out / "report.json").read_text(encoding="utf-8"))
        assert "error" not in report
        assert report["passed"] is (r.returncode == 0)
        names = [c["name"] for c in report["checks"]]
        assert sum(n.startswith("jump_chain[") for n in names) == 5
        assert sum(n.startswith("stationarity[") for n in names) == 5
        assert "jump_count" in names
        assert any(n.startswith("ipp[") for n in names)
        unit = next(c for c in report["checks"] if c["name"] == "representation[const(1)]")
        assert unit["passed"]
        rows = (out / "identities.csv").read_text(encoding="utf-8").splitlines()
        assert rows[0] == "identity,lhs,rhs,residual,se,tolerance,verdict"
        assert len(rows) == len(names) + 1

    def test_check_good(self, tmp_path):
        model = tmp_path / "model.json"
        model.write_text(json.dumps(NEURON2), encoding="utf-8")
        r = _run_cli("check-good", "--model", model, "--times", 0.5, 0.7, "--indices", 1, 2,
                     "--samples", 20, "--enumerate", "--out", tmp_path / "out")
        assert r.returncode == 0, r.stderr
        assert (tmp_path / "out" / "enumeration.csv").exists()

    def test_check_good_nonpositive_threshold(self, tmp_path):
        model = tmp_path / "model.json"
        model.write_text(json.dumps(NEURON2), encoding="utf-8")
        r = _run_cli("check-good", "--model", model, "--times", 0.5, 0.7, "--indices", 1, 2,
                     "--threshold", 0, "--out", tmp_path / "out")
        assert r.returncode == 2
        report = json.loads((tmp_path / "out" / "report.json").read_text(encoding="utf-8"))
        assert report["error"]["type"] == "ConfigError"
        assert "threshold" in report["error"]["error"]

    def test_invalid_model_file(self, tmp_path):
        model = tmp_path / "model.json"
        model.write_text("{broken", encoding="utf-8")
        r = _run_cli("simulate", "--model", model, "--horizon", 5, "--out", tmp_path / "out")
        assert r.returncode == 2


class TestReproducibility:
    def test_artifacts_identical(self, tmp_path):
        model = tmp_path / "model.json"
        model.write_text(json.dumps(NEURON2), encoding="utf-8")
        outs = [tmp_path / "a", tmp_path / "b"]
        for out in outs:
            r = _run_cli("simulate", "--model", model, "--horizon", 50, "--paths", 2,
                         "--seed", 3, "--quiet", "--out", out)
            assert r.returncode == 0, r.stderr
        a, b = outs
        assert (a / "report.json").read_bytes() == (b / "report.json").read_bytes()
        csvs = sorted(p.name for p in a.glob("*.csv"))
        assert csvs == ["jumps_0.csv", "jumps_1.csv", "states_0.csv", "states_1.csv"]
        for name in csvs:
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_config_hash_ignores_out_and_workers(self):
        from hocpdmp.core.runner import RunConfig
        base = {"command": "simulate", "model": NEURON2, "simulation": {"horizon": 10.0}}
        h1 = RunConfig.from_dict(dict(base, out="x")).config_hash()
        h2 = RunConfig.from_dict(dict(base, out="y", workers=4)).config_hash()
        h3 = RunConfig.from_dict(dict(base, seed=1)).config_hash()
        assert h1 == h2
        assert h1 != h3

    def test_run_config_validation(self):
        from hocpdmp.core.errors import ConfigError
        from hocpdmp.core.runner import RunConfig
        with pytest.raises(ConfigError):
            RunConfig.from_dict({"command": "simulate", "seed": -1})
        with pytest.raises(ConfigError):
            RunConfig.from_dict({"command": "simulate", "integrator": {"bogus": 1}})
        with pytest.raises(ConfigError, match="missing"):
            RunConfig.from_dict({})


# ---------------------------------------------------------------------------
# __init__.py exports
# ---------------------------------------------------------------------------

class TestPackageExports:
    def test_version_exported(self):
        import hocpdmp
        assert isinstance(hocpdmp.__version__, str)
        assert hocpdmp.__app_name__ == "hocpdmp"

    def test_functions_exported(self):
        from hocpdmp import check_good, neuron_demo, run_experiment, simulate, threshold
        for fn in (check_good, neuron_demo, run_experiment, simulate, threshold):
            assert callable(fn)
