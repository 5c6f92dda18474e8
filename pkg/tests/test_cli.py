import csv
import json
import math
import subprocess
import sys
from pathlib import Path

import pytest

from relbohm import __version__
from relbohm.cli import main
from relbohm.scenarios import (
    CSV_COLUMNS,
    EXIT_CONFIG,
    EXIT_DIVERGENT,
    EXIT_NUMERICAL,
    OUTPUT_ENV,
    SCENARIOS,
    ConfigError,
    parse_config,
)

BOX = {"family": "box", "box_length": 1.0, "modes": {"1": [1.0, 0.0], "2": [1.0, 0.0]}}

SMALL = {
    "trajectories": {"scenario": "trajectories", "state": BOX, "numerics": {"step": 0.01},
                     "params": {"x0": [0.3, 0.6], "t_end": 1.0, "log_density": True}},
    "figure1": {"scenario": "figure1", "numerics": {"step": 0.05}, "params": {"l_values": [1, 5]}},
    "spectrum": {"scenario": "spectrum", "params": {"box_length": math.pi}},
    "qpotential": {"scenario": "qpotential", "state": BOX, "numerics": {"grid_points": 64}, "params": {"t": 0.3}},
    "equilibrium": {"scenario": "equilibrium", "state": BOX,
                    "numerics": {"particles": 2000, "bins": 10, "step": 0.05, "seed": 4},
                    "params": {"snapshots": 3}},
    "kernel-check": {"scenario": "kernel-check", "numerics": {"grid_points": 256}},
    "equivariance": {"scenario": "equivariance", "model": "N:1", "state": BOX,
                     "numerics": {"grid_points": 64}, "params": {"t": 0.2}},
}


def write_config(path: Path, cfg: dict) -> Path:
    path.write_text(json.dumps(cfg))
    return path


def run(tmp_path, cfg, name="out", *extra):
    config = write_config(tmp_path / f"{name}.json", cfg)
    out = tmp_path / name
    code = main(["run", str(config), "--out", str(out), *extra])
    return code, out


def header(path: Path):
    with open(path, newline="") as fh:
        return next(csv.reader(fh))


def rows(path: Path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def output_bytes(out: Path) -> dict:
    return {p.relative_to(out).as_posix(): p.read_bytes()
            for p in sorted(out.rglob("*")) if p.is_file() and p.name != "manifest.json"}


class TestValidation:
    def test_lists_every_problem(self, tmp_path, capsys):
        cfg = {"scenario": "qpotential", "colour": "red", "model": "N:0",
               "numerics": {"grid_points": 1000, "speed": 3},
               "state": {"family": "box", "box_length": -1.0}}
        code = main(["validate", str(write_config(tmp_path / "bad.json", cfg))])
        err = capsys.readouterr().err
        assert code == EXIT_CONFIG
        for fragment in ("colour", "model", "grid_points", "numerics.speed", "state.modes", "box_length"):
            assert fragment in err

    def test_parse_config_collects_errors(self):
        with pytest.raises(ConfigError) as info:
            parse_config({"scenario": "nope", "numerics": {"seed": -1}})
        assert len(info.value.errors) >= 2

    def test_invalid_json(self, tmp_path):
        p = tmp_path / "broken.json"
        p.write_text("{not json")
        assert main(["validate", str(p)]) == EXIT_CONFIG

    def test_validate_prints_resolved(self, tmp_path, capsys):
        code = main(["validate", str(write_config(tmp_path / "s.json", SMALL["spectrum"]))])
        resolved = json.loads(capsys.readouterr().out)
        assert code == 0
        assert resolved["numerics"]["grid_points"] == 1024
        assert resolved["params"]["n_max"] == 5
        assert resolved["model"] == "exact"

    def test_list_scenarios(self, capsys):
        assert main(["list-scenarios"]) == 0
        out = capsys.readouterr().out
        assert [line.split()[0] for line in out.splitlines()] == list(SCENARIOS)

    def test_version_subprocess(self):
        res = subprocess.run([sys.executable, "-m", "relbohm", "--version"], capture_output=True, text=True)
        assert res.returncode == 0
        assert __version__ in res.stdout


class TestScenarios:
    def test_spectrum_values(self, tmp_path):
        code, out = run(tmp_path, SMALL["spectrum"])
        assert code == 0
        table = rows(out / "spectrum.csv")
        assert float(table[0]["E_exact"]) == pytest.approx(math.sqrt(2), abs=1e-12)
        assert float(table[0]["E_nonrel_limit"]) == pytest.approx(1.5, abs=1e-12)
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["diagnostics"]["beyond_convergence_radius"] == [2, 3, 4, 5]

    def test_figure1_outputs(self, tmp_path):
        code, out = run(tmp_path, SMALL["figure1"])
        assert code == 0
        names = sorted(p.name for p in out.glob("figure1_l*.csv"))
        assert names == ["figure1_l1_nonrelativistic.csv", "figure1_l1_relativistic.csv",
                         "figure1_l5_nonrelativistic.csv", "figure1_l5_relativistic.csv"]
        gaps = rows(out / "figure1_gaps.csv")
        assert [float(r["l"]) for r in gaps] == [1.0, 5.0]

    def test_manifest_contents(self, tmp_path):
        code, out = run(tmp_path, SMALL["kernel-check"])
        manifest = json.loads((out / "manifest.json").read_text())
        assert code == 0
        assert manifest["version"] == __version__
        assert manifest["seed"] == 0
        assert manifest["resolved_config"]["numerics"]["grid_points"] == 256
        assert "T" in manifest["timestamp"]
        assert set(manifest["outputs"]) == {"kernel_check.csv"}
        assert manifest["diagnostics"]["max_rel_L2_error"] < 1e-6

    def test_plots_are_svg(self, tmp_path):
        code, out = run(tmp_path, {**SMALL["spectrum"], "plots": True})
        assert code == 0
        assert (out / "spectrum.svg").read_text().lstrip().startswith("<?xml")


class TestSchemas:
    """Column names and order are part of the output contract."""

    GOLDEN = {
        "trajectories": {"trajectory_000.csv": ["t", "x", "v", "log_density"]},
        "figure1": {"figure1_l1_relativistic.csv": ["t", "x", "v"],
                    "figure1_gaps.csv": ["l", "box_length", "beat_period", "max_gap", "normalized_gap"]},
        "spectrum": {"spectrum.csv": ["n", "E_exact", "E_truncatedN", "E_nonrel_limit"]},
        "qpotential": {"qpotential.csv": ["x", "R2", "gradS", "v", "Q", "F", "hj_residual", "mask"]},
        "equilibrium": {
            "equilibrium.csv": ["t", "tv_distance", "excluded_fraction", "characteristic_tv",
                                "max_continuity_defect"],
            "histograms/hist_000.csv": ["bin_left", "bin_right", "particle_prob", "born_prob",
                                        "characteristic_prob"],
        },
        "kernel-check": {"kernel_check.csv": ["packet_width", "rel_L2_error"]},
        "equivariance": {"equivariance.csv": ["x", "residual"]},
    }

    @pytest.mark.parametrize("scenario", list(SCENARIOS))
    def test_headers(self, tmp_path, scenario):
        code, out = run(tmp_path, SMALL[scenario])
        assert code == 0
        for name, columns in self.GOLDEN[scenario].items():
            assert header(out / name) == columns

    def test_trajectory_without_log_density(self, tmp_path):
        cfg = json.loads(json.dumps(SMALL["trajectories"]))
        cfg["params"]["log_density"] = False
        code, out = run(tmp_path, cfg)
        assert code == 0
        assert header(out / "trajectory_001.csv") == ["t", "x", "v"]

    def test_library_table_matches(self):
        assert CSV_COLUMNS["equilibrium"][:3] == ["t", "tv_distance", "excluded_fraction"]


class TestReproducibility:
    @pytest.mark.parametrize("scenario", ["equilibrium", "trajectories", "qpotential"])
    def test_manifest_round_trip(self, tmp_path, scenario):
        code, first = run(tmp_path, SMALL[scenario], "first")
        assert code == 0
        again = tmp_path / "again"
        assert main(["run", str(first / "manifest.json"), "--out", str(again)]) == 0
        assert output_bytes(first) == output_bytes(again)
        m1 = json.loads((first / "manifest.json").read_text())
        m2 = json.loads((again / "manifest.json").read_text())
        assert m1["outputs"] == m2["outputs"]
        assert m1["resolved_config"] == m2["resolved_config"]

    def test_threads_do_not_change_bytes(self, tmp_path):
        _, serial = run(tmp_path, SMALL["equilibrium"], "serial")
        _, threaded = run(tmp_path, SMALL["equilibrium"], "threaded", "--threads", "3")
        assert output_bytes(serial) == output_bytes(threaded)

    def test_seed_override(self, tmp_path):
        _, a = run(tmp_path, SMALL["equilibrium"], "a", "--seed", "9")
        _, b = run(tmp_path, SMALL["equilibrium"], "b")
        manifest = json.loads((a / "manifest.json").read_text())
        assert manifest["seed"] == 9
        assert (a / "equilibrium.csv").read_bytes() != (b / "equilibrium.csv").read_bytes()

    def test_no_temporary_files_left(self, tmp_path):
        _, out = run(tmp_path, SMALL["equilibrium"])
        leftovers = [p for p in out.rglob("*") if p.is_file() and p.suffix not in {".csv", ".json"}]
        assert leftovers == []

    def test_output_checksums(self, tmp_path):
        import hashlib

        _, out = run(tmp_path, SMALL["spectrum"])
        manifest = json.loads((out / "manifest.json").read_text())
        for name, digest in manifest["outputs"].items():
            assert hashlib.sha256((out / name).read_bytes()).hexdigest() == digest


class TestOutputDirectory:
    def test_environment_override(self, tmp_path, monkeypatch):
        target = tmp_path / "from-env"
        monkeypatch.setenv(OUTPUT_ENV, str(target))
        config = write_config(tmp_path / "c.json", {**SMALL["spectrum"], "output_dir": str(tmp_path / "cfg")})
        assert main(["run", str(config)]) == 0
        assert (target / "spectrum.csv").exists()
        assert not (tmp_path / "cfg").exists()

    def test_flag_beats_environment(self, tmp_path, monkeypatch):
        monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "from-env"))
        code, out = run(tmp_path, SMALL["spectrum"])
        assert code == 0
        assert (out / "spectrum.csv").exists()
        assert not (tmp_path / "from-env").exists()

    def test_config_value_used_last(self, tmp_path, monkeypatch):
        monkeypatch.delenv(OUTPUT_ENV, raising=False)
        config = write_config(tmp_path / "c.json", {**SMALL["spectrum"], "output_dir": str(tmp_path / "cfg")})
        assert main(["run", str(config)]) == 0
        assert (tmp_path / "cfg" / "spectrum.csv").exists()


class TestFailures:
    def test_divergent_truncation(self, tmp_path, capsys):
        cfg = {**SMALL["qpotential"], "model": "N:2"}
        code, _ = run(tmp_path, cfg)
        assert code == EXIT_DIVERGENT
        assert "|p| > 1" in capsys.readouterr().err

    def test_nonrelativistic_truncation_never_divergent(self, tmp_path):
        code, _ = run(tmp_path, {**SMALL["qpotential"], "model": "N:1"})
        assert code == 0

    def test_all_masked(self, tmp_path, capsys):
        cfg = {"scenario": "equivariance", "state": {"family": "plane", "k": 0.3, "amplitude": [0.0, 0.0]},
               "numerics": {"grid_points": 32, "domain_length": 10.0}}
        code, _ = run(tmp_path, cfg)
        assert code == EXIT_NUMERICAL
        assert "node" in capsys.readouterr().err

    def test_missing_config_file(self, tmp_path):
        assert main(["run", str(tmp_path / "absent.json")]) != 0

    def test_kernel_check_needs_exact(self, tmp_path):
        code, _ = run(tmp_path, {**SMALL["kernel-check"], "model": "N:3"})
        assert code == EXIT_CONFIG
