import csv
import json

import pytest
from click.testing import CliRunner

from oberbeck.cli import main
from oberbeck.config import SCHEMA, ConfigError, load_config

SMALL = """
[grid]
dim = 2
n = 32
L = 32.0

[initial_data]
amplitude = 0.05
osc_amplitude = 0.05
width = 2.0

[time]
T = 0.2
dt = 0.02
eps = 0.25
eps_ladder = 0.25, 0.125, 0.0625
"""


def write_cfg(tmp_path, text, name="run.ini"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def invoke(*args, env=None):
    return CliRunner().invoke(main, list(args), env=env, catch_exceptions=False)


class TestConfig:
    def test_defaults(self):
        cfg = load_config(None)
        assert cfg.i("grid", "n") == 48
        assert cfg.floats("time", "eps_ladder") == (0.25, 0.125, 0.0625, 0.03125)
        assert cfg.pairs("norms", "osc_pairs") == ((4.0, 0.5), (8.0, 0.0))

    def test_unknown_key_and_section(self, tmp_path):
        with pytest.raises(ConfigError, match="nn"):
            load_config(write_cfg(tmp_path, "[grid]\nnn = 3\n"))
        with pytest.raises(ConfigError, match="gird"):
            load_config(write_cfg(tmp_path, "[gird]\nn = 3\n"))

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(str(tmp_path / "absent.ini"))

    def test_overrides(self, tmp_path):
        cfg = load_config(write_cfg(tmp_path, SMALL), {("initial_data", "seed"): 9})
        assert cfg.i("initial_data", "seed") == 9
        assert cfg.f("grid", "L") == 32.0


class TestHelp:
    def test_documents_every_key(self):
        res = invoke("--help")
        assert res.exit_code == 0
        for section, keys in SCHEMA.items():
            assert f"[{section}]" in res.output
            for key, (default, _) in keys.items():
                assert key in res.output and default in res.output

    @pytest.mark.parametrize("cmd", ["linear-verify", "strichartz", "besov-test", "simulate", "converge"])
    def test_subcommand_flags(self, cmd):
        out = invoke(cmd, "--help").output
        for flag in ("--config", "--out", "--seed", "--threads", "--format"):
            assert flag in out


class TestLinearVerify:
    def test_default_sweep(self, tmp_path):
        res = invoke("linear-verify", "--out", str(tmp_path))
        assert res.exit_code == 0, res.output
        rows = list(csv.reader((tmp_path / "linear_sweep.csv").open()))
        assert len(rows) - 1 == 64 * 32 * 3
        summary = json.loads((tmp_path / "linear_summary.json").read_text())
        assert summary["passed"] and summary["C"] <= 10 and summary["c"] >= 0.01

    def test_empty_frequency_grid(self, tmp_path):
        cfg = write_cfg(tmp_path, "[linear]\nr_count = 0\n")
        res = invoke("linear-verify", "--config", cfg, "--out", str(tmp_path))
        assert res.exit_code == 1
        assert "r_count" in res.output

    def test_degenerate_conductivity(self, tmp_path):
        cfg = write_cfg(tmp_path, "[linear]\nkappa_t = 0\n")
        res = invoke("linear-verify", "--config", cfg, "--out", str(tmp_path))
        assert res.exit_code == 2
        assert "alpha" in res.output

    def test_unknown_key(self, tmp_path):
        cfg = write_cfg(tmp_path, "[linear]\nkappa = 1\n")
        res = invoke("linear-verify", "--config", cfg, "--out", str(tmp_path))
        assert res.exit_code == 1 and "kappa" in res.output


class TestConverge:
    def test_ladder_of_one(self, tmp_path):
        cfg = write_cfg(tmp_path, SMALL.replace("eps_ladder = 0.25, 0.125, 0.0625", "eps_ladder = 0.25"))
        res = invoke("converge", "--config", cfg, "--out", str(tmp_path))
        assert res.exit_code == 1

    def test_runs_and_is_deterministic(self, tmp_path):
        cfg = write_cfg(tmp_path, SMALL)
        a, b = tmp_path / "a", tmp_path / "b"
        r1 = invoke("converge", "--config", cfg, "--out", str(a), "--seed", "3")
        r2 = invoke("converge", "--config", cfg, "--out", str(b), "--seed", "3", "--threads", "2")
        assert r1.exit_code in (0, 2) and r1.exit_code == r2.exit_code
        assert (a / "report.csv").read_bytes() == (b / "report.csv").read_bytes()
        assert (a / "report.json").exists() and (a / "convergence.svg").exists()
        assert "osc_q p=4" in r1.output

    def test_seed_changes_output(self, tmp_path):
        cfg = write_cfg(tmp_path, SMALL)
        invoke("converge", "--config", cfg, "--out", str(tmp_path / "a"), "--seed", "1")
        invoke("converge", "--config", cfg, "--out", str(tmp_path / "b"), "--seed", "2")
        assert (tmp_path / "a" / "report.csv").read_bytes() != (tmp_path / "b" / "report.csv").read_bytes()

    def test_json_format(self, tmp_path):
        cfg = write_cfg(tmp_path, SMALL)
        invoke("converge", "--config", cfg, "--out", str(tmp_path), "--format", "json")
        doc = json.loads((tmp_path / "report.json").read_text())
        assert doc["schema_version"] == "1.0" and doc["variant"] == "conducting"
        assert not (tmp_path / "report.csv").exists()

    def test_solver_failure_names_eps(self, tmp_path):
        text = SMALL.replace("amplitude = 0.05\nosc_amplitude = 0.05", "amplitude = 50\nosc_amplitude = 50")
        text = text.replace("dt = 0.02", "dt = 0.1")
        res = invoke("converge", "--config", write_cfg(tmp_path, text), "--out", str(tmp_path))
        assert res.exit_code == 3
        assert "eps=0.25" in res.output

    def test_env_threads_fallback(self, tmp_path):
        cfg = write_cfg(tmp_path, SMALL)
        res = invoke("converge", "--config", cfg, "--out", str(tmp_path), env={"OBERBECK_THREADS": "2"})
        assert res.exit_code in (0, 2)


class TestReportCommand:
    def test_refit_from_csv(self, tmp_path):
        cfg = write_cfg(tmp_path, SMALL)
        invoke("converge", "--config", cfg, "--out", str(tmp_path))
        res = invoke("report", str(tmp_path / "report.csv"), "--format", "json", "--out", str(tmp_path / "copy.json"))
        assert res.exit_code == 0
        assert "incomp p=4" in res.output
        doc = json.loads((tmp_path / "copy.json").read_text())
        assert len(doc["records"]) == 3 * 5

    def test_json_report_status(self, tmp_path):
        cfg = write_cfg(tmp_path, SMALL)
        conv = invoke("converge", "--config", cfg, "--out", str(tmp_path))
        res = invoke("report", str(tmp_path / "report.json"))
        assert res.exit_code == conv.exit_code

    def test_unreadable(self, tmp_path):
        bad = tmp_path / "r.json"
        bad.write_text('{"schema_version": "0.1"}')
        assert invoke("report", str(bad)).exit_code == 3


class TestOtherCommands:
    def test_simulate(self, tmp_path):
        res = invoke("simulate", "--config", write_cfg(tmp_path, SMALL), "--out", str(tmp_path))
        assert res.exit_code == 0, res.output
        diag = json.loads((tmp_path / "simulate.json").read_text())
        assert diag["steps"] == 10 and diag["final_time"] == pytest.approx(0.2)
        assert diag["relation_residual"] < 1e-10
        assert len(list((tmp_path / "snapshots" / "eps_0.25").iterdir())) == 33

    def test_besov_test(self, tmp_path):
        res = invoke("besov-test", "--config", write_cfg(tmp_path, SMALL), "--out", str(tmp_path))
        assert res.exit_code == 0
        assert json.loads((tmp_path / "besov_test.json").read_text())["bony_relative_residual"] < 1e-10

    def test_strichartz(self, tmp_path):
        text = SMALL + "\n[strichartz]\np_values = 2, 4\nT = 1.0\nnt = 11\n"
        res = invoke("strichartz", "--config", write_cfg(tmp_path, text), "--out", str(tmp_path))
        assert res.exit_code == 0
        rows = json.loads((tmp_path / "strichartz.json").read_text())
        assert rows[0]["p"] == 2 and rows[0]["ratio"] == pytest.approx(1.0, rel=1e-9)
