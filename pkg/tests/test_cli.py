import json
import math

import pytest

from criticalbranch import cli


def run_cli(*argv):
    return cli.main(list(argv))


def write_config(tmp_path, payload, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(payload))
    return str(path)


class TestFigureData:
    def test_presets_are_both_figure_parameter_sets(self):
        assert cli.FIGURE_PRESETS == ((0.2, 0.9), (0.9, 0.2))

    def test_grid_endpoints(self):
        rows = cli.figure_rows(0.2, 0.9, "half-log")
        assert rows[0][0] == 5.0
        assert rows[-1][0] == 100.0
        assert len(rows) == 191

    def test_spot_value(self):
        rows = dict((t, q) for t, q, _ in cli.figure_rows(0.2, 0.9, "half-log"))
        assert rows[50.0] == pytest.approx(7.319e-5, rel=1e-3)

    def test_rows_equal_direct_formula(self):
        nu, a0 = 0.9, 0.2
        for t, q, p1 in cli.figure_rows(nu, a0, "log-power"):
            n_t = 1.0 + math.log(t + 1.0) / t**nu
            q_direct = n_t / (nu * t) ** (1.0 / nu) * (1.0 + math.log(a0 * nu * t) / (nu**3 * t))
            assert q == q_direct
            assert p1 == q_direct * (1.0 + math.log(a0 * nu * t) / (nu**2 * t)) / (a0 * nu * t)

    def test_cli_writes_four_preset_files(self, tmp_path):
        assert run_cli("figure-data", "--out", str(tmp_path)) == 0
        files = sorted(p.name for p in tmp_path.glob("figure_*.csv"))
        assert len(files) == 4

    def test_output_is_bit_stable(self, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        run_cli("figure-data", "--out", str(out1))
        run_cli("figure-data", "--out", str(out2))
        name = "figure_nu0.2_a00.9_half-log.csv"
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()


class TestReport:
    def test_six_rows_with_formulas(self, tmp_path, capsys):
        assert run_cli("report", "--out", str(tmp_path)) == 0
        rows = cli.report_rows()
        assert len(rows) == 6
        assert rows[5][1] == "M(s) = (1/nu)(1/Lambda(1-s) - 1/a0)"
        assert rows[5][2] == pytest.approx(0.828427, abs=1e-6)
        captured = capsys.readouterr().out
        assert "M(s)" in captured


class TestSolve:
    def test_solve_writes_rows_and_provenance(self, tmp_path):
        config = write_config(
            tmp_path,
            {
                "offspring": {"kind": "canonical", "nu": 0.5, "a0": 1.0},
                "immigration": {"kind": "canonical", "delta": 0.4, "c": 0.1},
                "t": [1.0, 5.0],
                "s": [0.0, 0.5],
            },
        )
        assert run_cli("solve", "--config", config, "--out", str(tmp_path)) == 0
        lines = (tmp_path / "solve.csv").read_text().splitlines()
        assert lines[0].startswith("#")
        assert "config_hash=" in lines[1]
        assert lines[2] == "t,s,F,R,G,P0"
        assert len(lines) == 3 + 4
        sidecar = json.loads((tmp_path / "solve.provenance.json").read_text())
        assert sidecar["command"] == "solve"
        assert "numpy" in sidecar["versions"]

    def test_floats_print_17_significant_digits(self, tmp_path):
        config = write_config(
            tmp_path,
            {
                "offspring": {"kind": "canonical", "nu": 0.5, "a0": 1.0},
                "t": [10.0],
                "s": [0.0],
            },
        )
        run_cli("solve", "--config", config, "--out", str(tmp_path))
        data_line = (tmp_path / "solve.csv").read_text().splitlines()[3]
        f_printed = data_line.split(",")[2]
        assert float(f_printed) == pytest.approx(1.0 - 1.0 / 36.0, abs=1e-9)
        assert len(f_printed.replace("0.", "")) >= 16


class TestInvariant:
    def test_measure_coefficients(self, tmp_path):
        config = write_config(
            tmp_path,
            {
                "offspring": {"kind": "canonical", "nu": 0.5, "a0": 1.0},
                "immigration": {"kind": "canonical", "delta": 0.4, "c": 0.1},
                "measures": ["M", "pi", "U", "V"],
                "order": 8,
            },
        )
        assert run_cli("invariant", "--config", config, "--out", str(tmp_path)) == 0
        lines = (tmp_path / "invariant.csv").read_text().splitlines()[3:]
        assert len(lines) == 4 * 9
        pi0 = [l for l in lines if l.startswith("pi,0,")][0]
        assert float(pi0.split(",")[2]) == 1.0


class TestSimulate:
    def test_simulate_emits_estimates(self, tmp_path):
        config = write_config(
            tmp_path,
            {
                "offspring": {"kind": "finite", "rates": [1.0, -2.0, 1.0]},
                "grid": [0.0, 2.0],
                "replicas": 2000,
                "seed": 7,
                "estimators": [{"kind": "survival", "t": 2.0}],
            },
        )
        assert run_cli("simulate", "--config", config, "--out", str(tmp_path)) == 0
        lines = (tmp_path / "simulate.csv").read_text().splitlines()
        value = float(lines[3].split(",")[3])
        assert value == pytest.approx(1.0 / 3.0, abs=0.04)

    def test_zero_replicas_rejected(self, tmp_path, capsys):
        config = write_config(
            tmp_path,
            {
                "offspring": {"kind": "finite", "rates": [1.0, -2.0, 1.0]},
                "grid": [1.0],
                "replicas": 0,
                "estimators": [{"kind": "survival", "t": 1.0}],
            },
        )
        assert run_cli("simulate", "--config", config, "--out", str(tmp_path)) == 2
        assert "replica" in capsys.readouterr().err


class TestSchemaValidation:
    def test_missing_field_named(self, tmp_path, capsys):
        config = write_config(
            tmp_path,
            {"offspring": {"kind": "canonical", "a0": 1.0}, "t": [1.0], "s": [0.0]},
        )
        assert run_cli("solve", "--config", config, "--out", str(tmp_path)) == 2
        assert "$.offspring.nu" in capsys.readouterr().err

    def test_unknown_key_rejected_with_path(self, tmp_path, capsys):
        config = write_config(
            tmp_path,
            {
                "offspring": {"kind": "canonical", "nu": 0.5, "a0": 1.0, "mystery": 3},
                "t": [1.0],
                "s": [0.0],
            },
        )
        assert run_cli("solve", "--config", config, "--out", str(tmp_path)) == 2
        assert "$.offspring.mystery" in capsys.readouterr().err

    def test_invalid_json_reported(self, tmp_path, capsys):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        assert run_cli("solve", "--config", str(path), "--out", str(tmp_path)) == 2
        assert "JSON" in capsys.readouterr().err


class TestVerify:
    def test_fast_subset_passes(self, tmp_path, capsys):
        code = run_cli("verify", "--checks", "A1,A2,A10", "--out", str(tmp_path))
        out = capsys.readouterr().out
        assert code == 0
        assert out.count("PASS") == 3
        assert "3/3" in out

    def test_unknown_check_rejected(self, tmp_path, capsys):
        assert run_cli("verify", "--checks", "A99") == 2


class TestFlags:
    def test_threads_env_var_default(self, tmp_path, monkeypatch):
        monkeypatch.setenv(cli.ENV_THREADS, "2")
        config = write_config(
            tmp_path,
            {
                "offspring": {"kind": "finite", "rates": [1.0, -2.0, 1.0]},
                "grid": [1.0],
                "replicas": 500,
                "estimators": [{"kind": "survival", "t": 1.0}],
            },
        )
        assert run_cli("simulate", "--config", config, "--out", str(tmp_path)) == 0

    def test_figure_data_custom_config(self, tmp_path):
        config = write_config(
            tmp_path,
            {"nu": 0.5, "a0": 1.0, "normalizer": "log-power", "t_start": 5, "t_stop": 10, "t_step": 1},
        )
        assert run_cli("figure-data", "--config", config, "--out", str(tmp_path)) == 0
        lines = (tmp_path / "figure_nu0.5_a01.0_log-power.csv").read_text().splitlines()
        assert len(lines) == 3 + 6
        assert lines[3].split(",")[0] == "5"
