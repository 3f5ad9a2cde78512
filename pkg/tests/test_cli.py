import json
from pathlib import Path

import numpy as np
import pytest

from ebinflow import Lattice, MetricField, TensorField
from ebinflow.cli import ConfigError, RunConfig, main, parse_config
from ebinflow.io import read_state_csv, write_state_csv

REPO = Path(__file__).resolve().parent.parent
CONFIGS = REPO / "configs"


def write_cfg(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return str(path)


BASE = """
initial_data = conformal:1.0
time_a = 0.0
time_b = 0.5
dt = 0.005
output_dir = {out}
"""


class TestConfigParsing:
    def test_defaults_and_values(self, tmp_path):
        cfg = parse_config(write_cfg(tmp_path, "nu = 0.25\nseed = 7\n"))
        assert cfg.nu == 0.25
        assert cfg.seed == 7
        assert cfg.dimension == 3
        assert cfg.noise_basis == "elementary"

    def test_comments_and_blank_lines(self, tmp_path):
        cfg = parse_config(write_cfg(tmp_path, "# comment\n\nnu = 0.5  # inline\n"))
        assert cfg.nu == 0.5

    def test_unknown_key_rejected(self, tmp_path):
        with pytest.raises(ConfigError, match="unknown key 'nuu'"):
            parse_config(write_cfg(tmp_path, "nuu = 0.1\n"))

    def test_duplicate_key_rejected(self, tmp_path):
        with pytest.raises(ConfigError, match="duplicate"):
            parse_config(write_cfg(tmp_path, "nu = 0.1\nnu = 0.2\n"))

    def test_bad_value_rejected(self, tmp_path):
        with pytest.raises(ConfigError, match="bad value"):
            parse_config(write_cfg(tmp_path, "mc_samples = many\n"))

    def test_invariants_enforced(self, tmp_path):
        for line in (
            "dt = -0.1\n",
            "nu = -1.0\n",
            "mc_samples = 0\n",
            "lattice_points = 0\n",
            "time_a = 2.0\ntime_b = 1.0\n",
        ):
            with pytest.raises(ConfigError):
                parse_config(write_cfg(tmp_path, line))

    def test_dt_must_divide_interval(self, tmp_path):
        with pytest.raises(ConfigError, match="does not divide"):
            parse_config(write_cfg(tmp_path, "time_b = 1.0\ndt = 0.3\n"))

    def test_digest_changes_iff_config_changes(self):
        a = RunConfig(nu=0.1)
        b = RunConfig(nu=0.1)
        c = RunConfig(nu=0.2)
        assert a.digest() == b.digest()
        assert a.digest() != c.digest()


class TestGeodesicRun:
    def test_energy_flat_and_files_written(self, tmp_path):
        out = tmp_path / "run"
        code = main(["geodesic", "--config", write_cfg(tmp_path, BASE.format(out=out)), "--quiet"])
        assert code == 0
        energy = np.loadtxt(out / "energy.csv", delimiter=",", skiprows=1)
        rel = (energy[:, 1].max() - energy[:, 1].min()) / energy[0, 1]
        assert rel <= 1e-6
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["status"] == "ok"
        header = (out / "trajectory.csv").read_text().splitlines()[0]
        assert header == "t,point_index,g11,g12,g13,g22,g23,g33"

    def test_collapse_exits_3_with_manifest(self, tmp_path):
        out = tmp_path / "boom"
        text = BASE.format(out=out).replace("conformal:1.0", "conformal:-1.0").replace(
            "time_b = 0.5", "time_b = 2.0"
        )
        code = main(["geodesic", "--config", write_cfg(tmp_path, text), "--quiet"])
        assert code == 3
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["status"] == "degenerate-metric"
        assert manifest["failure_time"] == pytest.approx(4.0 / 3.0, abs=0.05)


class TestElRun:
    def test_nu_zero_matches_geodesic_trajectory(self, tmp_path):
        out_g = tmp_path / "g"
        out_e = tmp_path / "e"
        base = BASE.format(out=out_g)
        assert main(["geodesic", "--config", write_cfg(tmp_path, base, "g.cfg"), "--quiet"]) == 0
        el_text = BASE.format(out=out_e) + "nu = 0.0\n"
        assert main(["el", "--config", write_cfg(tmp_path, el_text, "e.cfg"), "--quiet"]) == 0
        rows_g = (out_g / "trajectory.csv").read_text().splitlines()[1:]
        rows_e = (out_e / "trajectory.csv").read_text().splitlines()[1:]
        for rg, re_ in zip(rows_g, rows_e):
            assert re_.startswith(rg)  # el rows add velocity columns after the metric

    def test_el_writes_velocity_columns(self, tmp_path):
        out = tmp_path / "el"
        text = BASE.format(out=out) + "nu = 0.05\n"
        assert main(["el", "--config", write_cfg(tmp_path, text), "--quiet"]) == 0
        header = (out / "trajectory.csv").read_text().splitlines()[0]
        assert header.endswith("k11,k12,k13,k22,k23,k33")


class TestDeterminism:
    def test_byte_identical_reruns(self, tmp_path):
        texts = {}
        for run in ("a", "b"):
            out = tmp_path / run
            text = BASE.format(out=out) + "nu = 0.05\nmc_samples = 64\nseed = 3\n"
            assert main(["sde", "--config", write_cfg(tmp_path, text, f"{run}.cfg"), "--quiet"]) == 0
            texts[run] = (out / "samples.csv").read_bytes()
        assert texts["a"] == texts["b"]

    def test_seed_override_changes_output(self, tmp_path):
        outs = {}
        for seed in (1, 2):
            out = tmp_path / f"s{seed}"
            text = BASE.format(out=out) + "nu = 0.05\nmc_samples = 32\n"
            code = main(
                ["sde", "--config", write_cfg(tmp_path, text, f"s{seed}.cfg"), "--seed", str(seed), "--quiet"]
            )
            assert code == 0
            outs[seed] = (out / "samples.csv").read_bytes()
        assert outs[1] != outs[2]


class TestExitCodes:
    def test_config_error_is_2(self, tmp_path):
        assert main(["geodesic", "--config", write_cfg(tmp_path, "bogus = 1\n"), "--quiet"]) == 2

    def test_missing_config_is_2(self):
        assert main(["geodesic", "--config", "/nonexistent.cfg", "--quiet"]) == 2

    def test_unwritable_output_is_4(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        text = BASE.format(out=blocker / "sub")
        assert main(["geodesic", "--config", write_cfg(tmp_path, text), "--quiet"]) == 4

    def test_failed_check_is_1(self, tmp_path):
        # starved of samples, the perturbed-drift contrast cannot clear 10x the bound
        out = tmp_path / "crit"
        text = BASE.format(out=out).replace("dt = 0.005", "dt = 0.0009765625").replace(
            "time_b = 0.5", "time_b = 0.25"
        )
        text += "nu = 0.05\nmc_samples = 8\nseed = 5\n"
        code = main(["verify-critical", "--config", write_cfg(tmp_path, text), "--quiet"])
        assert code == 1
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["status"] == "check-failed"


class TestShippedConfigs:
    @pytest.mark.parametrize("name,sub", [("verify_ibp", "verify-ibp"), ("verify_ito", "verify-ito")])
    def test_verify_configs_pass(self, tmp_path, name, sub):
        out = tmp_path / name
        code = main([sub, "--config", str(CONFIGS / f"{name}.cfg"), "--out", str(out), "--quiet"])
        assert code == 0
        reports = list(out.glob("report_*.json"))
        assert reports
        for r in reports:
            payload = json.loads(r.read_text())
            assert payload["pass"] is True
            assert "config_digest" in payload

    def test_convergence_config(self, tmp_path):
        out = tmp_path / "conv"
        code = main(["convergence", "--config", str(CONFIGS / "convergence.cfg"), "--out", str(out), "--quiet"])
        assert code == 0
        report = json.loads((out / "report.json").read_text())
        assert report["order"] >= 3.5
        rows = (out / "convergence.csv").read_text().splitlines()
        assert rows[0] == "dt,error"
        assert len(rows) == 6


class TestStateCsv:
    def test_round_trip(self, tmp_path):
        lat = Lattice(dim=3, points_per_axis=2)
        rng = np.random.default_rng(5)
        raw = rng.standard_normal(lat.shape + (3, 3))
        g = MetricField.constant(lat, 2.0 * np.eye(3))
        k = TensorField(lat, __import__("ebinflow").SymMat.from_matrix(raw, tol=None))
        path = tmp_path / "state.csv"
        write_state_csv(path, g, k)
        g2, k2 = read_state_csv(path, lat)
        assert np.allclose(g2.mats, g.mats)
        assert np.allclose(k2.mats, k.mats)

    def test_file_initial_data(self, tmp_path):
        lat = Lattice(dim=3, points_per_axis=1)
        g = MetricField.constant(lat, 2.0 * np.eye(3))
        k = TensorField.constant(lat, 0.3 * np.eye(3))
        state = tmp_path / "init.csv"
        write_state_csv(state, g, k)
        out = tmp_path / "run"
        text = BASE.format(out=out).replace("conformal:1.0", f"file:{state}")
        assert main(["geodesic", "--config", write_cfg(tmp_path, text), "--quiet"]) == 0
        first = (out / "trajectory.csv").read_text().splitlines()[1]
        assert first.split(",")[2] == "2.0"

    def test_malformed_rejected(self, tmp_path):
        lat = Lattice(dim=3, points_per_axis=1)
        bad = tmp_path / "bad.csv"
        bad.write_text("header\n0,1,2\n")
        with pytest.raises(ValueError, match="expected 13 columns"):
            read_state_csv(bad, lat)
