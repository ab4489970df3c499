import json
import os

import pytest

from kcsflock.cli import (
    EXIT_CHECK_FAILED,
    EXIT_CONFIG,
    EXIT_OK,
    ConfigError,
    build_run_config,
    main,
    parse_config_text,
)

CONFIG_DIR = os.path.join(os.path.dirname(__file__), "..", "configs")


def cfg_path(name):
    return os.path.join(CONFIG_DIR, name)


def base_cfg():
    return {
        "model.kappa": "1.0",
        "model.beta": "0.5",
        "init.variant": "exponential",
        "init.alpha": "1.0",
        "grid.t_end": "1.0",
        "grid.dt": "0.01",
        "run.n_particles": "32",
    }


class TestConfigParsing:
    def test_comments_and_blanks_ignored(self):
        text = "\n# heading\nmodel.kappa = 1.0  # trailing\n\nmodel.beta = 0.5\n"
        assert parse_config_text(text) == {"model.kappa": "1.0", "model.beta": "0.5"}

    def test_malformed_line_rejected(self):
        with pytest.raises(ConfigError):
            parse_config_text("model.kappa 1.0\n")

    def test_unknown_key_named_in_error(self):
        cfg = base_cfg()
        cfg["model.kapa"] = "1.0"
        with pytest.raises(ConfigError, match="model.kapa"):
            build_run_config(cfg)

    def test_missing_required_key(self):
        cfg = base_cfg()
        del cfg["model.kappa"]
        with pytest.raises(ConfigError, match="model.kappa"):
            build_run_config(cfg)

    def test_invalid_beta_rejected(self):
        cfg = base_cfg()
        cfg["model.beta"] = "2.0"
        with pytest.raises(ConfigError):
            build_run_config(cfg)

    def test_regime_init_mismatch(self):
        cfg = base_cfg()
        cfg["regime.id"] = "1"
        cfg["regime.gamma"] = "2.0"
        cfg["regime.D"] = "8.0"
        cfg["model.beta"] = "0.25"
        # regime 1 demands the heavy-tail sampler
        with pytest.raises(ConfigError, match="regime"):
            build_run_config(cfg)

    def test_defaults_filled(self):
        run = build_run_config(base_cfg())
        assert run.seed == 0
        assert run.grid.t0 == 0.0
        assert run.moment_order == 4.0


class TestExitCodes:
    def test_bad_config_exits_4(self, tmp_path):
        bad = tmp_path / "bad.cfg"
        bad.write_text("model.kappa = 1.0\nmodel.beta = 2.0\n")
        assert main(["simulate", "--config", str(bad)]) == EXIT_CONFIG

    def test_missing_config_file_exits_4(self):
        assert main(["simulate", "--config", "/nonexistent/path.cfg"]) == EXIT_CONFIG

    def test_rates_without_regime_exits_4(self, tmp_path):
        code = main([
            "rates", "--config", cfg_path("small_exponential.cfg"),
            "--set", f"output.dir={tmp_path}",
        ])
        assert code == EXIT_CONFIG

    def test_stability_nonpositive_perturbation_exits_4(self, tmp_path):
        code = main([
            "stability", "--config", cfg_path("small_exponential.cfg"),
            "--set", f"output.dir={tmp_path}",
            "--set", "run.n_particles=16",
            "--perturbation", "0.0",
        ])
        assert code == EXIT_CONFIG

    def test_uniqueness_refine_below_two_exits_4(self, tmp_path):
        code = main([
            "uniqueness", "--config", cfg_path("small_exponential.cfg"),
            "--set", f"output.dir={tmp_path}",
            "--set", "run.n_particles=16",
            "--refine", "1",
        ])
        assert code == EXIT_CONFIG

    def test_stability_large_n_requires_sliced_flag(self, tmp_path):
        code = main([
            "stability", "--config", cfg_path("small_exponential.cfg"),
            "--set", f"output.dir={tmp_path}",
            "--set", "run.n_particles=600",
            "--perturbation", "1e-3",
        ])
        assert code == EXIT_CONFIG


class TestSimulate:
    def _run(self, outdir, extra=()):
        args = [
            "simulate", "--config", cfg_path("small_exponential.cfg"),
            "--set", f"output.dir={outdir}",
            "--set", "run.n_particles=48",
        ]
        for item in extra:
            args += ["--set", item]
        return main(args)

    def test_outputs_written(self, tmp_path):
        assert self._run(tmp_path) == EXIT_OK
        assert (tmp_path / "diagnostics.csv").exists()
        assert (tmp_path / "ensemble_final.csv").exists()
        summary = json.loads((tmp_path / "summary.json").read_text())
        assert summary["momentum_drift"] < 1e-11
        assert summary["config"]["run.n_particles"] == "48"

    def test_csv_header_schema(self, tmp_path):
        self._run(tmp_path)
        header = (tmp_path / "diagnostics.csv").read_text().splitlines()[0]
        assert header.split(",") == [
            "t", "momentum_0", "momentum_1", "velocity_variance",
            "spatial_cohesion", "moment_D_velocity", "moment_D_position",
            "exp_mass_alpha", "tail_mass_position", "tail_mass_velocity",
            "max_speed", "dissipation_rate", "effective_radius",
        ]

    def test_degenerate_grid_single_row(self, tmp_path):
        assert self._run(tmp_path, extra=["grid.t_end=0.0"]) == EXIT_OK
        rows = (tmp_path / "diagnostics.csv").read_text().splitlines()
        assert len(rows) == 2

    def test_rerun_byte_identical(self, tmp_path):
        self._run(tmp_path)
        first = {
            name: (tmp_path / name).read_bytes()
            for name in ("diagnostics.csv", "ensemble_final.csv", "summary.json")
        }
        self._run(tmp_path)
        for name, blob in first.items():
            assert (tmp_path / name).read_bytes() == blob

    def test_seed_changes_output(self, tmp_path):
        self._run(tmp_path / "a")
        self._run(tmp_path / "b", extra=["run.seed=99"])
        a = (tmp_path / "a" / "diagnostics.csv").read_bytes()
        b = (tmp_path / "b" / "diagnostics.csv").read_bytes()
        assert a != b


class TestVerify:
    def test_default_config_passes(self, tmp_path):
        code = main([
            "verify", "--config", cfg_path("small_polynomial.cfg"),
            "--set", f"output.dir={tmp_path}",
        ])
        assert code == EXIT_OK
        report = json.loads((tmp_path / "verify.json").read_text())
        assert report["passed"] is True

    def test_coarse_dt_fails_dissipation_identity(self, tmp_path):
        code = main([
            "verify", "--config", cfg_path("small_polynomial.cfg"),
            "--set", f"output.dir={tmp_path}",
            "--set", "grid.dt=0.5",
            "--set", "grid.snapshot_stride=1",
        ])
        assert code == EXIT_CHECK_FAILED
        report = json.loads((tmp_path / "verify.json").read_text())
        assert report["checks"]["dissipation_identity"]["passed"] is False
        assert report["checks"]["momentum_conservation"]["passed"] is True


class TestRates:
    def test_small_regime1_report(self, tmp_path):
        code = main([
            "rates", "--config", cfg_path("regime1_heavy_tail.cfg"),
            "--set", f"output.dir={tmp_path}",
            "--set", "run.n_particles=512",
            "--set", "grid.t_end=20.0",
            "--set", "grid.dt=0.05",
            "--set", "grid.snapshot_stride=8",
        ])
        assert code == EXIT_OK
        report = json.loads((tmp_path / "rates.json").read_text())
        assert report["theoretical_exponent"] == -3.5
        assert report["velocity_envelope"]["passed"] is True
        assert report["conservation"]["passed"] is True

    def test_regime3_exponent_value(self, tmp_path):
        code = main([
            "rates", "--config", cfg_path("regime3_compact.cfg"),
            "--set", f"output.dir={tmp_path}",
            "--set", "run.n_particles=256",
            "--set", "grid.t_end=20.0",
            "--set", "grid.dt=0.02",
            "--set", "grid.snapshot_stride=10",
        ])
        assert code == EXIT_OK
        report = json.loads((tmp_path / "rates.json").read_text())
        assert report["theoretical_exponent"] == -2.5


class TestStabilityAndUniqueness:
    def test_stability_series_starts_at_one(self, tmp_path):
        code = main([
            "stability", "--config", cfg_path("small_exponential.cfg"),
            "--set", f"output.dir={tmp_path}",
            "--set", "run.n_particles=64",
            "--perturbation", "1e-3",
        ])
        assert code == EXIT_OK
        payload = json.loads((tmp_path / "stability.json").read_text())
        assert payload["series"][0][1] == pytest.approx(1.0)
        assert payload["max_ratio"] < 10.0

    def test_uniqueness_order_near_four(self, tmp_path):
        code = main([
            "uniqueness", "--config", cfg_path("small_exponential.cfg"),
            "--set", f"output.dir={tmp_path}",
            "--set", "run.n_particles=48",
            "--refine", "2",
        ])
        assert code == EXIT_OK
        payload = json.loads((tmp_path / "uniqueness.json").read_text())
        assert payload["observed_order"] >= 3.5
        assert payload["passed"] is True
