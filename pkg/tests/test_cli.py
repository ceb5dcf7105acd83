import json

import pytest

from spde_tumor.cli import EXIT_INVALID, EXIT_OK, main
from spde_tumor.config import DEFAULTS, ConfigError, RunConfig, parse_config


class TestConfig:
    def test_defaults(self):
        cfg = RunConfig.from_mapping()
        p = cfg.params()
        assert (p.epsilon, p.chi, p.alpha, p.beta, p.delta) == (0.01, 5.0, 1.0, 15.0, 100.0)
        assert p.m1.kind == "quartic_interface" and p.m1.value == 1e-16
        assert p.m2.value == 10.0
        g = cfg.grid()
        assert (g.nx, g.ny) == (100, 100)
        assert cfg["ensemble.n_samples"] == 50

    def test_nested_and_dotted_keys(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"noise": {"nu": 0.0}, "time.dt": 0.005}))
        cfg = parse_config(path)
        assert cfg.params().noise.nu == 0.0
        assert cfg.params().dt == 0.005

    def test_flags_override_file(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text('{"grid.nx": 20}')
        assert parse_config(path, {"grid.nx": 30})["grid.nx"] == 30

    @pytest.mark.parametrize("bad", [{"nope": 1}, {"time.dt": -1.0}, {"grid.nx": 2.5},
                                     {"noise.mass_project": 1}, {"mode": "plot"},
                                     {"model.chi": None}])
    def test_invalid(self, bad):
        with pytest.raises(ConfigError):
            RunConfig.from_mapping(bad)

    def test_parse_error_has_position(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text('{\n "grid.nx": 3,\n}')
        with pytest.raises(ConfigError, match="line 3"):
            parse_config(path)

    def test_echo_roundtrip(self, tmp_path):
        cfg = RunConfig.from_mapping({"noise.nu": 2.5, "model.sigma_dirichlet": None})
        path = tmp_path / "echo.json"
        path.write_text(cfg.to_json())
        again = parse_config(path)
        assert again.to_json() == cfg.to_json()
        assert set(json.loads(cfg.to_json())) == set(DEFAULTS)


class TestMain:
    def test_run(self, tmp_path):
        rc = main(["run", "--nx", "8", "--ny", "8", "--t-end", "0.03", "--out", str(tmp_path),
                   "--snapshot-times", "0.01"])
        assert rc == EXIT_OK
        files = {p.name for p in (tmp_path / "run").iterdir()}
        assert {"config.json", "qoi.csv", "fields_t0p01.vtk", "fields_t0p03.vtk",
                "contour_t0p03.csv"} <= files
        header = (tmp_path / "run" / "qoi.csv").read_text().splitlines()[0]
        assert header == "time,tumor_volume,nutrient_volume,energy"

    def test_env_out(self, tmp_path, monkeypatch):
        monkeypatch.setenv("SPDE_TUMOR_OUT", str(tmp_path))
        assert main(["run", "--nx", "4", "--ny", "4", "--t-end", "0.01", "--name", "e"]) == 0
        assert (tmp_path / "e" / "qoi.csv").exists()

    def test_ensemble(self, tmp_path):
        rc = main(["ensemble", "--samples", "2", "--nx", "8", "--ny", "8", "--t-end", "0.03",
                   "--out", str(tmp_path), "--threads", "1"])
        assert rc == EXIT_OK
        header = (tmp_path / "ensemble" / "stats.csv").read_text().splitlines()[0]
        assert header.startswith("time,mean_tumor_volume,std_tumor_volume")

    def test_sweep(self, tmp_path):
        rc = main(["sweep", "--nu", "0,2.5", "--nx", "8", "--ny", "8", "--t-end", "0.02",
                   "--seed", "42", "--out", str(tmp_path), "--log-noise"])
        assert rc == EXIT_OK
        out = tmp_path / "sweep"
        assert "yes" in (out / "noise_check.txt").read_text()
        assert (out / "nu_0" / "noise.csv").read_bytes() == (out / "nu_2p5" / "noise.csv").read_bytes()

    def test_validation_exit_code(self, tmp_path, capsys):
        assert main(["run", "--dt", "-1", "--out", str(tmp_path)]) == EXIT_INVALID
        assert "dt" in capsys.readouterr().err

    def test_missing_config_file(self, tmp_path):
        assert main(["run", "--config", str(tmp_path / "none.json"), "--out", str(tmp_path)]) == EXIT_INVALID

    def test_runtime_exit_code(self, tmp_path, monkeypatch):
        from spde_tumor import cli
        from spde_tumor.stepper import SimulationError

        def boom(*a, **k):
            raise SimulationError("diverged", 3)

        monkeypatch.setattr(cli, "run_simulation", boom)
        assert main(["run", "--nx", "4", "--ny", "4", "--out", str(tmp_path)]) == 2

    def test_verify_quick(self, tmp_path):
        assert main(["verify", "--quick", "--out", str(tmp_path)]) == EXIT_OK
        assert (tmp_path / "verify" / "verify.csv").exists()
