import pytest

from dualsmoke.config import DEFAULTS, ConfigError, data_dir, load_config, parse_config
from dualsmoke.ftle import FtleParams
from dualsmoke.guided import GuidedParams
from dualsmoke.lcs import LcsParams
from dualsmoke.solver import SimParams


class TestProductionConstants:
    """The production constants ride along as defaults in every parameter
    object and in the config module."""

    def test_timestep(self):
        assert SimParams().dt == 0.1
        assert DEFAULTS["dt"] == 0.1

    def test_buoyancy(self):
        assert SimParams().alpha == 0.025
        assert DEFAULTS["alpha"] == 0.025

    def test_fd_offset(self):
        assert FtleParams().tau == 0.1
        assert DEFAULTS["tau"] == 0.1

    def test_integration_window(self):
        assert abs(FtleParams().T) == 2.5
        assert DEFAULTS["ftle_T"] == 2.5

    def test_filter_sigma(self):
        assert LcsParams().gaussian_sigma == 1.0
        assert DEFAULTS["gaussian_sigma"] == 1.0

    def test_guiding_scale(self):
        assert GuidedParams().c == 1.0
        assert DEFAULTS["c"] == 1.0

    def test_default_grid(self):
        assert DEFAULTS["grid_nx"] == 256
        assert DEFAULTS["grid_ny"] == 256

    def test_buoyancy_direction(self):
        assert SimParams().z_dir == (0.0, 1.0)


class TestConfigFile:
    def test_parse_and_merge(self, tmp_path):
        p = tmp_path / "conf"
        p.write_text("# comment\ndt = 0.05\ngrid_nx = 64   # inline\n\nc = 2.0\n")
        cfg = load_config(p)
        assert cfg["dt"] == 0.05
        assert cfg["grid_nx"] == 64
        assert cfg["c"] == 2.0
        assert cfg["alpha"] == 0.025  # untouched default

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError):
            parse_config("mystery = 1\n")

    def test_bad_value_rejected(self):
        with pytest.raises(ConfigError):
            parse_config("dt = fast\n")

    def test_missing_equals_rejected(self):
        with pytest.raises(ConfigError):
            parse_config("dt 0.1\n")

    def test_data_dir_env(self, tmp_path, monkeypatch):
        monkeypatch.setenv("DUALSMOKE_DATA_DIR", str(tmp_path / "root"))
        d = data_dir()
        assert d == tmp_path / "root"
        assert (d / "sketches").is_dir() and (d / "runs").is_dir()

    def test_data_dir_override_wins(self, tmp_path, monkeypatch):
        monkeypatch.setenv("DUALSMOKE_DATA_DIR", str(tmp_path / "env"))
        assert data_dir(tmp_path / "explicit") == tmp_path / "explicit"
