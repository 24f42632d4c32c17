import pytest

from config import PRESETS, Config, schema_help
from errors import ConfigError


def test_defaults_to_preset_a():
    config = Config()
    assert config.PRESET == "a"
    assert config.OUT_DIR is None
    params = config.experiment()
    assert params.name == "a"
    assert params.drop_height == pytest.approx(3.6e-3)
    assert params.mod_depth == pytest.approx(0.061905, rel=1e-4)
    assert params.table_depth == pytest.approx(0.062)


@pytest.mark.parametrize("preset, depth", [("a", 0.061905), ("b", 0.077619), ("c", 0.085789)])
def test_presets_compose_their_depth(preset, depth):
    assert Config(preset=preset).experiment().mod_depth == pytest.approx(depth, rel=1e-4)


def test_presets_share_the_mirror():
    for values in PRESETS.values():
        assert values["mod_frequency_khz"] == 500.0
        assert values["kappa_inv_nm"] == 93.0
        assert values["base_power_mw"] == 50.0


def test_file_overrides_preset(write_config):
    path = write_config("[experiment]\npreset = c\nmod_depth = 0.05\n\n[imaging]\natoms = 500\n")
    config = Config(path)
    assert config.PRESET == "c"
    assert config.experiment().mod_depth == 0.05
    assert config.imaging_settings().atoms == 500


def test_cli_overrides_beat_file_and_environment(write_config, monkeypatch):
    monkeypatch.setenv("TDIFF_SEED", "99")
    path = write_config("[imaging]\nseed = 5\n")
    assert Config(path).imaging_settings().seed == 99
    assert Config(path, overrides={"imaging.seed": 7}).imaging_settings().seed == 7


def test_environment_paths(monkeypatch, write_config):
    path = write_config("[experiment]\npreset = b\n")
    monkeypatch.setenv("TDIFF_CONFIG", path)
    monkeypatch.setenv("TDIFF_OUT_DIR", "/tmp/tdiff")
    config = Config()
    assert config.PRESET == "b"
    assert config.OUT_DIR == "/tmp/tdiff"


def test_drop_height_override_implies_free_fall():
    params = Config(overrides={"experiment.drop_height_mm": 2.05}).experiment()
    assert params.fall_time == pytest.approx(0.020442, rel=1e-3)


@pytest.mark.parametrize(
    "text, message",
    [
        ("[experiment]\nmystery = 1\n", "unknown key experiment.mystery"),
        ("[telemetry]\nport = 1\n", "unknown section"),
        ("[imaging]\natoms = many\n", "imaging.atoms"),
        ("[experiment]\nmod_depth = 1.5\n", "experiment.mod_depth"),
        ("[oracle]\ncheck_convergence = maybe\n", "boolean"),
        ("[experiment\n", "cannot parse"),
    ],
)
def test_bad_files_are_config_errors(write_config, text, message):
    with pytest.raises(ConfigError, match=message) as excinfo:
        Config(write_config(text))
    assert excinfo.value.exit_code == 2


def test_errors_are_collected(write_config):
    path = write_config("[imaging]\natoms = 0\nseed = -1\n")
    with pytest.raises(ConfigError) as excinfo:
        Config(path)
    assert "imaging.atoms" in str(excinfo.value)
    assert "imaging.seed" in str(excinfo.value)


def test_missing_file():
    with pytest.raises(ConfigError, match="cannot read"):
        Config("/nonexistent/run.ini")


def test_unknown_preset():
    with pytest.raises(ConfigError, match="preset"):
        Config(preset="z")


def test_pixel_grid_validation():
    with pytest.raises(ConfigError, match="whole number of pixels"):
        Config(overrides={"imaging.field_width_mm": 5.505})


def test_dimensionless_oracle_by_default():
    oracle = Config().oracle_config()
    assert oracle.dimensionless is True
    assert oracle.k_over_kappa == 20.0
    assert oracle.q == 1.0


def test_oracle_from_experiment():
    config = Config(overrides={"oracle.dimensionless": "false", "oracle.check_convergence": "no"})
    oracle = config.oracle_config()
    assert oracle.dimensionless is False
    assert oracle.check_convergence is False
    assert oracle.q == pytest.approx(1.0993, abs=1e-3)
    assert oracle.mod_depth == pytest.approx(0.061905, rel=1e-4)


def test_schema_help_lists_every_key():
    text = schema_help()
    for key in ("drop_height_mm", "k_over_kappa", "pgm_format", "d2_wavelength"):
        assert key in text
    assert "[mm]" in text


def test_other_presets_keep_the_overrides(write_config):
    path = write_config("[imaging]\natoms = 500\n")
    config = Config(path, preset="a", overrides={"experiment.kappa_inv_nm": 80.0, "imaging.seed": 3})
    assert config.for_preset("a") is config

    other = config.for_preset("c")
    assert other.PRESET == "c"
    assert other.experiment().mirror.kappa == pytest.approx(1.0 / 80e-9)
    assert other.experiment().drop_height == pytest.approx(2.05e-3)
    assert other.imaging_settings().seed == 3
    assert other.imaging_settings().atoms == 500
