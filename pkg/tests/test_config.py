"""Config file parsing: mandatory keys, validation, and the sweep list."""

import math

import pytest

from bundlecast.config import load_run_config, load_synth_config
from bundlecast.errors import ConfigError

RUN_KEYS = {
    "task": "short_term",
    "history_len": "48",
    "horizon": "24",
    "granularity_minutes": "15",
    "n_bundles": "3",
    "criterion": "savar",
    "diameter_km": "800",
    "fleet_model": "ridge",
    "fleet_ridge_lambda": "1.0",
    "fleet_use_calendar_encodings": "true",
    "bundle_model": "ridge",
    "bundle_ridge_lambda": "1.0",
    "bundle_use_calendar_encodings": "false",
    "asset_model": "persistence",
    "asset_ridge_lambda": "0.0",
    "asset_use_calendar_encodings": "false",
    "train_start": "2019-01-01T00:00:00Z",
    "train_end": "2019-01-18T23:45:00Z",
    "test_start": "2019-01-19T00:00:00Z",
    "test_end": "2019-01-21T23:45:00Z",
    "seed": "42",
    "assets_file": "assets.csv",
    "series_file": "series.csv",
    "output_dir": "out",
    "baseline": "false",
}


def write_config(path, overrides=None, drop=None):
    keys = dict(RUN_KEYS)
    if overrides:
        keys.update(overrides)
    if drop:
        for k in drop:
            keys.pop(k)
    path.write_text("\n".join(f"{k} = {v}" for k, v in keys.items()) + "\n")
    return path


def test_run_config_parses(tmp_path):
    cfg = load_run_config(write_config(tmp_path / "run.cfg"))
    assert cfg.n_bundles == 3
    assert cfg.criterion == "savar"
    assert cfg.diameter_km == 800.0
    assert cfg.specs["asset"].model == "persistence"
    assert cfg.specs["fleet"].use_calendar is True
    assert cfg.diameters is None


def test_run_config_missing_key(tmp_path):
    with pytest.raises(ConfigError, match="n_bundles"):
        load_run_config(write_config(tmp_path / "run.cfg", drop=["n_bundles"]))


def test_run_config_unknown_key(tmp_path):
    with pytest.raises(ConfigError, match="unknown"):
        load_run_config(write_config(tmp_path / "run.cfg", overrides={"extra_key": "1"}))


def test_run_config_unbounded_diameter(tmp_path):
    cfg = load_run_config(write_config(tmp_path / "run.cfg",
                                       overrides={"diameter_km": "unbounded"}))
    assert math.isinf(cfg.diameter_km)
    cfg = load_run_config(write_config(tmp_path / "run.cfg",
                                       overrides={"diameter_km": "inf"}))
    assert math.isinf(cfg.diameter_km)


def test_run_config_range_ordering(tmp_path):
    with pytest.raises(ConfigError, match="train_start"):
        load_run_config(write_config(
            tmp_path / "run.cfg", overrides={"test_start": "2018-01-01T00:00:00Z"}))


def test_run_config_diameters_list(tmp_path):
    cfg = load_run_config(write_config(
        tmp_path / "run.cfg", overrides={"diameters": "100, 250, 600"}))
    assert cfg.diameters == (100.0, 250.0, 600.0)
    with pytest.raises(ConfigError, match="ascending"):
        load_run_config(write_config(
            tmp_path / "run.cfg", overrides={"diameters": "600, 250"}))


def test_run_config_bad_choice(tmp_path):
    with pytest.raises(ConfigError, match="criterion"):
        load_run_config(write_config(tmp_path / "run.cfg", overrides={"criterion": "magic"}))


def test_run_config_section_header_allowed(tmp_path):
    path = tmp_path / "run.cfg"
    body = "\n".join(f"{k} = {v}" for k, v in RUN_KEYS.items())
    path.write_text("[run]\n" + body + "\n")
    assert load_run_config(path).seed == 42


def test_synth_config_parses(tmp_path):
    path = tmp_path / "synth.cfg"
    path.write_text("""
n_assets = 6
n_steps = 300
granularity_minutes = 15
seed = 9
n_regions = 2
ar_coefficient = 0.95
seasonal_amplitude = 0.7
noise_scale = 0.3
anticorrelated_pairs = 1
start = 2019-01-01T00:00:00Z
assets_file = a.csv
series_file = s.csv
""")
    cfg, assets_file, series_file = load_synth_config(path)
    assert cfg.n_assets == 6
    assert cfg.anticorrelated_pairs == 1
    assert assets_file == "a.csv"
    assert series_file == "s.csv"


def test_synth_config_missing_key(tmp_path):
    path = tmp_path / "synth.cfg"
    path.write_text("n_assets = 6\n")
    with pytest.raises(ConfigError):
        load_synth_config(path)
