"""Synthetic panel generator: determinism, bounds, and built-in structure."""

import numpy as np
import pytest

from bundlecast import SynthConfig, haversine_matrix, ingest_panel, synth_panel, write_synth_csv
from bundlecast.errors import ConfigError


def test_synth_deterministic_per_seed(tmp_path):
    cfg = SynthConfig(n_assets=5, n_steps=200, granularity_minutes=15, seed=99)
    a = synth_panel(cfg)
    b = synth_panel(cfg)
    np.testing.assert_array_equal(a.values, b.values)
    assert a.asset_ids == b.asset_ids

    write_synth_csv(cfg, tmp_path / "a1.csv", tmp_path / "s1.csv")
    write_synth_csv(cfg, tmp_path / "a2.csv", tmp_path / "s2.csv")
    assert (tmp_path / "a1.csv").read_bytes() == (tmp_path / "a2.csv").read_bytes()
    assert (tmp_path / "s1.csv").read_bytes() == (tmp_path / "s2.csv").read_bytes()


def test_synth_seed_changes_output():
    base = SynthConfig(n_assets=4, n_steps=100, granularity_minutes=15, seed=1)
    other = SynthConfig(n_assets=4, n_steps=100, granularity_minutes=15, seed=2)
    assert not np.array_equal(synth_panel(base).values, synth_panel(other).values)


def test_synth_values_within_capacity():
    cfg = SynthConfig(n_assets=8, n_steps=500, granularity_minutes=15, seed=5,
                      anticorrelated_pairs=2)
    panel = synth_panel(cfg)
    caps = panel.capacities
    assert (panel.values >= 0.0).all()
    assert (panel.values <= caps[:, None]).all()


def test_synth_anticorrelated_pair():
    cfg = SynthConfig(n_assets=2, n_steps=800, granularity_minutes=15, seed=13,
                      n_regions=1, anticorrelated_pairs=1)
    panel = synth_panel(cfg)
    corr = np.corrcoef(panel.values[0], panel.values[1])[0, 1]
    assert corr < -0.5
    assert panel.assets[0].capacity_mw == panel.assets[1].capacity_mw


def test_synth_regions_are_separated():
    cfg = SynthConfig(n_assets=9, n_steps=50, granularity_minutes=60, seed=3, n_regions=3)
    panel = synth_panel(cfg)
    d = haversine_matrix(panel.assets)
    region = np.arange(9) % 3
    for i in range(9):
        for j in range(9):
            if region[i] != region[j]:
                assert d[i, j] > 500.0
            elif i != j:
                assert d[i, j] < 500.0


def test_synth_csv_ingests_cleanly(tmp_path):
    cfg = SynthConfig(n_assets=4, n_steps=96, granularity_minutes=15, seed=21)
    panel = write_synth_csv(cfg, tmp_path / "assets.csv", tmp_path / "series.csv")
    back = ingest_panel(tmp_path / "assets.csv", tmp_path / "series.csv")
    assert back.asset_ids == panel.asset_ids
    assert back.n_steps == 96
    np.testing.assert_allclose(back.values, panel.values, atol=1e-6)


def test_synth_config_validation():
    with pytest.raises(ConfigError):
        SynthConfig(n_assets=0, n_steps=10, granularity_minutes=15, seed=0)
    with pytest.raises(ConfigError):
        SynthConfig(n_assets=4, n_steps=10, granularity_minutes=15, seed=0,
                    ar_coefficient=1.0)
    with pytest.raises(ConfigError):
        SynthConfig(n_assets=3, n_steps=10, granularity_minutes=15, seed=0,
                    anticorrelated_pairs=2)
