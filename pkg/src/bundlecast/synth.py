"""Seeded synthetic wind-farm panels for tests, demos, and desk-scale runs.

Assets are scattered around a handful of widely separated regional centers
(inter-region distances exceed 500 km, intra-region spread stays well
below it). Each asset's output is its capacity times a logistic squash of

    seasonal_amplitude * diurnal(t) + regional AR(1) + noise_scale * white noise

so values always stay strictly inside [0, capacity]. Designated
anticorrelated pairs skip the shared diurnal term and ride their region's
AR(1) signal with opposite signs, which forces a strongly negative
empirical correlation; both members of a pair share one capacity so their
variances match. Generation is a pure function of the config.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import AssetMeta, AssetPanel, parse_utc_timestamp, write_panel_csv
from .errors import ConfigError

# grid spacing between regional centers, degrees: >500 km in both axes
_REGION_LAT0, _REGION_LON0 = 36.0, -104.0
_REGION_DLAT, _REGION_DLON = 6.0, 8.0
_REGION_SCATTER_DEG = 0.7
_PAIR_GAIN = 1.5
_PAIR_NOISE_FACTOR = 0.25


@dataclass(frozen=True)
class SynthConfig:
    """Knobs for the generator; identical configs yield identical panels."""

    n_assets: int
    n_steps: int
    granularity_minutes: int
    seed: int
    n_regions: int = 3
    ar_coefficient: float = 0.97
    seasonal_amplitude: float = 0.8
    noise_scale: float = 0.4
    anticorrelated_pairs: int = 0
    start: str = "2019-01-01T00:00:00Z"

    def __post_init__(self):
        if self.n_assets < 1 or self.n_steps < 2 or self.granularity_minutes < 1:
            raise ConfigError(
                f"n_assets >= 1, n_steps >= 2, granularity >= 1 required; got "
                f"({self.n_assets}, {self.n_steps}, {self.granularity_minutes})"
            )
        if not 1 <= self.n_regions <= 9:
            raise ConfigError(f"n_regions must be in 1..9, got {self.n_regions}")
        if not 0.0 <= self.ar_coefficient < 1.0:
            raise ConfigError(f"ar_coefficient must be in [0, 1), got {self.ar_coefficient}")
        for name in ("seasonal_amplitude", "noise_scale"):
            if not math.isfinite(getattr(self, name)) or getattr(self, name) < 0.0:
                raise ConfigError(f"{name} must be finite and >= 0")
        if self.anticorrelated_pairs < 0 or 2 * self.anticorrelated_pairs > self.n_assets:
            raise ConfigError(
                f"anticorrelated_pairs={self.anticorrelated_pairs} does not fit "
                f"{self.n_assets} assets"
            )


def _region_centers(n_regions: int) -> np.ndarray:
    cols = math.ceil(math.sqrt(n_regions))
    centers = np.empty((n_regions, 2))
    for g in range(n_regions):
        centers[g] = (
            _REGION_LAT0 + _REGION_DLAT * (g // cols),
            _REGION_LON0 + _REGION_DLON * (g % cols),
        )
    return centers


def synth_panel(config: SynthConfig) -> AssetPanel:
    """Generate a panel deterministically from the config."""
    rng = np.random.default_rng(config.seed)
    n, steps = config.n_assets, config.n_steps
    centers = _region_centers(config.n_regions)

    region = np.arange(n) % config.n_regions
    scatter = rng.uniform(-_REGION_SCATTER_DEG, _REGION_SCATTER_DEG, size=(n, 2))
    coords = centers[region] + scatter
    caps = np.round(rng.uniform(30.0, 250.0, size=n), 1)

    in_pair = np.zeros(n, dtype=bool)
    pair_sign = np.ones(n)
    for p in range(config.anticorrelated_pairs):
        i, j = 2 * p, 2 * p + 1
        in_pair[[i, j]] = True
        pair_sign[j] = -1.0
        # same region and comparable geometry/scale as its partner
        region[j] = region[i]
        coords[j] = centers[region[i]] + scatter[j]
        caps[j] = caps[i]

    a = config.ar_coefficient
    innovations = rng.standard_normal((config.n_regions, steps))
    regional = np.empty((config.n_regions, steps))
    regional[:, 0] = innovations[:, 0]
    unit_scale = math.sqrt(1.0 - a * a)  # keeps stationary variance at 1
    for t in range(1, steps):
        regional[:, t] = a * regional[:, t - 1] + unit_scale * innovations[:, t]
    noise = rng.standard_normal((n, steps))

    start = parse_utc_timestamp(config.start)
    step = np.timedelta64(config.granularity_minutes * 60, "s")
    timestamps = start + step * np.arange(steps)
    seconds_of_day = (timestamps.astype(np.int64) % 86400).astype(np.float64)
    diurnal = np.sin(2.0 * np.pi * seconds_of_day / 86400.0 - 0.5 * np.pi)

    signal = np.empty((n, steps))
    for i in range(n):
        if in_pair[i]:
            signal[i] = (_PAIR_GAIN * pair_sign[i] * regional[region[i]]
                         + _PAIR_NOISE_FACTOR * config.noise_scale * noise[i])
        else:
            signal[i] = (config.seasonal_amplitude * diurnal
                         + regional[region[i]]
                         + config.noise_scale * noise[i])
    values = caps[:, None] / (1.0 + np.exp(-signal))

    assets = tuple(
        AssetMeta(
            asset_id=f"wf{i:03d}",
            latitude_deg=round(float(coords[i, 0]), 6),
            longitude_deg=round(float(coords[i, 1]), 6),
            capacity_mw=float(caps[i]),
        )
        for i in range(n)
    )
    return AssetPanel(assets, timestamps, values)


def write_synth_csv(config: SynthConfig, assets_file, series_file) -> AssetPanel:
    """Generate a panel and write the assets/series CSV pair."""
    panel = synth_panel(config)
    write_panel_csv(panel, assets_file, series_file)
    return panel
