"""Asset panels, geographic distances, and bundling criterion matrices.

A panel is an N x T matrix of historical wind-farm output (MW) together with
per-asset metadata (location, nameplate capacity) and a uniform timestamp
grid. From a panel, three covariance matrices can be built; each one induces
a bundling objective of the form tr(L @ sigma @ L.T) for a binary assignment
matrix L:

* ``variance`` -- empirical covariance of the raw series,
* ``savar``    -- covariance after subtracting the cross-sectional mean
                  series from every asset (seasonal adjustment),
* ``imcy``     -- covariance of the first-differenced series
                  (an intermittency measure).

All covariances use the population convention (divide by the sample count).
Panel objects are immutable after construction and safe to share across
workers.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import (
    DimensionMismatchError,
    DuplicateAssetIdError,
    FormatError,
    MissingColumnError,
    TimestampGapError,
    TooShortSeriesError,
    ValueOutOfRangeError,
)

EARTH_RADIUS_KM = 6371.0

ASSETS_HEADER = ("asset_id", "latitude_deg", "longitude_deg", "capacity_mw")


@dataclass(frozen=True)
class AssetMeta:
    """Static description of one wind farm."""

    asset_id: str
    latitude_deg: float
    longitude_deg: float
    capacity_mw: float

    def __post_init__(self):
        if not self.asset_id:
            raise FormatError("asset_id must be a non-empty string")
        if not -90.0 <= self.latitude_deg <= 90.0:
            raise FormatError(
                f"asset {self.asset_id!r}: latitude {self.latitude_deg} outside [-90, 90]"
            )
        if not -180.0 <= self.longitude_deg <= 180.0:
            raise FormatError(
                f"asset {self.asset_id!r}: longitude {self.longitude_deg} outside [-180, 180]"
            )
        if not (math.isfinite(self.capacity_mw) and self.capacity_mw > 0.0):
            raise ValueOutOfRangeError(
                f"asset {self.asset_id!r}: capacity_mw must be finite and > 0, "
                f"got {self.capacity_mw}"
            )


def parse_utc_timestamp(text: str) -> np.datetime64:
    """Parse an ISO-8601 UTC instant like ``2019-01-08T00:00:00Z``."""
    s = text.strip()
    if s.endswith("Z"):
        s = s[:-1]
    elif s.endswith("+00:00"):
        s = s[:-6]
    else:
        raise FormatError(f"timestamp {text!r} is not explicit UTC (expected trailing 'Z')")
    try:
        return np.datetime64(s, "s")
    except ValueError as exc:
        raise FormatError(f"unparsable timestamp {text!r}") from exc


def format_utc_timestamp(ts: np.datetime64) -> str:
    return str(np.datetime_as_string(ts, unit="s")) + "Z"


@dataclass(frozen=True)
class AssetPanel:
    """Immutable N x T panel of asset output with uniform timestamps.

    Attributes:
        assets: per-asset metadata; its order defines the row order of
            ``values`` and every derived matrix.
        timestamps: strictly increasing ``datetime64[s]`` grid with a
            constant step, length T.
        values: (N, T) float array of MW, within [0, capacity] per asset.
    """

    assets: tuple[AssetMeta, ...]
    timestamps: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        ts = np.asarray(self.timestamps, dtype="datetime64[s]")
        vals = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "values", vals)

        ids = [a.asset_id for a in self.assets]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise DuplicateAssetIdError(f"duplicate asset ids: {dupes}")
        if vals.ndim != 2 or vals.shape != (len(ids), ts.shape[0]):
            raise DimensionMismatchError(
                f"values shape {vals.shape} does not match "
                f"{len(ids)} assets x {ts.shape[0]} timestamps"
            )
        if ts.shape[0] < 2:
            raise TimestampGapError("panel needs at least two timestamps")
        steps = np.diff(ts)
        if np.any(steps <= np.timedelta64(0, "s")):
            raise TimestampGapError("timestamps are not strictly increasing")
        if np.any(steps != steps[0]):
            bad = int(np.nonzero(steps != steps[0])[0][0])
            raise TimestampGapError(
                f"non-uniform step at {format_utc_timestamp(ts[bad + 1])} "
                f"(expected {steps[0]}, got {steps[bad]})"
            )
        if not np.all(np.isfinite(vals)):
            raise ValueOutOfRangeError("panel values contain NaN or infinities")
        caps = np.array([a.capacity_mw for a in self.assets])
        low = vals < 0.0
        high = vals > caps[:, None]
        if low.any() or high.any():
            i, t = map(int, next(zip(*np.nonzero(low | high))))
            raise ValueOutOfRangeError(
                f"value {vals[i, t]} for asset {ids[i]!r} at "
                f"{format_utc_timestamp(ts[t])} outside [0, {caps[i]}]"
            )
        ts.flags.writeable = False
        vals.flags.writeable = False

    @property
    def n_assets(self) -> int:
        return len(self.assets)

    @property
    def n_steps(self) -> int:
        return int(self.timestamps.shape[0])

    @property
    def asset_ids(self) -> tuple[str, ...]:
        return tuple(a.asset_id for a in self.assets)

    @property
    def capacities(self) -> np.ndarray:
        return np.array([a.capacity_mw for a in self.assets])

    @property
    def fleet_capacity(self) -> float:
        return float(sum(a.capacity_mw for a in self.assets))

    @property
    def step(self) -> np.timedelta64:
        return self.timestamps[1] - self.timestamps[0]

    def index_of(self, ts: np.datetime64) -> int:
        """Index of the first timestamp >= ts."""
        return int(np.searchsorted(self.timestamps, np.datetime64(ts, "s")))

    def window(self, start: np.datetime64, end: np.datetime64) -> "AssetPanel":
        """Sub-panel restricted to timestamps in [start, end]."""
        lo = self.index_of(start)
        hi = int(np.searchsorted(self.timestamps, np.datetime64(end, "s"), side="right"))
        if hi - lo < 2:
            raise TimestampGapError(
                f"window [{format_utc_timestamp(np.datetime64(start, 's'))}, "
                f"{format_utc_timestamp(np.datetime64(end, 's'))}] covers "
                f"{hi - lo} timestamps"
            )
        return AssetPanel(self.assets, self.timestamps[lo:hi].copy(), self.values[:, lo:hi].copy())


def _read_csv_rows(path: Path) -> list[list[str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        return [row for row in csv.reader(fh) if row]


def read_assets_csv(path) -> list[AssetMeta]:
    """Read asset metadata (header: asset_id,latitude_deg,longitude_deg,capacity_mw)."""
    rows = _read_csv_rows(Path(path))
    if not rows or tuple(h.strip() for h in rows[0]) != ASSETS_HEADER:
        raise FormatError(
            f"{path}: expected header {','.join(ASSETS_HEADER)}, got {rows[0] if rows else 'empty file'}"
        )
    assets = []
    for ln, row in enumerate(rows[1:], start=2):
        if len(row) != 4:
            raise FormatError(f"{path}:{ln}: expected 4 fields, got {len(row)}")
        try:
            assets.append(
                AssetMeta(row[0].strip(), float(row[1]), float(row[2]), float(row[3]))
            )
        except ValueError as exc:
            raise FormatError(f"{path}:{ln}: {exc}") from exc
    return assets


def ingest_panel(assets_file, series_file) -> AssetPanel:
    """Load and validate a panel from an assets CSV and a wide series CSV.

    The series file column order defines the panel's asset ordering. Ingest
    rejects (rather than repairs) duplicate ids, asset sets that disagree
    between the two files, timestamp gaps, and values outside [0, capacity].
    """
    assets = read_assets_csv(assets_file)
    by_id: dict[str, AssetMeta] = {}
    for a in assets:
        if a.asset_id in by_id:
            raise DuplicateAssetIdError(f"duplicate asset id {a.asset_id!r} in {assets_file}")
        by_id[a.asset_id] = a

    rows = _read_csv_rows(Path(series_file))
    if not rows or not rows[0] or rows[0][0].strip() != "timestamp":
        raise FormatError(f"{series_file}: first header column must be 'timestamp'")
    series_ids = [c.strip() for c in rows[0][1:]]
    if len(set(series_ids)) != len(series_ids):
        raise DuplicateAssetIdError(f"duplicate series columns in {series_file}")
    missing = [i for i in by_id if i not in set(series_ids)]
    if missing:
        raise MissingColumnError(f"assets missing from series file: {missing}")
    unknown = [i for i in series_ids if i not in by_id]
    if unknown:
        raise MissingColumnError(f"series columns without metadata: {unknown}")

    n_cols = len(series_ids) + 1
    timestamps = np.empty(len(rows) - 1, dtype="datetime64[s]")
    values = np.empty((len(series_ids), len(rows) - 1))
    for t, row in enumerate(rows[1:]):
        if len(row) != n_cols:
            raise FormatError(f"{series_file} row {t + 2}: expected {n_cols} fields, got {len(row)}")
        timestamps[t] = parse_utc_timestamp(row[0])
        for j, cell in enumerate(row[1:]):
            cell = cell.strip()
            if not cell:
                raise ValueOutOfRangeError(
                    f"{series_file} row {t + 2}: missing value for {series_ids[j]!r}"
                )
            try:
                values[j, t] = float(cell)
            except ValueError as exc:
                raise FormatError(
                    f"{series_file} row {t + 2}: unparsable value {cell!r}"
                ) from exc

    ordered = tuple(by_id[i] for i in series_ids)
    return AssetPanel(ordered, timestamps, values)


def write_panel_csv(panel: AssetPanel, assets_file, series_file) -> None:
    """Write a panel back to the two-file CSV format used by ingest."""
    with open(assets_file, "w", encoding="utf-8") as fh:
        fh.write(",".join(ASSETS_HEADER) + "\n")
        for a in panel.assets:
            fh.write(
                f"{a.asset_id},{a.latitude_deg:.6f},{a.longitude_deg:.6f},{a.capacity_mw:.4f}\n"
            )
    with open(series_file, "w", encoding="utf-8") as fh:
        fh.write("timestamp," + ",".join(panel.asset_ids) + "\n")
        for t in range(panel.n_steps):
            cells = ",".join(f"{v:.6f}" for v in panel.values[:, t])
            fh.write(f"{format_utc_timestamp(panel.timestamps[t])},{cells}\n")


# --- geographic distances ---------------------------------------------------

def haversine_matrix(assets) -> np.ndarray:
    """Great-circle distance matrix in km (spherical Earth, R=6371.0).

    Symmetric with a zero diagonal; permutation-equivariant in the asset
    ordering.
    """
    lat = np.radians([a.latitude_deg for a in assets])
    lon = np.radians([a.longitude_deg for a in assets])
    dlat = 0.5 * (lat[:, None] - lat[None, :])
    dlon = 0.5 * (lon[:, None] - lon[None, :])
    h = np.sin(dlat) ** 2 + np.cos(lat)[:, None] * np.cos(lat)[None, :] * np.sin(dlon) ** 2
    d = 2.0 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.clip(h, 0.0, 1.0)))
    np.fill_diagonal(d, 0.0)
    return d


# --- criterion covariance matrices ------------------------------------------

class Criterion(str, Enum):
    """Which covariance matrix drives the bundling objective."""

    VARIANCE = "variance"
    SAVAR = "savar"
    IMCY = "imcy"


@dataclass(frozen=True)
class CriterionMatrix:
    """An N x N symmetric PSD matrix together with the criterion it encodes."""

    kind: Criterion
    sigma: np.ndarray

    def __post_init__(self):
        sigma = np.asarray(self.sigma, dtype=np.float64)
        if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
            raise DimensionMismatchError(f"criterion matrix must be square, got {sigma.shape}")
        object.__setattr__(self, "sigma", sigma)
        sigma.flags.writeable = False

    @property
    def n_assets(self) -> int:
        return int(self.sigma.shape[0])


def seasonal_adjust(values: np.ndarray) -> np.ndarray:
    """Subtract the cross-sectional mean series from every row."""
    values = np.asarray(values, dtype=np.float64)
    return values - values.mean(axis=0, keepdims=True)


def difference(values: np.ndarray) -> np.ndarray:
    """First difference along time; drops the first sample."""
    return np.diff(np.asarray(values, dtype=np.float64), axis=1)


def population_covariance(rows: np.ndarray) -> np.ndarray:
    """Row-wise covariance dividing by the sample count (not count-1)."""
    rows = np.asarray(rows, dtype=np.float64)
    centered = rows - rows.mean(axis=1, keepdims=True)
    sigma = centered @ centered.T / rows.shape[1]
    return 0.5 * (sigma + sigma.T)


def covariance(panel: AssetPanel, kind: Criterion | str) -> CriterionMatrix:
    """Build the criterion covariance matrix of a panel.

    Requires T >= 3 (T >= 4 for ``imcy``, since differencing drops one
    sample).
    """
    kind = Criterion(kind)
    min_steps = 4 if kind is Criterion.IMCY else 3
    if panel.n_steps < min_steps:
        raise TooShortSeriesError(
            f"{kind.value} covariance needs at least {min_steps} steps, panel has {panel.n_steps}"
        )
    if kind is Criterion.VARIANCE:
        rows = panel.values
    elif kind is Criterion.SAVAR:
        rows = seasonal_adjust(panel.values)
    else:
        rows = difference(panel.values)
    return CriterionMatrix(kind, population_covariance(rows))
