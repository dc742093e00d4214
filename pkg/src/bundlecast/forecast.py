"""Baseline forecasting models and the rolling-origin backtest harness.

Two models are provided, each applied per series (one model per asset, per
bundle, and for the fleet total):

* persistence -- the whole horizon equals the last observed value;
* ridge       -- direct multi-horizon ridge regression: one linear model
  maps the last H observations (plus optional sine/cosine calendar
  encodings of the origin) to all T leads at once. Features are
  standardized, the intercept is unpenalized, and predictions are clipped
  to the physical range of the series.

The rolling harness issues a forecast at every eligible origin of the test
range and, separately, over the training range; the in-sample pass feeds the
per-lead residual variances that reconciliation needs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.linalg import cho_factor, cho_solve, LinAlgError

from .bundling import Bundling
from .core import AssetPanel, format_utc_timestamp, parse_utc_timestamp
from .errors import (
    DimensionMismatchError,
    EmptyHistoryError,
    FormatError,
    InsufficientDataError,
    LengthMismatchError,
    ShapeMismatchError,
    SingularSystemError,
)

LEVELS = ("fleet", "bundle", "asset")

FLOAT_FORMAT = "{:.12g}"  # CSV round-trip keeps coherence below 1e-9 relative


@dataclass(frozen=True)
class ForecastTask:
    """Input window length H, horizon T, and step duration."""

    history_len: int
    horizon: int
    granularity_minutes: int

    def __post_init__(self):
        if self.history_len < 1 or self.horizon < 1 or self.granularity_minutes < 1:
            raise DimensionMismatchError(
                f"history_len, horizon, granularity must be >= 1, got "
                f"({self.history_len}, {self.horizon}, {self.granularity_minutes})"
            )

    @property
    def step(self) -> np.timedelta64:
        return np.timedelta64(self.granularity_minutes * 60, "s")


SHORT_TERM = ForecastTask(history_len=48, horizon=24, granularity_minutes=15)
DAY_AHEAD = ForecastTask(history_len=72, horizon=48, granularity_minutes=60)


@dataclass(frozen=True)
class ModelSpec:
    """Which model a hierarchy level uses, with its ridge settings."""

    model: str = "persistence"
    ridge_lambda: float = 1.0
    use_calendar: bool = False

    def __post_init__(self):
        if self.model not in ("persistence", "ridge"):
            raise DimensionMismatchError(f"unknown model {self.model!r}")
        if self.ridge_lambda < 0.0:
            raise DimensionMismatchError("ridge_lambda must be >= 0")


@dataclass(frozen=True)
class HierarchyForecast:
    """Stacked per-origin forecasts over the (total, bundles, assets) rows.

    ``values[m, r, tau-1]`` is the lead-tau forecast issued at
    ``origins[m]`` for hierarchy row r. Rows follow the summing-matrix
    convention: row 0 is the fleet total, rows 1..K the bundles, the last N
    rows the assets. The same container carries realized values when used
    as "actuals".
    """

    origins: np.ndarray
    values: np.ndarray
    n_bundles: int
    n_assets: int

    def __post_init__(self):
        origins = np.asarray(self.origins, dtype="datetime64[s]")
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "origins", origins)
        object.__setattr__(self, "values", values)
        if values.ndim != 3 or values.shape[0] != origins.shape[0]:
            raise ShapeMismatchError(
                f"values shape {values.shape} does not match {origins.shape[0]} origins"
            )
        if values.shape[1] != 1 + self.n_bundles + self.n_assets:
            raise ShapeMismatchError(
                f"{values.shape[1]} rows != 1 + {self.n_bundles} bundles + {self.n_assets} assets"
            )
        if values.size and not np.all(np.isfinite(values)):
            raise ShapeMismatchError("hierarchy forecast contains NaN or infinities")
        origins.flags.writeable = False
        values.flags.writeable = False

    @property
    def n_origins(self) -> int:
        return int(self.origins.shape[0])

    @property
    def horizon(self) -> int:
        return int(self.values.shape[2])

    @property
    def fleet(self) -> np.ndarray:
        return self.values[:, :1, :]

    @property
    def bundles(self) -> np.ndarray:
        return self.values[:, 1:1 + self.n_bundles, :]

    @property
    def assets(self) -> np.ndarray:
        return self.values[:, 1 + self.n_bundles:, :]


# --- persistence --------------------------------------------------------------

def persistence_forecast(history: np.ndarray, horizon: int) -> np.ndarray:
    """Repeat the last observed value across the whole horizon."""
    history = np.asarray(history, dtype=np.float64)
    if history.size == 0:
        raise EmptyHistoryError("persistence forecast needs at least one observation")
    return np.full(horizon, history[-1])


# --- direct multi-horizon ridge -------------------------------------------------

def _calendar_features(origins: np.ndarray) -> np.ndarray:
    """Sine/cosine encodings of hour-of-day and day-of-year at each origin."""
    ts = np.asarray(origins, dtype="datetime64[s]")
    secs = ts.astype(np.int64)
    sod = (secs % 86400).astype(np.float64)
    doy = (ts.astype("datetime64[D]") - ts.astype("datetime64[Y]").astype("datetime64[D]")
           ).astype(np.int64).astype(np.float64)
    hour_angle = 2.0 * np.pi * sod / 86400.0
    doy_angle = 2.0 * np.pi * doy / 365.25
    return np.column_stack(
        [np.sin(hour_angle), np.cos(hour_angle), np.sin(doy_angle), np.cos(doy_angle)]
    )


@dataclass(frozen=True)
class RidgeModel:
    """Fitted direct multi-horizon ridge map from H lags to T leads.

    ``weights`` act on standardized features; ``intercept`` is unpenalized.
    ``coefficients`` exposes the de-standardized linear map for inspection.
    """

    weights: np.ndarray        # (n_features, horizon)
    intercept: np.ndarray      # (horizon,)
    feature_mean: np.ndarray   # (n_features,)
    feature_scale: np.ndarray  # (n_features,)
    history_len: int
    horizon: int
    ridge_lambda: float
    use_calendar: bool

    @property
    def coefficients(self) -> np.ndarray:
        """Linear map on raw (unstandardized) features, (n_features, horizon)."""
        return self.weights / self.feature_scale[:, None]

    def _features(self, histories: np.ndarray, origins) -> np.ndarray:
        feats = histories
        if self.use_calendar:
            if origins is None:
                raise LengthMismatchError("model uses calendar encodings; origins required")
            feats = np.hstack([feats, _calendar_features(np.atleast_1d(origins))])
        return (feats - self.feature_mean) / self.feature_scale

    def predict_batch(self, histories: np.ndarray, origins=None, cap: float | None = None) -> np.ndarray:
        """Predict (M, T) leads from (M, H) trailing windows."""
        histories = np.asarray(histories, dtype=np.float64)
        if histories.ndim != 2 or histories.shape[1] != self.history_len:
            raise LengthMismatchError(
                f"histories shape {histories.shape} does not match input window {self.history_len}"
            )
        x = self._features(histories, origins)
        out = x @ self.weights + self.intercept
        if cap is not None:
            out = np.clip(out, 0.0, cap)
        return out

    def predict(self, history: np.ndarray, origin=None, cap: float | None = None) -> np.ndarray:
        """Predict the length-T horizon from one length-H history."""
        history = np.asarray(history, dtype=np.float64)
        if history.ndim != 1 or history.shape[0] != self.history_len:
            raise LengthMismatchError(
                f"history length {history.shape} does not match input window {self.history_len}"
            )
        origins = None if origin is None else np.array([origin], dtype="datetime64[s]")
        return self.predict_batch(history[None, :], origins, cap)[0]

    def to_dict(self) -> dict:
        return {
            "weights": self.weights.tolist(),
            "intercept": self.intercept.tolist(),
            "feature_mean": self.feature_mean.tolist(),
            "feature_scale": self.feature_scale.tolist(),
            "history_len": self.history_len,
            "horizon": self.horizon,
            "ridge_lambda": self.ridge_lambda,
            "use_calendar": self.use_calendar,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RidgeModel":
        return cls(
            weights=np.array(d["weights"], dtype=np.float64),
            intercept=np.array(d["intercept"], dtype=np.float64),
            feature_mean=np.array(d["feature_mean"], dtype=np.float64),
            feature_scale=np.array(d["feature_scale"], dtype=np.float64),
            history_len=int(d["history_len"]),
            horizon=int(d["horizon"]),
            ridge_lambda=float(d["ridge_lambda"]),
            use_calendar=bool(d["use_calendar"]),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "RidgeModel":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _supervised_windows(values: np.ndarray, history_len: int, horizon: int):
    """Sliding (lags, targets, origin-index) triples over one series."""
    n = values.shape[0]
    n_rows = n - history_len - horizon + 1
    lags = sliding_window_view(values, history_len)[:n_rows]
    targets = sliding_window_view(values, horizon)[history_len:history_len + n_rows]
    origin_idx = np.arange(history_len - 1, history_len - 1 + n_rows)
    return lags, targets, origin_idx


def ridge_fit(values: np.ndarray, timestamps: np.ndarray, task: ForecastTask,
              ridge_lambda: float = 1.0, use_calendar: bool = False) -> RidgeModel:
    """Fit the direct multi-horizon ridge model on one series.

    Solves (X'X + lambda*P) W = X'Y where P penalizes every standardized
    feature except the intercept. At lambda=0 a rank-deficient feature
    matrix raises SingularSystemError instead of being silently
    regularized.
    """
    values = np.asarray(values, dtype=np.float64)
    h, t = task.history_len, task.horizon
    if values.shape[0] < h + t + 1:
        raise InsufficientDataError(
            f"need at least {h + t + 1} training samples for H={h}, T={t}; got {values.shape[0]}"
        )
    lags, targets, origin_idx = _supervised_windows(values, h, t)
    feats = lags
    if use_calendar:
        feats = np.hstack([lags, _calendar_features(np.asarray(timestamps)[origin_idx])])

    mean = feats.mean(axis=0)
    scale = feats.std(axis=0)
    scale = np.where(scale < 1e-12, 1.0, scale)
    x = (feats - mean) / scale
    xa = np.hstack([x, np.ones((x.shape[0], 1))])

    n_feat = x.shape[1]
    gram = xa.T @ xa
    penalty = np.zeros(n_feat + 1)
    penalty[:n_feat] = ridge_lambda
    gram[np.diag_indices_from(gram)] += penalty
    rhs = xa.T @ targets
    try:
        solution = cho_solve(cho_factor(gram), rhs)
    except LinAlgError as exc:
        raise SingularSystemError(
            f"normal equations singular at lambda={ridge_lambda} "
            f"({x.shape[0]} rows, {n_feat} features); degenerate features"
        ) from exc
    return RidgeModel(
        weights=solution[:n_feat],
        intercept=solution[n_feat],
        feature_mean=mean,
        feature_scale=scale,
        history_len=h,
        horizon=t,
        ridge_lambda=float(ridge_lambda),
        use_calendar=use_calendar,
    )


def ridge_predict(model: RidgeModel, history: np.ndarray, origin=None,
                  cap: float | None = None) -> np.ndarray:
    """Predict one horizon; thin functional wrapper over RidgeModel.predict."""
    return model.predict(history, origin, cap)


# --- rolling-origin harness ------------------------------------------------------

@dataclass(frozen=True)
class RollingForecasts:
    """Test-range and in-sample hierarchy forecasts plus skip accounting."""

    test: HierarchyForecast
    insample: HierarchyForecast
    skipped_test: tuple[np.datetime64, ...]
    skipped_insample: tuple[np.datetime64, ...]


def hierarchy_series(panel: AssetPanel, bundling: Bundling) -> np.ndarray:
    """Stack (fleet total, bundle, asset) series into an (N+K+1, T) matrix."""
    if bundling.asset_order != panel.asset_ids:
        raise ShapeMismatchError("bundling asset order does not match panel")
    total = panel.values.sum(axis=0, keepdims=True)
    return np.vstack([total, bundling.bundle_series(panel.values), panel.values])


def hierarchy_capacities(panel: AssetPanel, bundling: Bundling) -> np.ndarray:
    """Physical capacity of every hierarchy row (fleet, bundles, assets)."""
    caps = panel.capacities
    return np.concatenate([[caps.sum()], bundling.assignment @ caps, caps])


def hierarchy_actuals(panel: AssetPanel, bundling: Bundling, origins,
                      horizon: int) -> HierarchyForecast:
    """Realized hierarchy values over {origin+1, ..., origin+T} per origin."""
    series = hierarchy_series(panel, bundling)
    origins = np.asarray(origins, dtype="datetime64[s]")
    idx = np.searchsorted(panel.timestamps, origins)
    if np.any(idx >= panel.n_steps) or np.any(panel.timestamps[idx] != origins):
        raise ShapeMismatchError("an origin is not on the panel's timestamp grid")
    if np.any(idx + horizon > panel.n_steps - 1):
        raise ShapeMismatchError("an origin's horizon extends past the panel")
    values = np.empty((origins.shape[0], series.shape[0], horizon))
    for m, o in enumerate(idx):
        values[m] = series[:, o + 1:o + 1 + horizon]
    return HierarchyForecast(origins, values, bundling.n_bundles, panel.n_assets)


def _forecast_series(series: np.ndarray, timestamps: np.ndarray, origins: np.ndarray,
                     spec: ModelSpec, task: ForecastTask, train_len: int,
                     cap: float) -> np.ndarray:
    """Forecasts (M, T) for one series at the given origin indices."""
    if spec.model == "persistence":
        return np.repeat(series[origins][:, None], task.horizon, axis=1)
    model = ridge_fit(series[:train_len], timestamps[:train_len], task,
                      spec.ridge_lambda, spec.use_calendar)
    windows = sliding_window_view(series, task.history_len)
    histories = windows[origins - task.history_len + 1]
    return model.predict_batch(histories, timestamps[origins], cap)


def rolling_forecast(panel: AssetPanel, bundling: Bundling, task: ForecastTask,
                     specs: dict[str, ModelSpec], split: np.datetime64) -> RollingForecasts:
    """Backtest every hierarchy series with per-level models.

    ``split`` is the first test timestamp: models train on everything
    before it. Forecasts are issued at every origin whose full horizon
    stays inside its range (training range for the in-sample pass, the
    panel for the test pass). Origins with fewer than H prior samples are
    skipped and reported.
    """
    for level in LEVELS:
        if level not in specs:
            raise ShapeMismatchError(f"model spec missing for level {level!r}")
    series = hierarchy_series(panel, bundling)
    caps = hierarchy_capacities(panel, bundling)
    n_rows = series.shape[0]
    split_idx = panel.index_of(split)
    if not 0 < split_idx < panel.n_steps:
        raise ShapeMismatchError("split timestamp outside the panel range")

    h, t = task.history_len, task.horizon
    candidates_train = np.arange(0, max(split_idx - t, 0))
    candidates_test = np.arange(split_idx, max(panel.n_steps - t, split_idx))
    train_origins = candidates_train[candidates_train >= h - 1]
    test_origins = candidates_test[candidates_test >= h - 1]
    skipped_train = tuple(panel.timestamps[candidates_train[candidates_train < h - 1]])
    skipped_test = tuple(panel.timestamps[candidates_test[candidates_test < h - 1]])

    level_of_row = ["fleet"] + ["bundle"] * bundling.n_bundles + ["asset"] * panel.n_assets
    test_values = np.empty((test_origins.shape[0], n_rows, t))
    train_values = np.empty((train_origins.shape[0], n_rows, t))
    for r in range(n_rows):
        spec = specs[level_of_row[r]]
        test_values[:, r, :] = _forecast_series(
            series[r], panel.timestamps, test_origins, spec, task, split_idx, caps[r])
        train_values[:, r, :] = _forecast_series(
            series[r], panel.timestamps, train_origins, spec, task, split_idx, caps[r])

    test = HierarchyForecast(panel.timestamps[test_origins], test_values,
                             bundling.n_bundles, panel.n_assets)
    insample = HierarchyForecast(panel.timestamps[train_origins], train_values,
                                 bundling.n_bundles, panel.n_assets)
    return RollingForecasts(test, insample, skipped_test, skipped_train)


# --- CSV interface ----------------------------------------------------------------

FORECAST_HEADER = "origin,level,series_id,lead,value"


def write_forecast_csv(forecast: HierarchyForecast, asset_ids, path) -> None:
    """Write `origin,level,series_id,lead,value` rows (12 significant digits)."""
    asset_ids = tuple(asset_ids)
    if len(asset_ids) != forecast.n_assets:
        raise ShapeMismatchError(
            f"{len(asset_ids)} asset ids for {forecast.n_assets} asset rows"
        )
    row_meta = [("fleet", "")]
    row_meta += [("bundle", str(k)) for k in range(forecast.n_bundles)]
    row_meta += [("asset", a) for a in asset_ids]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(FORECAST_HEADER + "\n")
        for m in range(forecast.n_origins):
            origin = format_utc_timestamp(forecast.origins[m])
            for r, (level, sid) in enumerate(row_meta):
                for tau in range(forecast.horizon):
                    fh.write(
                        f"{origin},{level},{sid},{tau + 1},"
                        f"{FLOAT_FORMAT.format(forecast.values[m, r, tau])}\n"
                    )


def read_forecast_csv(path, asset_ids, n_bundles: int) -> HierarchyForecast:
    """Reconstruct a HierarchyForecast written by :func:`write_forecast_csv`."""
    asset_ids = tuple(asset_ids)
    row_index = {("fleet", ""): 0}
    row_index.update({("bundle", str(k)): 1 + k for k in range(n_bundles)})
    row_index.update({("asset", a): 1 + n_bundles + i for i, a in enumerate(asset_ids)})

    cells: dict[str, dict[tuple[int, int], float]] = {}
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != FORECAST_HEADER:
            raise FormatError(f"{path}: expected header {FORECAST_HEADER!r}, got {header!r}")
        for ln, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            origin, level, sid, lead, value = line.split(",")
            key = (level, sid)
            if key not in row_index:
                raise FormatError(f"{path}:{ln}: unknown series {key}")
            cells.setdefault(origin, {})[(row_index[key], int(lead) - 1)] = float(value)

    if not cells:
        raise FormatError(f"{path}: no forecast rows")
    origin_texts = sorted(cells, key=parse_utc_timestamp)
    horizon = 1 + max(tau for by_cell in cells.values() for (_, tau) in by_cell)
    n_rows = 1 + n_bundles + len(asset_ids)
    values = np.full((len(origin_texts), n_rows, horizon), np.nan)
    for m, origin in enumerate(origin_texts):
        for (r, tau), v in cells[origin].items():
            values[m, r, tau] = v
    if np.isnan(values).any():
        raise FormatError(f"{path}: incomplete forecast grid")
    origins = np.array([parse_utc_timestamp(o) for o in origin_texts], dtype="datetime64[s]")
    return HierarchyForecast(origins, values, n_bundles, len(asset_ids))
