"""End-to-end orchestration: bundle, predict, reconcile, evaluate.

A run consumes one config plus the assets/series CSV pair and produces a
run directory holding the bundling, raw and reconciled forecasts, the
evaluation reports, reconciler diagnostics, and a manifest of input hashes.
Outputs are a pure function of (config, input files): no wall-clock time or
machine state leaks into any file, so identical runs are byte-identical.

When the config asks for the no-bundling baseline, the same panel is pushed
through a second pass with a single bundle (K=1) and a side-by-side
comparison of the reconciled fleet/bundle/asset metrics is emitted.
"""

from __future__ import annotations

import hashlib
import json
import math
import shutil
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .bundling import (
    Bundling,
    BundlingConfig,
    check_feasible,
    diameter_sweep,
    greedy_bundle,
    kmeans_bundle,
    objective,
    read_bundling_csv,
    write_bundling_csv,
)
from .config import RunConfig, load_run_config, load_synth_config
from .core import AssetPanel, Criterion, covariance, haversine_matrix, ingest_panel
from .errors import BundlecastError, ConfigError
from .forecast import (
    FLOAT_FORMAT,
    HierarchyForecast,
    RollingForecasts,
    hierarchy_actuals,
    hierarchy_capacities,
    read_forecast_csv,
    rolling_forecast,
    write_forecast_csv,
)
from .metrics import EvaluationReport, evaluate, write_report_csv
from .reconcile import (
    LeadWeights,
    ReconcilerModel,
    build_reconciler,
    count_bound_violations,
    estimate_weights,
    reconcile,
    summing_matrix,
    write_diagnostics_csv,
)
from .synth import write_synth_csv

WEIGHT_FLOOR_REL = 1e-8  # of squared fleet capacity

BUNDLING_FILE = "bundling.csv"
FORECAST_TEST_FILE = "forecasts_raw.csv"
FORECAST_INSAMPLE_FILE = "forecasts_insample.csv"
RECONCILED_FILE = "forecasts_reconciled.csv"
REPORT_FILE = "evaluation.csv"
REPORT_RAW_FILE = "evaluation_raw.csv"
DIAGNOSTICS_FILE = "diagnostics.csv"
COMPARISON_FILE = "comparison.csv"
MANIFEST_FILE = "manifest.json"


class StageError(BundlecastError):
    """A pipeline stage failed; carries the stage name for CLI reporting."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause


def _stage(name: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except StageError:
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc


def load_panel(config: RunConfig) -> AssetPanel:
    """Ingest the configured files, restricted to the train..test range."""
    panel = ingest_panel(config.assets_file, config.series_file)
    return panel.window(config.train_start, config.test_end)


def make_bundling(config: RunConfig, panel: AssetPanel, distances: np.ndarray,
                  n_bundles: int | None = None) -> Bundling:
    """Learn bundles on the training range only (test data stays unseen)."""
    k = config.n_bundles if n_bundles is None else n_bundles
    if k == 1:
        return Bundling.single_bundle(panel.asset_ids)
    train_panel = panel.window(config.train_start, config.train_end)
    if config.criterion == "kmeans":
        cfg = BundlingConfig(k, Criterion.VARIANCE, config.diameter_km, config.seed)
        return kmeans_bundle(panel.assets, distances, cfg)
    cfg = BundlingConfig(k, Criterion(config.criterion), config.diameter_km, config.seed)
    return greedy_bundle(train_panel, distances, cfg)


@dataclass(frozen=True)
class RunArtifacts:
    """In-memory results of one pipeline pass."""

    bundling: Bundling
    forecasts: RollingForecasts
    weights: LeadWeights
    reconciler: ReconcilerModel
    reconciled: HierarchyForecast
    reports_raw: dict[str, EvaluationReport]
    reports_reconciled: dict[str, EvaluationReport]


def execute(config: RunConfig, panel: AssetPanel, distances: np.ndarray,
            n_bundles: int | None = None) -> RunArtifacts:
    """Run bundle -> predict -> reconcile -> evaluate on a loaded panel."""
    bundling = _stage("bundle", make_bundling, config, panel, distances, n_bundles)
    forecasts = _stage(
        "forecast", rolling_forecast,
        panel, bundling, config.forecast_task, config.specs, config.test_start,
    )

    def _reconcile_stage():
        actual_train = hierarchy_actuals(
            panel, bundling, forecasts.insample.origins, config.horizon)
        weights = estimate_weights(
            forecasts.insample, actual_train,
            eps_floor=WEIGHT_FLOOR_REL * panel.fleet_capacity ** 2)
        model = build_reconciler(summing_matrix(bundling), weights)
        return weights, model, reconcile(model, forecasts.test)

    weights, model, reconciled = _stage("reconcile", _reconcile_stage)

    def _evaluate_stage():
        actual_test = hierarchy_actuals(
            panel, bundling, forecasts.test.origins, config.horizon)
        caps = panel.capacities
        raw = evaluate(actual_test, forecasts.test, bundling, caps)
        rec = evaluate(actual_test, reconciled, bundling, caps)
        return raw, rec

    reports_raw, reports_reconciled = _stage("evaluate", _evaluate_stage)
    return RunArtifacts(bundling, forecasts, weights, model, reconciled,
                        reports_raw, reports_reconciled)


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(config_path, config: RunConfig, out_dir: Path) -> None:
    manifest = {
        "package": "bundlecast",
        "version": __version__,
        "config_sha256": _sha256(config_path),
        "assets_sha256": _sha256(config.assets_file),
        "series_sha256": _sha256(config.series_file),
    }
    (out_dir / MANIFEST_FILE).write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def _write_artifacts(artifacts: RunArtifacts, panel: AssetPanel, out_dir: Path,
                     prefix: str = "") -> None:
    # the in-sample forecasts are an intermediate (stage interface), not a
    # run product; stage_forecast writes them for stage_reconcile to read
    ids = panel.asset_ids
    write_bundling_csv(artifacts.bundling, out_dir / (prefix + BUNDLING_FILE))
    write_forecast_csv(artifacts.forecasts.test, ids, out_dir / (prefix + FORECAST_TEST_FILE))
    write_forecast_csv(artifacts.reconciled, ids, out_dir / (prefix + RECONCILED_FILE))
    write_report_csv(artifacts.reports_reconciled, out_dir / (prefix + REPORT_FILE))
    write_report_csv(artifacts.reports_raw, out_dir / (prefix + REPORT_RAW_FILE))
    violations = count_bound_violations(
        artifacts.reconciled, hierarchy_capacities(panel, artifacts.bundling))
    write_diagnostics_csv(artifacts.reconciler, artifacts.weights,
                          out_dir / (prefix + DIAGNOSTICS_FILE), violations)


def _write_comparison(bundled: dict[str, EvaluationReport],
                      baseline: dict[str, EvaluationReport], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("level,metric,bundled,baseline\n")
        for level in ("fleet", "bundle", "asset"):
            pairs = [("nmae", bundled[level].nmae, baseline[level].nmae),
                     ("rmse", bundled[level].rmse, baseline[level].rmse),
                     ("ed", bundled[level].ed, baseline[level].ed)]
            if bundled[level].vs is not None and baseline[level].vs is not None:
                pairs.append(("vs", bundled[level].vs, baseline[level].vs))
            for name, b, k1 in pairs:
                fh.write(
                    f"{level},{name},{FLOAT_FORMAT.format(b)},{FLOAT_FORMAT.format(k1)}\n"
                )


def _prepare_out_dir(out_dir: Path) -> bool:
    """Create the run directory; returns True when this call created it."""
    if out_dir.exists():
        if any(out_dir.iterdir()):
            raise ConfigError(f"output directory {out_dir} exists and is not empty")
        return False
    out_dir.mkdir(parents=True)
    return True


def run(config_path, out_dir=None) -> Path:
    """Execute a full run from a config file; returns the run directory.

    Partial outputs are removed when any stage fails.
    """
    config = load_run_config(config_path)
    out = Path(out_dir) if out_dir is not None else Path(config.output_dir)
    created = _prepare_out_dir(out)
    try:
        panel = _stage("ingest", load_panel, config)
        distances = haversine_matrix(panel.assets)
        artifacts = execute(config, panel, distances)
        _write_artifacts(artifacts, panel, out)
        if config.baseline:
            base = execute(config, panel, distances, n_bundles=1)
            _write_artifacts(base, panel, out, prefix="baseline_")
            _write_comparison(artifacts.reports_reconciled, base.reports_reconciled,
                              out / COMPARISON_FILE)
        write_manifest(config_path, config, out)
    except BaseException:
        if created:
            shutil.rmtree(out, ignore_errors=True)
        else:
            for child in out.iterdir():
                child.unlink()
        raise
    return out


# --- stage-wise commands (build one run directory incrementally) -------------

def _stage_dir(config: RunConfig, out_dir) -> Path:
    out = Path(out_dir) if out_dir is not None else Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _require(path: Path, producer: str) -> Path:
    if not path.exists():
        raise ConfigError(f"{path} not found; run the '{producer}' stage first")
    return path


def stage_synth(config_path, out_dir=None) -> tuple[Path, Path]:
    """Generate the assets/series CSV pair named in a generator config."""
    cfg, assets_file, series_file = load_synth_config(config_path)
    assets, series = Path(assets_file), Path(series_file)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        assets, series = out / assets.name, out / series.name
    for target in (assets, series):
        target.parent.mkdir(parents=True, exist_ok=True)
    _stage("synth", write_synth_csv, cfg, assets, series)
    return assets, series


def stage_bundle(config_path, out_dir=None) -> Path:
    """Learn bundles and write bundling.csv into the run directory."""
    config = load_run_config(config_path)
    out = _stage_dir(config, out_dir)
    panel = _stage("ingest", load_panel, config)
    distances = haversine_matrix(panel.assets)
    bundling = _stage("bundle", make_bundling, config, panel, distances)
    write_bundling_csv(bundling, out / BUNDLING_FILE)
    if math.isfinite(config.diameter_km):
        report = check_feasible(bundling, distances, config.diameter_km)
        if not report.feasible:
            print(f"warning: bundling violates the diameter cutoff in "
                  f"{len(report.violations)} pair(s)")
    if config.criterion != "kmeans":
        train = panel.window(config.train_start, config.train_end)
        sigma = covariance(train, Criterion(config.criterion))
        print(f"objective[{config.criterion}] = {objective(bundling, sigma):.6g}")
    return out / BUNDLING_FILE


def stage_forecast(config_path, out_dir=None) -> Path:
    """Produce test and in-sample forecasts for a previously learned bundling."""
    config = load_run_config(config_path)
    out = _stage_dir(config, out_dir)
    panel = _stage("ingest", load_panel, config)
    bundling = read_bundling_csv(_require(out / BUNDLING_FILE, "bundle"), panel.asset_ids)
    forecasts = _stage(
        "forecast", rolling_forecast,
        panel, bundling, config.forecast_task, config.specs, config.test_start,
    )
    write_forecast_csv(forecasts.test, panel.asset_ids, out / FORECAST_TEST_FILE)
    write_forecast_csv(forecasts.insample, panel.asset_ids, out / FORECAST_INSAMPLE_FILE)
    return out / FORECAST_TEST_FILE


def stage_reconcile(config_path, out_dir=None) -> Path:
    """Reconcile the raw forecasts written by the forecast stage."""
    config = load_run_config(config_path)
    out = _stage_dir(config, out_dir)
    panel = _stage("ingest", load_panel, config)
    bundling = read_bundling_csv(_require(out / BUNDLING_FILE, "bundle"), panel.asset_ids)
    insample = read_forecast_csv(_require(out / FORECAST_INSAMPLE_FILE, "forecast"),
                                 panel.asset_ids, bundling.n_bundles)
    test = read_forecast_csv(_require(out / FORECAST_TEST_FILE, "forecast"),
                             panel.asset_ids, bundling.n_bundles)

    def _stage_fn():
        actual_train = hierarchy_actuals(panel, bundling, insample.origins, insample.horizon)
        weights = estimate_weights(
            insample, actual_train,
            eps_floor=WEIGHT_FLOOR_REL * panel.fleet_capacity ** 2)
        model = build_reconciler(summing_matrix(bundling), weights)
        return weights, model, reconcile(model, test)

    weights, model, reconciled = _stage("reconcile", _stage_fn)
    write_forecast_csv(reconciled, panel.asset_ids, out / RECONCILED_FILE)
    violations = count_bound_violations(reconciled, hierarchy_capacities(panel, bundling))
    write_diagnostics_csv(model, weights, out / DIAGNOSTICS_FILE, violations)
    return out / RECONCILED_FILE


def stage_evaluate(config_path, out_dir=None) -> Path:
    """Score raw and reconciled forecasts against realized values."""
    config = load_run_config(config_path)
    out = _stage_dir(config, out_dir)
    panel = _stage("ingest", load_panel, config)
    bundling = read_bundling_csv(_require(out / BUNDLING_FILE, "bundle"), panel.asset_ids)
    test = read_forecast_csv(_require(out / FORECAST_TEST_FILE, "forecast"),
                             panel.asset_ids, bundling.n_bundles)
    reconciled = read_forecast_csv(_require(out / RECONCILED_FILE, "reconcile"),
                                   panel.asset_ids, bundling.n_bundles)

    def _stage_fn():
        actual_test = hierarchy_actuals(panel, bundling, test.origins, test.horizon)
        raw = evaluate(actual_test, test, bundling, panel.capacities)
        rec = evaluate(actual_test, reconciled, bundling, panel.capacities)
        return raw, rec

    raw, rec = _stage("evaluate", _stage_fn)
    write_report_csv(rec, out / REPORT_FILE)
    write_report_csv(raw, out / REPORT_RAW_FILE)
    return out / REPORT_FILE


def run_sweep(config_path, out_dir=None) -> Path:
    """Greedy objective vs. diameter for the savar and imcy criteria."""
    config = load_run_config(config_path)
    if config.diameters is None:
        raise ConfigError(f"{config_path}: sweep needs a 'diameters' key")
    out = Path(out_dir) if out_dir is not None else Path(config.output_dir)
    created = _prepare_out_dir(out)
    try:
        panel = _stage("ingest", load_panel, config).window(
            config.train_start, config.train_end)
        distances = haversine_matrix(panel.assets)
        with open(out / "sweep.csv", "w", encoding="utf-8") as fh:
            fh.write("diameter_km,criterion,objective,feasible\n")
            for criterion in (Criterion.SAVAR, Criterion.IMCY):
                points = _stage(
                    "bundle", diameter_sweep,
                    panel, distances, criterion, config.n_bundles, config.diameters)
                for pt in points:
                    obj = "" if pt.objective is None else FLOAT_FORMAT.format(pt.objective)
                    fh.write(
                        f"{FLOAT_FORMAT.format(pt.diameter_km)},{criterion.value},"
                        f"{obj},{str(pt.feasible).lower()}\n"
                    )
        write_manifest(config_path, config, out)
    except BaseException:
        if created:
            shutil.rmtree(out, ignore_errors=True)
        else:
            for child in out.iterdir():
                child.unlink()
        raise
    return out
