"""Hierarchical wind-power forecasting with learned asset bundles.

The pipeline has three stages: group assets into bundles by minimizing a
covariance criterion under a geographic diameter constraint, forecast every
level of the (fleet, bundles, assets) hierarchy, and reconcile the forecasts
into coherent ones with per-lead weighted least squares. A metrics suite
(NMAE, RMSE, variogram score, energy distance) scores each level.
"""

__version__ = "0.1.0"

from .bundling import (
    Bundling,
    BundlingConfig,
    FeasibilityReport,
    SweepPoint,
    check_feasible,
    diameter_sweep,
    exact_bundle,
    exact_partition,
    greedy_bundle,
    greedy_merge,
    kmeans_bundle,
    objective,
)
from .core import (
    AssetMeta,
    AssetPanel,
    Criterion,
    CriterionMatrix,
    covariance,
    difference,
    haversine_matrix,
    ingest_panel,
    seasonal_adjust,
)
from .forecast import (
    DAY_AHEAD,
    SHORT_TERM,
    ForecastTask,
    HierarchyForecast,
    ModelSpec,
    RidgeModel,
    RollingForecasts,
    hierarchy_actuals,
    hierarchy_capacities,
    hierarchy_series,
    persistence_forecast,
    ridge_fit,
    ridge_predict,
    rolling_forecast,
)
from .metrics import (
    EvaluationReport,
    energy_distance,
    evaluate,
    nmae,
    rmse,
    variogram_score,
)
from .reconcile import (
    LeadWeights,
    ReconcilerModel,
    build_reconciler,
    coherence_gap,
    estimate_weights,
    reconcile,
    summing_matrix,
)
from .synth import SynthConfig, synth_panel, write_synth_csv

__all__ = [
    "__version__",
    "AssetMeta", "AssetPanel", "Criterion", "CriterionMatrix",
    "covariance", "difference", "haversine_matrix", "ingest_panel", "seasonal_adjust",
    "Bundling", "BundlingConfig", "FeasibilityReport", "SweepPoint",
    "check_feasible", "diameter_sweep", "exact_bundle", "exact_partition",
    "greedy_bundle", "greedy_merge", "kmeans_bundle", "objective",
    "ForecastTask", "HierarchyForecast", "ModelSpec", "RidgeModel", "RollingForecasts",
    "SHORT_TERM", "DAY_AHEAD",
    "hierarchy_actuals", "hierarchy_capacities", "hierarchy_series",
    "persistence_forecast", "ridge_fit", "ridge_predict", "rolling_forecast",
    "EvaluationReport", "energy_distance", "evaluate", "nmae", "rmse", "variogram_score",
    "LeadWeights", "ReconcilerModel", "build_reconciler", "coherence_gap",
    "estimate_weights", "reconcile", "summing_matrix",
    "SynthConfig", "synth_panel", "write_synth_csv",
]
