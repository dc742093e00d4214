"""Minimum-trace reconciliation with per-lead WLS variance scaling.

Incoherent hierarchy forecasts (fleet, bundles, assets predicted by separate
models) are projected onto the coherent subspace spanned by the summing
matrix S. For each lead time tau the projection uses the diagonal of the
in-sample error second-moment matrix as weights:

    G_tau = (S' W_tau^-1 S)^-1 S' W_tau^-1,   h~ = S G_tau h^

G_tau S = I holds by construction (so reconciling coherent forecasts is the
identity) and rescaling all weights of one lead by any positive constant
leaves G_tau unchanged. G_tau is computed by Cholesky solves of the N x N
normal system; the inverse weight matrix is never formed explicitly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, LinAlgError

from .bundling import Bundling
from .errors import (
    NoOriginsError,
    ShapeMismatchError,
    SingularNormalMatrixError,
)
from .forecast import HierarchyForecast


def summing_matrix(bundling: Bundling) -> np.ndarray:
    """The (N+K+1) x N matrix stacking (ones row; assignment; identity)."""
    n = bundling.n_assets
    return np.vstack([np.ones((1, n)), bundling.assignment, np.eye(n)])


@dataclass(frozen=True)
class LeadWeights:
    """Per-lead diagonal residual variances, floored away from zero.

    ``variances[tau-1, r]`` is the in-sample mean squared error of
    hierarchy row r at lead tau; ``n_floored`` counts the entries raised to
    the floor.
    """

    variances: np.ndarray   # (horizon, n_rows)
    sample_count: int
    floor: float
    n_floored: np.ndarray   # (horizon,)

    def __post_init__(self):
        v = np.asarray(self.variances, dtype=np.float64)
        object.__setattr__(self, "variances", v)
        object.__setattr__(self, "n_floored", np.asarray(self.n_floored, dtype=np.int64))
        if v.ndim != 2:
            raise ShapeMismatchError(f"variances must be 2-D, got shape {v.shape}")
        if not np.all(np.isfinite(v)) or not np.all(v > 0.0):
            raise ShapeMismatchError("lead weights must be finite and strictly positive")
        v.flags.writeable = False


def estimate_weights(forecasts: HierarchyForecast, actuals: HierarchyForecast,
                     eps_floor: float) -> LeadWeights:
    """Per-lead, per-row mean squared in-sample error, floored at eps_floor.

    The floor guards against exactly-zero residuals (e.g. persistence over a
    constant stretch), which would make the weight matrix singular.
    """
    if forecasts.values.shape != actuals.values.shape:
        raise ShapeMismatchError(
            f"forecast shape {forecasts.values.shape} != actuals shape {actuals.values.shape}"
        )
    if not np.array_equal(forecasts.origins, actuals.origins):
        raise ShapeMismatchError("forecast and actual origins differ")
    if forecasts.n_origins == 0:
        raise NoOriginsError("weight estimation needs at least one origin")
    if not eps_floor > 0.0:
        raise ShapeMismatchError(f"eps_floor must be positive, got {eps_floor}")
    err = forecasts.values - actuals.values           # (M, R, T)
    second_moment = np.mean(err * err, axis=0).T      # (T, R)
    floored = second_moment < eps_floor
    return LeadWeights(
        variances=np.maximum(second_moment, eps_floor),
        sample_count=forecasts.n_origins,
        floor=eps_floor,
        n_floored=floored.sum(axis=1),
    )


@dataclass(frozen=True)
class ReconcilerModel:
    """Summing matrix plus per-lead projection gains G_tau.

    Invariant (checked at build time): G_tau @ S = I for every lead.
    """

    summing: np.ndarray         # (n_rows, n_assets)
    gains: np.ndarray           # (horizon, n_assets, n_rows)
    lead_condition: np.ndarray  # (horizon,) condition numbers of S'W^-1 S

    @property
    def horizon(self) -> int:
        return int(self.gains.shape[0])


def build_reconciler(summing: np.ndarray, weights: LeadWeights) -> ReconcilerModel:
    """Assemble G_tau for every lead from the summing matrix and weights."""
    s = np.asarray(summing, dtype=np.float64)
    n_rows, n_assets = s.shape
    if weights.variances.shape[1] != n_rows:
        raise ShapeMismatchError(
            f"weights cover {weights.variances.shape[1]} rows, summing matrix has {n_rows}"
        )
    horizon = weights.variances.shape[0]
    gains = np.empty((horizon, n_assets, n_rows))
    condition = np.empty(horizon)
    for tau in range(horizon):
        inv_w = 1.0 / weights.variances[tau]
        weighted_st = s.T * inv_w[None, :]            # S' W^-1, (N, R)
        normal = weighted_st @ s                      # S' W^-1 S, (N, N)
        try:
            gains[tau] = cho_solve(cho_factor(normal), weighted_st)
        except LinAlgError as exc:
            raise SingularNormalMatrixError(
                f"normal matrix factorization failed at lead {tau + 1}"
            ) from exc
        condition[tau] = np.linalg.cond(normal)
        gap = np.max(np.abs(gains[tau] @ s - np.eye(n_assets)))
        if gap > 1e-8:
            raise SingularNormalMatrixError(
                f"G@S deviates from identity by {gap:.3e} at lead {tau + 1}"
            )
    return ReconcilerModel(s, gains, condition)


def reconcile(model: ReconcilerModel, forecasts: HierarchyForecast) -> HierarchyForecast:
    """Project forecasts onto the coherent subspace, per origin and lead."""
    n_rows = model.summing.shape[0]
    if forecasts.values.shape[1] != n_rows:
        raise ShapeMismatchError(
            f"forecast has {forecasts.values.shape[1]} rows, reconciler expects {n_rows}"
        )
    if forecasts.horizon != model.horizon:
        raise ShapeMismatchError(
            f"forecast horizon {forecasts.horizon} != reconciler horizon {model.horizon}"
        )
    bottom = np.einsum("tnr,mrt->mnt", model.gains, forecasts.values)
    coherent = np.einsum("rn,mnt->mrt", model.summing, bottom)
    return HierarchyForecast(forecasts.origins, coherent,
                             forecasts.n_bundles, forecasts.n_assets)


def coherence_gap(forecast: HierarchyForecast, summing: np.ndarray) -> float:
    """Largest absolute aggregation mismatch across rows, origins, and leads.

    Zero (up to numerics) iff every bundle row equals the sum of its member
    assets and the fleet row equals the sum of all assets, i.e. the stacked
    values equal S applied to the asset rows.
    """
    s = np.asarray(summing, dtype=np.float64)
    if forecast.values.shape[1] != s.shape[0] or forecast.n_assets != s.shape[1]:
        raise ShapeMismatchError(
            f"forecast rows {forecast.values.shape[1]}x{forecast.n_assets} do not "
            f"match summing matrix {s.shape}"
        )
    if forecast.values.size == 0:
        return 0.0
    implied = np.einsum("rn,mnt->mrt", s, forecast.assets)
    return float(np.max(np.abs(forecast.values - implied)))


def count_bound_violations(forecast: HierarchyForecast, capacities) -> np.ndarray:
    """Per-lead count of reconciled values outside [0, row capacity].

    Reconciled forecasts are deliberately not clipped (clipping would break
    coherence); this counter surfaces how often the projection leaves the
    physical range.
    """
    caps = np.asarray(capacities, dtype=np.float64)
    if caps.shape != (forecast.values.shape[1],):
        raise ShapeMismatchError(
            f"{caps.shape} capacities for {forecast.values.shape[1]} hierarchy rows"
        )
    outside = (forecast.values < 0.0) | (forecast.values > caps[None, :, None])
    return outside.sum(axis=(0, 1))


def write_diagnostics_csv(model: ReconcilerModel, weights: LeadWeights, path,
                          bound_violations=None) -> None:
    """Per-lead condition of S'W^-1 S, floored weights, and range violations."""
    if bound_violations is None:
        bound_violations = np.zeros(model.horizon, dtype=np.int64)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("lead,normal_condition,n_floored_weights,n_bound_violations\n")
        for tau in range(model.horizon):
            fh.write(
                f"{tau + 1},{model.lead_condition[tau]:.6e},"
                f"{int(weights.n_floored[tau])},{int(bound_violations[tau])}\n"
            )
