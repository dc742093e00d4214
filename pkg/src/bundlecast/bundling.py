"""Partition assets into bundles by minimizing a covariance quadratic form.

The bundling objective is tr(L @ sigma @ L.T) where L is a K x N binary
assignment matrix (one bundle per row, each asset in exactly one bundle) and
sigma is one of the criterion covariance matrices from :mod:`bundlecast.core`.
A diameter constraint forbids placing two assets in the same bundle when
their great-circle distance exceeds a cutoff.

Solvers:

* :func:`greedy_bundle` -- agglomerative descent that starts from singletons
  and repeatedly merges the pair of bundles with the most negative
  inter-bundle covariance among diameter-feasible pairs. Merging the argmin
  pair is the steepest single-merge descent: merging bundles k and l changes
  the objective by exactly ``2 * lam_k @ sigma @ lam_l``.
* :func:`exact_bundle` -- exhaustive enumeration of set partitions into
  exactly K non-empty parts, guarded to N <= 12. Used as the optimality
  oracle for the greedy.
* :func:`kmeans_bundle` -- geographic baseline; Lloyd's algorithm on
  (lat, lon) degrees with deterministic k-means++ seeding. The diameter
  constraint is reported, not enforced, for this baseline.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import AssetMeta, AssetPanel, Criterion, CriterionMatrix, covariance
from .errors import (
    DimensionMismatchError,
    FormatError,
    InfeasibleMergeError,
    InfeasiblePartitionError,
    PartitionTooLargeError,
)

EXACT_MAX_ASSETS = 12


@dataclass(frozen=True)
class Bundling:
    """A K x N binary assignment of assets to bundles.

    Invariants: every column sums to exactly 1 (each asset in one bundle)
    and every row sums to >= 1 (no empty bundle). Rows are conventionally
    ordered by smallest member index; the solvers always emit that order.
    """

    assignment: np.ndarray
    asset_order: tuple[str, ...]

    def __post_init__(self):
        lam = np.asarray(self.assignment, dtype=np.float64)
        object.__setattr__(self, "assignment", lam)
        object.__setattr__(self, "asset_order", tuple(self.asset_order))
        if lam.ndim != 2:
            raise DimensionMismatchError(f"assignment must be 2-D, got shape {lam.shape}")
        if lam.shape[1] != len(self.asset_order):
            raise DimensionMismatchError(
                f"assignment has {lam.shape[1]} columns for {len(self.asset_order)} assets"
            )
        if not np.all((lam == 0.0) | (lam == 1.0)):
            raise DimensionMismatchError("assignment entries must be 0 or 1")
        if not np.all(lam.sum(axis=0) == 1.0):
            raise DimensionMismatchError("each asset must belong to exactly one bundle")
        if not np.all(lam.sum(axis=1) >= 1.0):
            raise DimensionMismatchError("each bundle must be non-empty")
        lam.flags.writeable = False

    @classmethod
    def from_labels(cls, labels, n_bundles: int, asset_order) -> "Bundling":
        """Build from a length-N label vector with values in 0..K-1."""
        labels = np.asarray(labels, dtype=np.int64)
        lam = np.zeros((n_bundles, labels.shape[0]))
        lam[labels, np.arange(labels.shape[0])] = 1.0
        return cls(lam, tuple(asset_order))

    @classmethod
    def from_members(cls, members, asset_order) -> "Bundling":
        """Build from a list of member-index lists (one list per bundle)."""
        n = len(asset_order)
        lam = np.zeros((len(members), n))
        for k, idx in enumerate(members):
            lam[k, list(idx)] = 1.0
        return cls(lam, tuple(asset_order))

    @classmethod
    def single_bundle(cls, asset_order) -> "Bundling":
        return cls(np.ones((1, len(asset_order))), tuple(asset_order))

    @property
    def n_bundles(self) -> int:
        return int(self.assignment.shape[0])

    @property
    def n_assets(self) -> int:
        return int(self.assignment.shape[1])

    @property
    def labels(self) -> np.ndarray:
        return self.assignment.argmax(axis=0)

    def members(self, k: int) -> np.ndarray:
        return np.nonzero(self.assignment[k] == 1.0)[0]

    def bundle_series(self, values: np.ndarray) -> np.ndarray:
        """Aggregate an (N, T) panel into the (K, T) bundle series."""
        values = np.asarray(values)
        if values.shape[0] != self.n_assets:
            raise DimensionMismatchError(
                f"panel has {values.shape[0]} rows, bundling expects {self.n_assets}"
            )
        return self.assignment @ values

    def canonical(self) -> "Bundling":
        """Reorder rows by smallest member index."""
        order = np.argsort([int(self.members(k)[0]) for k in range(self.n_bundles)])
        return Bundling(self.assignment[order], self.asset_order)


@dataclass(frozen=True)
class BundlingConfig:
    """Target bundle count, criterion, diameter cutoff, and kmeans seed."""

    n_bundles: int
    criterion: Criterion = Criterion.VARIANCE
    diameter_km: float = math.inf
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "criterion", Criterion(self.criterion))
        if self.n_bundles < 1:
            raise DimensionMismatchError(f"n_bundles must be >= 1, got {self.n_bundles}")
        if not self.diameter_km > 0.0:
            raise DimensionMismatchError(f"diameter_km must be positive, got {self.diameter_km}")


@dataclass(frozen=True)
class FeasibilityReport:
    feasible: bool
    violations: tuple[tuple[int, int, int], ...]  # (bundle, asset_i, asset_j)


def _sigma_array(sigma) -> np.ndarray:
    if isinstance(sigma, CriterionMatrix):
        return sigma.sigma
    return np.asarray(sigma, dtype=np.float64)


def objective(bundling: Bundling, sigma) -> float:
    """Evaluate tr(L @ sigma @ L.T) for a bundling."""
    s = _sigma_array(sigma)
    lam = bundling.assignment
    if s.shape != (bundling.n_assets, bundling.n_assets):
        raise DimensionMismatchError(
            f"criterion matrix shape {s.shape} does not match {bundling.n_assets} assets"
        )
    return float(np.einsum("ki,ij,kj->", lam, s, lam))


def check_feasible(bundling: Bundling, distances: np.ndarray, diameter_km: float) -> FeasibilityReport:
    """Check the pairwise diameter constraint inside every bundle."""
    distances = np.asarray(distances)
    if distances.shape != (bundling.n_assets, bundling.n_assets):
        raise DimensionMismatchError(
            f"distance matrix shape {distances.shape} does not match {bundling.n_assets} assets"
        )
    violations = []
    for k in range(bundling.n_bundles):
        idx = bundling.members(k)
        for a in range(len(idx)):
            for b in range(a + 1, len(idx)):
                i, j = int(idx[a]), int(idx[b])
                if distances[i, j] > diameter_km:
                    violations.append((k, i, j))
    return FeasibilityReport(not violations, tuple(violations))


# --- greedy agglomerative solver ---------------------------------------------

def greedy_merge(sigma, distances: np.ndarray, n_bundles: int, diameter_km: float,
                 asset_order) -> Bundling:
    """Agglomerative merge descent on an explicit criterion matrix.

    Starts from N singletons and, while more than ``n_bundles`` remain,
    merges the diameter-feasible pair with minimal inter-bundle covariance.
    Ties are broken by the lexicographically smallest pair of smallest
    member indices, which makes the result independent of scan order.
    """
    s = _sigma_array(sigma)
    distances = np.asarray(distances, dtype=np.float64)
    n = s.shape[0]
    if distances.shape != (n, n) or len(asset_order) != n:
        raise DimensionMismatchError("sigma, distances, and asset_order sizes disagree")
    if not 1 <= n_bundles <= n:
        raise DimensionMismatchError(f"n_bundles must be in 1..{n}, got {n_bundles}")

    members: list[list[int]] = [[i] for i in range(n)]
    cov = s.copy()              # cov[a, b] = lam_a @ sigma @ lam_b
    diam = distances.copy()     # diam[a, b] = max cross-pair distance

    while len(members) > n_bundles:
        b_count = len(members)
        iu, ju = np.triu_indices(b_count, k=1)
        pair_cov = np.where(diam[iu, ju] <= diameter_km, cov[iu, ju], np.inf)
        best = float(pair_cov.min()) if pair_cov.size else math.inf
        if not math.isfinite(best):
            raise InfeasibleMergeError(
                f"no diameter-feasible merge left at {b_count} bundles "
                f"(target {n_bundles}, cutoff {diameter_km} km)",
                bundles_reached=b_count,
            )
        # members stays sorted by smallest member, so the first row-major tie
        # is the lexicographically smallest (min index, second index) pair.
        first = int(np.nonzero(pair_cov == best)[0][0])
        a, b = int(iu[first]), int(ju[first])

        cov[a, :] += cov[b, :]
        cov[:, a] += cov[:, b]
        cov = np.delete(np.delete(cov, b, axis=0), b, axis=1)
        diam[a, :] = np.maximum(diam[a, :], diam[b, :])
        diam[:, a] = np.maximum(diam[:, a], diam[:, b])
        diam = np.delete(np.delete(diam, b, axis=0), b, axis=1)
        members[a] = sorted(members[a] + members[b])
        del members[b]

    return Bundling.from_members(members, asset_order)


def greedy_bundle(panel: AssetPanel, distances: np.ndarray, config: BundlingConfig) -> Bundling:
    """Greedy bundling of a panel under its configured criterion."""
    sigma = covariance(panel, config.criterion)
    return greedy_merge(sigma, distances, config.n_bundles, config.diameter_km, panel.asset_ids)


# --- exact enumeration oracle -------------------------------------------------

def exact_partition(sigma, distances: np.ndarray, n_bundles: int, diameter_km: float,
                    asset_order) -> Bundling:
    """Optimal bundling by enumerating set partitions into K non-empty parts.

    Partitions are visited as restricted-growth strings (parts labeled by
    first appearance), so ties resolve to the lexicographically smallest
    canonical assignment. Guarded to N <= 12.
    """
    s = _sigma_array(sigma)
    distances = np.asarray(distances, dtype=np.float64)
    n = s.shape[0]
    if n > EXACT_MAX_ASSETS:
        raise PartitionTooLargeError(
            f"exact enumeration is limited to {EXACT_MAX_ASSETS} assets, got {n}"
        )
    if distances.shape != (n, n) or len(asset_order) != n:
        raise DimensionMismatchError("sigma, distances, and asset_order sizes disagree")
    if not 1 <= n_bundles <= n:
        raise DimensionMismatchError(f"n_bundles must be in 1..{n}, got {n_bundles}")

    best_cost = math.inf
    best_parts: list[list[int]] | None = None
    parts: list[list[int]] = []

    def recurse(i: int, cost: float) -> None:
        nonlocal best_cost, best_parts
        if i == n:
            if len(parts) == n_bundles and cost < best_cost:
                best_cost = cost
                best_parts = [list(p) for p in parts]
            return
        if len(parts) + (n - i) < n_bundles:
            return
        for p in parts:
            if np.all(distances[i, p] <= diameter_km):
                delta = s[i, i] + 2.0 * float(s[i, p].sum())
                p.append(i)
                recurse(i + 1, cost + delta)
                p.pop()
        if len(parts) < n_bundles:
            parts.append([i])
            recurse(i + 1, cost + s[i, i])
            parts.pop()

    recurse(0, 0.0)
    if best_parts is None:
        raise InfeasiblePartitionError(
            f"no partition of {n} assets into {n_bundles} bundles satisfies "
            f"the {diameter_km} km diameter cutoff"
        )
    return Bundling.from_members(best_parts, asset_order)


def exact_bundle(panel: AssetPanel, distances: np.ndarray, config: BundlingConfig) -> Bundling:
    """Exact bundling of a panel under its configured criterion."""
    sigma = covariance(panel, config.criterion)
    return exact_partition(sigma, distances, config.n_bundles, config.diameter_km, panel.asset_ids)


# --- geographic k-means baseline ----------------------------------------------

def _kmeans_pp_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    centers = np.empty((k, points.shape[1]))
    centers[0] = points[rng.integers(points.shape[0])]
    d2 = ((points - centers[0]) ** 2).sum(axis=1)
    for c in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            idx = int(rng.integers(points.shape[0]))
        else:
            idx = int(rng.choice(points.shape[0], p=d2 / total))
        centers[c] = points[idx]
        d2 = np.minimum(d2, ((points - centers[c]) ** 2).sum(axis=1))
    return centers


def kmeans_bundle(assets, distances: np.ndarray, config: BundlingConfig,
                  max_iter: int = 100) -> Bundling:
    """Geographic k-means baseline on raw (lat, lon) degree coordinates.

    Deterministic for a fixed config seed. Empty clusters are repaired by
    reassigning the point farthest from its current center. The diameter
    constraint is only reported (as a warning) because this baseline does
    not optimize a covariance criterion.
    """
    assets = list(assets)
    k = config.n_bundles
    if not 1 <= k <= len(assets):
        raise DimensionMismatchError(f"n_bundles must be in 1..{len(assets)}, got {k}")
    points = np.array([[a.latitude_deg, a.longitude_deg] for a in assets])
    rng = np.random.default_rng(config.seed)
    centers = _kmeans_pp_init(points, k, rng)

    labels = np.full(points.shape[0], -1)
    for _ in range(max_iter):
        d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_labels = d2.argmin(axis=1)
        for empty in np.setdiff1d(np.arange(k), np.unique(new_labels)):
            own = d2[np.arange(points.shape[0]), new_labels]
            farthest = int(own.argmax())
            new_labels[farthest] = empty
            d2[farthest, :] = 0.0  # keep the repair point in place
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for c in range(k):
            centers[c] = points[labels == c].mean(axis=0)

    # relabel by smallest member index so the output row order is canonical
    order = {old: new for new, old in enumerate(sorted(set(labels), key=lambda c: int(np.nonzero(labels == c)[0][0])))}
    labels = np.array([order[c] for c in labels])
    bundling = Bundling.from_labels(labels, k, [a.asset_id for a in assets])

    if math.isfinite(config.diameter_km):
        report = check_feasible(bundling, distances, config.diameter_km)
        if not report.feasible:
            warnings.warn(
                f"kmeans bundling violates the {config.diameter_km} km diameter "
                f"cutoff in {len(report.violations)} asset pair(s)",
                stacklevel=2,
            )
    return bundling


# --- diameter sweep ------------------------------------------------------------

@dataclass(frozen=True)
class SweepPoint:
    diameter_km: float
    objective: float | None
    feasible: bool


def diameter_sweep(panel: AssetPanel, distances: np.ndarray, criterion: Criterion | str,
                   n_bundles: int, diameters) -> list[SweepPoint]:
    """Greedy objective as a function of the diameter cutoff.

    Diameters must be positive and ascending. Cutoffs under which the greedy
    cannot reach ``n_bundles`` produce an infeasible marker row instead of
    failing the sweep.
    """
    diameters = [float(d) for d in diameters]
    if any(d <= 0.0 for d in diameters):
        raise DimensionMismatchError("diameters must be positive")
    if any(b < a for a, b in zip(diameters, diameters[1:])):
        raise DimensionMismatchError("diameters must be ascending")
    if not diameters:
        return []
    sigma = covariance(panel, Criterion(criterion))
    points = []
    for d in diameters:
        try:
            bundling = greedy_merge(sigma, distances, n_bundles, d, panel.asset_ids)
        except InfeasibleMergeError:
            points.append(SweepPoint(d, None, False))
        else:
            points.append(SweepPoint(d, objective(bundling, sigma), True))
    return points


# --- CSV interface ---------------------------------------------------------------

BUNDLING_HEADER = "bundle_id,asset_id"


def write_bundling_csv(bundling: Bundling, path) -> None:
    """Write `bundle_id,asset_id` rows, bundles ordered by smallest member."""
    canonical = bundling.canonical()
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(BUNDLING_HEADER + "\n")
        for k in range(canonical.n_bundles):
            for i in canonical.members(k):
                fh.write(f"{k},{canonical.asset_order[int(i)]}\n")


def read_bundling_csv(path, asset_order) -> Bundling:
    """Read a bundling CSV back against a known asset ordering."""
    asset_order = tuple(asset_order)
    index = {a: i for i, a in enumerate(asset_order)}
    pairs: list[tuple[int, str]] = []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != BUNDLING_HEADER:
            raise FormatError(f"{path}: expected header {BUNDLING_HEADER!r}, got {header!r}")
        for ln, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            bundle_id, asset_id = line.split(",", 1)
            if asset_id not in index:
                raise FormatError(f"{path}:{ln}: unknown asset id {asset_id!r}")
            pairs.append((int(bundle_id), asset_id))
    if not pairs:
        raise FormatError(f"{path}: no bundle assignments")
    n_bundles = max(b for b, _ in pairs) + 1
    labels = np.full(len(asset_order), -1)
    for b, a in pairs:
        labels[index[a]] = b
    if np.any(labels < 0):
        missing = [asset_order[i] for i in np.nonzero(labels < 0)[0]]
        raise FormatError(f"{path}: assets without a bundle: {missing}")
    return Bundling.from_labels(labels, n_bundles, asset_order)
