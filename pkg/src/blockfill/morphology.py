"""Morphological clustering of blocks in (fsi, gsi) space.

Blocks with observed targets are standardized (population std) and
clustered with Lloyd's algorithm under k-means++ seeding. Each cluster
carries the component-wise median fsi/gsi of its members in original
units (lower median for even counts); those medians are the density
profile used downstream for probability-weighted imputation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ._seeds import mix_seed
from .errors import ConstantFeatureError, TooFewObservedError, TooFewPointsError
from .model import BlockTable, TargetPair

DEFAULT_K_RANGE = (4, 12)
DEFAULT_RESTARTS = 10
DEFAULT_MAX_ITER = 300


@dataclass(frozen=True)
class Standardizer:
    """Per-feature (x - mean) / std transform over the observed subset."""

    mean_fsi: float
    mean_gsi: float
    std_fsi: float
    std_gsi: float

    def transform(self, pairs: np.ndarray) -> np.ndarray:
        pairs = np.atleast_2d(np.asarray(pairs, dtype=np.float64))
        return (pairs - [self.mean_fsi, self.mean_gsi]) / [self.std_fsi, self.std_gsi]

    def inverse_transform(self, z: np.ndarray) -> np.ndarray:
        z = np.atleast_2d(np.asarray(z, dtype=np.float64))
        return z * [self.std_fsi, self.std_gsi] + [self.mean_fsi, self.mean_gsi]


def fit_standardizer(pairs: Sequence[TargetPair] | np.ndarray) -> Standardizer:
    arr = _pairs_to_array(pairs)
    if arr.shape[0] < 2:
        raise TooFewPointsError("standardizer needs at least 2 pairs")
    mean = arr.mean(axis=0)
    std = arr.std(axis=0)  # population std (ddof=0)
    if std[0] == 0.0 or std[1] == 0.0:
        raise ConstantFeatureError("fsi/gsi have zero variance; cannot standardize")
    return Standardizer(float(mean[0]), float(mean[1]), float(std[0]), float(std[1]))


def _pairs_to_array(pairs) -> np.ndarray:
    if isinstance(pairs, np.ndarray):
        return np.atleast_2d(pairs.astype(np.float64))
    return np.asarray([(p.fsi, p.gsi) for p in pairs], dtype=np.float64)


@dataclass
class KMeansResult:
    labels: np.ndarray
    centroids: np.ndarray
    inertia: float
    trace: list[float]  # inertia after each assignment step, non-increasing


def _assign(points: np.ndarray, centroids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    d2 = ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    labels = np.argmin(d2, axis=1)  # ties -> lowest label index
    return labels, d2[np.arange(points.shape[0]), labels]


def _kmeanspp_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centroids = np.empty((k, points.shape[1]), dtype=np.float64)
    first = int(rng.integers(n))
    centroids[0] = points[first]
    d2 = ((points - centroids[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            idx = int(rng.integers(n))
        else:
            cum = np.cumsum(d2 / total)
            idx = int(np.searchsorted(cum, rng.random(), side="right"))
            idx = min(idx, n - 1)
        centroids[j] = points[idx]
        d2 = np.minimum(d2, ((points - centroids[j]) ** 2).sum(axis=1))
    return centroids


def _lloyd(points: np.ndarray, k: int, rng: np.random.Generator, max_iter: int) -> KMeansResult:
    n, dim = points.shape
    centroids = _kmeanspp_init(points, k, rng)
    labels, dist2 = _assign(points, centroids)
    trace = [float(dist2.sum())]
    for _ in range(max_iter):
        counts = np.bincount(labels, minlength=k)
        sums = np.zeros((k, dim), dtype=np.float64)
        for d in range(dim):
            sums[:, d] = np.bincount(labels, weights=points[:, d], minlength=k)
        nonempty = counts > 0
        new_centroids = centroids.copy()
        new_centroids[nonempty] = sums[nonempty] / counts[nonempty, None]
        empties = np.flatnonzero(~nonempty)
        if empties.size:
            # re-seed each empty cluster with the point farthest from its
            # own (new) centroid; a point is used at most once per pass
            own = ((points - new_centroids[labels]) ** 2).sum(axis=1)
            for e in empties:
                j = int(np.argmax(own))
                new_centroids[e] = points[j]
                own[j] = -1.0
        new_labels, dist2 = _assign(points, new_centroids)
        trace.append(float(dist2.sum()))
        centroids = new_centroids
        if np.array_equal(new_labels, labels):
            labels = new_labels
            break
        labels = new_labels
    return KMeansResult(labels=labels, centroids=centroids, inertia=trace[-1], trace=trace)


def kmeans_fit(
    points: np.ndarray,
    k: int,
    seed: int = 0,
    max_iter: int = DEFAULT_MAX_ITER,
    restarts: int = DEFAULT_RESTARTS,
) -> KMeansResult:
    """Seeded k-means++ / Lloyd with deterministic restarts.

    Runs ``restarts`` independent seeded inits; the lowest final inertia
    wins, ties resolved toward the earliest restart.
    """
    points = np.ascontiguousarray(np.atleast_2d(points), dtype=np.float64)
    n = points.shape[0]
    if k < 2:
        raise TooFewPointsError("k must be >= 2")
    if n < k:
        raise TooFewPointsError(f"need at least k={k} points, got {n}")
    if not np.isfinite(points).all():
        raise ValueError("points must be finite")
    if np.unique(points, axis=0).shape[0] < k:
        raise TooFewPointsError("fewer distinct points than clusters")
    best: KMeansResult | None = None
    for r in range(max(1, restarts)):
        rng = np.random.default_rng(mix_seed(seed, 0x5EED, r))
        result = _lloyd(points, k, rng, max_iter)
        if best is None or result.inertia < best.inertia:
            best = result
    return best


def silhouette_score(points: np.ndarray, labels: np.ndarray) -> float:
    """Mean silhouette over all points; singleton clusters score 0."""
    points = np.asarray(points, dtype=np.float64)
    labels = np.asarray(labels)
    n = points.shape[0]
    dist = np.sqrt(((points[:, None, :] - points[None, :, :]) ** 2).sum(axis=2))
    ks = np.unique(labels)
    scores = np.zeros(n, dtype=np.float64)
    for i in range(n):
        same = labels == labels[i]
        n_same = int(same.sum())
        if n_same <= 1:
            continue
        a = dist[i, same].sum() / (n_same - 1)
        b = np.inf
        for kk in ks:
            if kk == labels[i]:
                continue
            other = labels == kk
            b = min(b, dist[i, other].mean())
        denom = max(a, b)
        scores[i] = 0.0 if denom == 0.0 else (b - a) / denom
    return float(scores.mean())


def select_k(
    points: np.ndarray,
    k_range: tuple[int, int] = DEFAULT_K_RANGE,
    seed: int = 0,
    max_iter: int = DEFAULT_MAX_ITER,
    restarts: int = DEFAULT_RESTARTS,
) -> int:
    """Silhouette-maximizing k over the range; ties go to the smaller k."""
    k_min, k_max = int(k_range[0]), int(k_range[1])
    if not (2 <= k_min <= k_max):
        raise TooFewPointsError(f"invalid k range [{k_min}, {k_max}]")
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if points.shape[0] <= k_max:
        raise TooFewPointsError(f"need more than {k_max} points to scan k range")
    best_k = k_min
    best_score = -np.inf
    for k in range(k_min, k_max + 1):
        result = kmeans_fit(points, k, seed=mix_seed(seed, 0x5E1E, k), max_iter=max_iter, restarts=restarts)
        score = silhouette_score(points, result.labels)
        if score > best_score:
            best_score = score
            best_k = k
    return best_k


@dataclass
class ClusterModel:
    """Fitted morphology: standardization, centroids, per-cluster medians."""

    standardizer: Standardizer
    centroids: np.ndarray  # k x 2, standardized space
    medians: tuple[TargetPair, ...]  # original units
    k: int
    inertia: float
    seed: int

    def median_matrix(self) -> np.ndarray:
        return np.asarray([(m.fsi, m.gsi) for m in self.medians], dtype=np.float64)

    def to_dict(self) -> dict:
        return {
            "standardizer": vars(self.standardizer),
            "centroids": self.centroids.tolist(),
            "medians": [vars(m) for m in self.medians],
            "k": self.k,
            "inertia": self.inertia,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ClusterModel":
        return cls(
            standardizer=Standardizer(**doc["standardizer"]),
            centroids=np.asarray(doc["centroids"], dtype=np.float64),
            medians=tuple(TargetPair(**m) for m in doc["medians"]),
            k=int(doc["k"]),
            inertia=float(doc["inertia"]),
            seed=int(doc["seed"]),
        )


def _lower_median(values: np.ndarray) -> float:
    ordered = np.sort(values)
    return float(ordered[(ordered.size - 1) // 2])


def fit_cluster_model(
    table: BlockTable,
    k: int | str = "auto",
    seed: int = 0,
    restarts: int = DEFAULT_RESTARTS,
    k_range: tuple[int, int] = DEFAULT_K_RANGE,
    max_iter: int = DEFAULT_MAX_ITER,
) -> ClusterModel:
    """Fit the morphology model on blocks with both targets observed."""
    observed = table.observed_positions()
    pairs = np.column_stack([table.fsi[observed], table.gsi[observed]])
    n_obs = pairs.shape[0]
    if n_obs < 10:
        raise TooFewObservedError(f"need at least 10 observed blocks, got {n_obs}")
    if k == "auto":
        k_max = min(int(k_range[1]), n_obs - 1)
        k_min = min(int(k_range[0]), k_max)
        k = select_k(
            fit_standardizer(pairs).transform(pairs),
            (k_min, k_max),
            seed=seed,
            max_iter=max_iter,
            restarts=restarts,
        )
    k = int(k)
    if n_obs < k:
        raise TooFewObservedError(f"need at least k={k} observed blocks, got {n_obs}")
    standardizer = fit_standardizer(pairs)
    z = standardizer.transform(pairs)
    result = kmeans_fit(z, k, seed=seed, max_iter=max_iter, restarts=restarts)
    medians = []
    for c in range(k):
        members = result.labels == c
        medians.append(
            TargetPair(
                fsi=_lower_median(pairs[members, 0]),
                gsi=_lower_median(pairs[members, 1]),
            )
        )
    return ClusterModel(
        standardizer=standardizer,
        centroids=result.centroids,
        medians=tuple(medians),
        k=k,
        inertia=result.inertia,
        seed=seed,
    )


def assign_cluster(model: ClusterModel, pair: TargetPair) -> int:
    """Nearest centroid in standardized space; ties -> lowest label."""
    z = model.standardizer.transform(np.asarray([[pair.fsi, pair.gsi]]))
    d2 = ((model.centroids - z) ** 2).sum(axis=1)
    return int(np.argmin(d2))


def assign_clusters(model: ClusterModel, pairs: np.ndarray) -> np.ndarray:
    """Vectorized :func:`assign_cluster` over an (n, 2) array."""
    z = model.standardizer.transform(pairs)
    d2 = ((z[:, None, :] - model.centroids[None, :, :]) ** 2).sum(axis=2)
    return np.argmin(d2, axis=1)
