"""Probabilistic cluster membership from land use, and the imputation step.

A classifier maps the 8-feature vector (seven land-use shares plus
log10 site area) to a distribution over morphological clusters; missing
fsi/gsi are then reconstructed as probability-weighted combinations of
the cluster medians. Two model kinds sit behind one interface: the
package's own gradient-boosted trees (default) and an L2-regularized
multinomial logistic regression.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._seeds import mix_seed
from .boosting import BoostConfig, GradientBoostedClassifier, softmax
from .errors import (
    DimensionMismatchError,
    KMismatchError,
    MissingClassError,
    TooFewSamplesError,
)
from .model import BlockRecord, BlockTable, TargetPair
from .morphology import ClusterModel, assign_clusters, fit_cluster_model

FEATURE_DIM = 8

#: minimum training rows per class for fit_classifier.
MIN_ROWS_PER_CLASS = 10


def build_features(record: BlockRecord) -> np.ndarray:
    """Shares pass through; site area enters as log10, clamped at 1 m^2."""
    area = max(record.site_area, 1.0)
    return np.asarray([*record.shares, np.log10(area)], dtype=np.float64)


def build_feature_matrix(table: BlockTable, positions: np.ndarray) -> np.ndarray:
    area = np.maximum(table.site_area[positions], 1.0)
    return np.column_stack([table.shares[positions], np.log10(area)])


@dataclass
class LogisticConfig:
    l2: float = 1e-3
    grad_tol: float = 1e-6
    max_steps: int = 5000


class MultinomialLogistic:
    """Full-batch gradient descent on the softmax cross-entropy.

    Features are standardized internally for conditioning; the bias row
    is not regularized. The step size is 1/L with L an upper bound on
    the loss Hessian's largest eigenvalue.
    """

    def __init__(self, config: LogisticConfig | None = None):
        self.config = config or LogisticConfig()
        self.n_classes = 0
        self.weights: np.ndarray | None = None  # (d+1, K), last row = bias
        self._mean: np.ndarray | None = None
        self._std: np.ndarray | None = None

    def fit(self, X: np.ndarray, y: np.ndarray, n_classes: int, seed: int = 0) -> "MultinomialLogistic":
        cfg = self.config
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
        n, d = X.shape
        self.n_classes = int(n_classes)
        self._mean = X.mean(axis=0)
        std = X.std(axis=0)
        std[std == 0.0] = 1.0
        self._std = std
        xb = np.column_stack([(X - self._mean) / self._std, np.ones(n)])

        onehot = np.zeros((n, n_classes), dtype=np.float64)
        onehot[np.arange(n), y] = 1.0
        w = np.zeros((d + 1, n_classes), dtype=np.float64)
        gram_max = float(np.linalg.eigvalsh(xb.T @ xb).max())
        step = 1.0 / (0.5 * gram_max / n + cfg.l2)
        reg_mask = np.ones((d + 1, 1))
        reg_mask[d] = 0.0  # bias unregularized
        for _ in range(cfg.max_steps):
            p = softmax(xb @ w)
            grad = xb.T @ (p - onehot) / n + cfg.l2 * (w * reg_mask)
            if float(np.sqrt((grad**2).sum())) < cfg.grad_tol:
                break
            w -= step * grad
        self.weights = w
        return self

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        xb = np.column_stack([(X - self._mean) / self._std, np.ones(X.shape[0])])
        return softmax(xb @ self.weights)

    def to_dict(self) -> dict:
        return {
            "kind": "logistic",
            "n_classes": self.n_classes,
            "config": vars(self.config),
            "weights": self.weights.tolist(),
            "mean": self._mean.tolist(),
            "std": self._std.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "MultinomialLogistic":
        model = cls(LogisticConfig(**doc["config"]))
        model.n_classes = int(doc["n_classes"])
        model.weights = np.asarray(doc["weights"], dtype=np.float64)
        model._mean = np.asarray(doc["mean"], dtype=np.float64)
        model._std = np.asarray(doc["std"], dtype=np.float64)
        return model


@dataclass
class ClassifierConfig:
    kind: str = "gbt"  # "gbt" | "logistic"
    gbt: BoostConfig = field(default_factory=BoostConfig)
    logistic: LogisticConfig = field(default_factory=LogisticConfig)


class ClusterClassifier:
    """Kind-dispatching facade with the probability-vector contract."""

    def __init__(self, kind: str, model, n_classes: int, config: ClassifierConfig):
        self.kind = kind
        self.model = model
        self.n_classes = n_classes
        self.config = config

    def to_dict(self) -> dict:
        return {"kind": self.kind, "n_classes": self.n_classes, "model": self.model.to_dict()}

    @classmethod
    def from_dict(cls, doc: dict) -> "ClusterClassifier":
        kind = doc["kind"]
        if kind == "gbt":
            model = GradientBoostedClassifier.from_dict(doc["model"])
        elif kind == "logistic":
            model = MultinomialLogistic.from_dict(doc["model"])
        else:
            raise ValueError(f"unknown classifier kind {kind!r}")
        cfg = ClassifierConfig(kind=kind)
        return cls(kind, model, int(doc["n_classes"]), cfg)


def fit_classifier(
    features: np.ndarray,
    labels: np.ndarray,
    n_classes: int,
    config: ClassifierConfig | None = None,
    seed: int = 0,
) -> ClusterClassifier:
    config = config or ClassifierConfig()
    features = np.atleast_2d(np.asarray(features, dtype=np.float64))
    labels = np.asarray(labels, dtype=np.int64)
    n = features.shape[0]
    if features.shape[1] != FEATURE_DIM:
        raise DimensionMismatchError(f"expected {FEATURE_DIM} features, got {features.shape[1]}")
    if n < MIN_ROWS_PER_CLASS * n_classes:
        raise TooFewSamplesError(
            f"need at least {MIN_ROWS_PER_CLASS * n_classes} rows for {n_classes} classes, got {n}"
        )
    present = np.bincount(labels, minlength=n_classes)
    absent = np.flatnonzero(present == 0)
    if labels.min() < 0 or labels.max() >= n_classes or absent.size:
        raise MissingClassError(f"labels must cover [0, {n_classes}); absent classes: {absent.tolist()}")
    if config.kind == "gbt":
        model = GradientBoostedClassifier(config.gbt).fit(features, labels, n_classes, seed=seed)
    elif config.kind == "logistic":
        model = MultinomialLogistic(config.logistic).fit(features, labels, n_classes, seed=seed)
    else:
        raise ValueError(f"unknown classifier kind {config.kind!r}")
    return ClusterClassifier(config.kind, model, int(n_classes), config)


def predict_proba(classifier: ClusterClassifier, features: np.ndarray) -> np.ndarray:
    """Probability distribution(s) over clusters for one or many vectors."""
    features = np.asarray(features, dtype=np.float64)
    single = features.ndim == 1
    features = np.atleast_2d(features)
    if features.shape[1] != FEATURE_DIM:
        raise DimensionMismatchError(f"expected {FEATURE_DIM} features, got {features.shape[1]}")
    proba = classifier.model.predict_proba(features)
    return proba[0] if single else proba


def weighted_impute(proba: np.ndarray, model: ClusterModel) -> TargetPair:
    """Probability-weighted combination of the cluster medians."""
    proba = np.asarray(proba, dtype=np.float64)
    if proba.shape != (model.k,):
        raise KMismatchError(f"probability vector of length {proba.shape} vs k={model.k}")
    med = model.median_matrix()
    fsi, gsi = proba @ med
    return TargetPair(fsi=float(fsi), gsi=float(gsi))


@dataclass
class SmConfig:
    """Configuration of the morphological imputation pipeline."""

    k: int | str = "auto"
    k_range: tuple[int, int] = (4, 12)
    restarts: int = 10
    max_iter: int = 300
    classifier: ClassifierConfig = field(default_factory=ClassifierConfig)


def sm_impute(
    table: BlockTable,
    config: SmConfig | None = None,
    seed: int = 0,
    mask=None,
) -> dict[str, TargetPair]:
    """Morphological imputation of every block with a missing target.

    Stages: fit the cluster model on observed blocks, label them, train
    the cluster classifier on land use + area, then fill each missing
    block with the probability-weighted cluster medians. When ``mask``
    (positions or a MissingMask) is given, those blocks' stored targets
    are removed before any fitting, so stale values can never leak in.
    """
    config = config or SmConfig()
    if mask is not None:
        table = _apply_mask(table, mask)
    missing = table.missing_positions()
    if missing.size == 0:
        return {}

    model = fit_cluster_model(
        table,
        k=config.k,
        seed=mix_seed(seed, 0xC1),
        restarts=config.restarts,
        k_range=config.k_range,
        max_iter=config.max_iter,
    )
    observed = table.observed_positions()
    pairs = np.column_stack([table.fsi[observed], table.gsi[observed]])
    labels = assign_clusters(model, pairs)
    classifier = fit_classifier(
        build_feature_matrix(table, observed),
        labels,
        model.k,
        config=config.classifier,
        seed=mix_seed(seed, 0xC2),
    )
    proba = classifier.model.predict_proba(build_feature_matrix(table, missing))
    predictions = proba @ model.median_matrix()

    result: dict[str, TargetPair] = {}
    for row, pos in enumerate(missing):
        rec = table.records[pos]
        result[rec.id] = TargetPair(
            fsi=float(predictions[row, 0]) if rec.fsi is None else rec.fsi,
            gsi=float(predictions[row, 1]) if rec.gsi is None else rec.gsi,
        )
    return result


def _apply_mask(table: BlockTable, mask) -> BlockTable:
    """Physically remove the targets named by a mask before fitting."""
    if hasattr(mask, "fsi_positions"):
        return table.with_hidden(sorted(mask.fsi_positions), sorted(mask.gsi_positions))
    return table.with_hidden(sorted(int(p) for p in mask))
