"""Multiclass gradient-boosted trees with a softmax objective.

One regression tree per class per round, fitted to the first- and
second-order derivatives of the log-loss (g = p - y, h = p(1 - p)),
exact greedy splits over raw feature values, leaf weight -G/(H+lambda).
Row subsampling below 1.0 is implemented by zeroing the gradient pairs
of the out-of-sample rows, which keeps one shared presort per fit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from ._seeds import mix_seed


@dataclass
class BoostConfig:
    rounds: int = 200
    depth: int = 6
    learning_rate: float = 0.1
    subsample: float = 1.0
    reg_lambda: float = 1.0
    min_leaf: int = 1

    def validate(self) -> None:
        if self.rounds < 1 or self.depth < 1 or self.min_leaf < 1:
            raise ValueError("rounds, depth and min_leaf must be >= 1")
        if not (0.0 < self.learning_rate <= 1.0):
            raise ValueError("learning_rate must be in (0, 1]")
        if not (0.0 < self.subsample <= 1.0):
            raise ValueError("subsample must be in (0, 1]")
        if not (self.reg_lambda > 0.0):
            raise ValueError("reg_lambda must be > 0")


def softmax(scores: np.ndarray) -> np.ndarray:
    z = scores - scores.max(axis=1, keepdims=True)
    p = np.exp(z)
    p /= p.sum(axis=1, keepdims=True)
    return p


class GradientBoostedClassifier:
    """Fitted forest; use :meth:`fit` then :meth:`predict_proba`."""

    def __init__(self, config: BoostConfig | None = None):
        self.config = config or BoostConfig()
        self.n_classes = 0
        self.n_features = 0
        self._packed: tuple | None = None

    def fit(self, X: np.ndarray, y: np.ndarray, n_classes: int, seed: int = 0) -> "GradientBoostedClassifier":
        cfg = self.config
        cfg.validate()
        X = np.ascontiguousarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
        n, d = X.shape
        self.n_classes = int(n_classes)
        self.n_features = d

        onehot = np.zeros((n, n_classes), dtype=np.float64)
        onehot[np.arange(n), y] = 1.0
        scores = np.zeros((n, n_classes), dtype=np.float64)

        grower = _kernels.TreeGrower(X)
        rng = np.random.default_rng(mix_seed(seed, 0xB005))
        trees: list[tuple] = []
        for _ in range(cfg.rounds):
            proba = softmax(scores)
            grad = proba - onehot
            hess = proba * (1.0 - proba)
            if cfg.subsample < 1.0:
                keep = rng.random(n) < cfg.subsample
                grad = grad * keep[:, None]
                hess = hess * keep[:, None]
            for k in range(n_classes):
                feat, thr, left, right, value, train_pred = grower.grow(
                    np.ascontiguousarray(grad[:, k]),
                    np.ascontiguousarray(hess[:, k]),
                    cfg.depth,
                    cfg.min_leaf,
                    cfg.reg_lambda,
                )
                scores[:, k] += cfg.learning_rate * train_pred
                trees.append((k, feat, thr, left, right, value))
        self._packed = _pack(trees)
        return self

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        if self._packed is None:
            raise RuntimeError("classifier is not fitted")
        X = np.ascontiguousarray(np.atleast_2d(X), dtype=np.float64)
        feat, thr, left, right, value, tree_start, tree_class = self._packed
        scores = _kernels.apply_forest(
            feat, thr, left, right, value, tree_start, tree_class,
            X, self.n_classes, self.config.learning_rate,
        )
        return softmax(scores)

    # -- persistence -----------------------------------------------------

    def to_dict(self) -> dict:
        feat, thr, left, right, value, tree_start, tree_class = self._packed
        return {
            "kind": "gbt",
            "n_classes": self.n_classes,
            "n_features": self.n_features,
            "config": vars(self.config),
            "feat": feat.tolist(),
            "thr": thr.tolist(),
            "left": left.tolist(),
            "right": right.tolist(),
            "value": value.tolist(),
            "tree_start": tree_start.tolist(),
            "tree_class": tree_class.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "GradientBoostedClassifier":
        model = cls(BoostConfig(**doc["config"]))
        model.n_classes = int(doc["n_classes"])
        model.n_features = int(doc["n_features"])
        model._packed = (
            np.asarray(doc["feat"], dtype=np.int32),
            np.asarray(doc["thr"], dtype=np.float64),
            np.asarray(doc["left"], dtype=np.int32),
            np.asarray(doc["right"], dtype=np.int32),
            np.asarray(doc["value"], dtype=np.float64),
            np.asarray(doc["tree_start"], dtype=np.int64),
            np.asarray(doc["tree_class"], dtype=np.int32),
        )
        return model


def _pack(trees: list[tuple]) -> tuple:
    """Concatenate per-tree node arrays; child ids become global."""
    tree_class = np.asarray([t[0] for t in trees], dtype=np.int32)
    sizes = [t[1].size for t in trees]
    tree_start = np.zeros(len(trees) + 1, dtype=np.int64)
    np.cumsum(sizes, out=tree_start[1:])
    feat = np.concatenate([t[1] for t in trees])
    thr = np.concatenate([t[2] for t in trees])
    left = np.concatenate(
        [np.where(t[3] >= 0, t[3] + off, -1) for t, off in zip(trees, tree_start[:-1])]
    ).astype(np.int32)
    right = np.concatenate(
        [np.where(t[4] >= 0, t[4] + off, -1) for t, off in zip(trees, tree_start[:-1])]
    ).astype(np.int32)
    value = np.concatenate([t[5] for t in trees])
    return (
        np.ascontiguousarray(feat, dtype=np.int32),
        np.ascontiguousarray(thr, dtype=np.float64),
        np.ascontiguousarray(left, dtype=np.int32),
        np.ascontiguousarray(right, dtype=np.int32),
        np.ascontiguousarray(value, dtype=np.float64),
        tree_start,
        tree_class,
    )
