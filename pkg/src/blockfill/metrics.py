"""Error metrics for imputation quality: mae, rmse, r2 and a trimmed r2."""

from __future__ import annotations

import math

import numpy as np

from .errors import EmptyInputError, LengthMismatchError, ZeroVarianceError

#: fraction of pairs retained by the robust variant (nearest-rank trim).
R2_ROBUST_KEEP = 0.95

#: minimum sample size for the trimmed r2 (trimming needs sample mass).
R2_ROBUST_MIN_N = 20


def _paired(y, yhat) -> tuple[np.ndarray, np.ndarray]:
    y = np.asarray(y, dtype=np.float64)
    yhat = np.asarray(yhat, dtype=np.float64)
    if y.shape != yhat.shape or y.ndim != 1:
        raise LengthMismatchError(f"expected equal 1-d lengths, got {y.shape} vs {yhat.shape}")
    if y.size == 0:
        raise EmptyInputError("metrics require at least one pair")
    return y, yhat


def mae(y, yhat) -> float:
    y, yhat = _paired(y, yhat)
    return float(np.mean(np.abs(y - yhat)))


def rmse(y, yhat) -> float:
    y, yhat = _paired(y, yhat)
    return float(math.sqrt(np.mean((y - yhat) ** 2)))


def r2(y, yhat) -> float:
    """Coefficient of determination 1 - SS_res / SS_tot."""
    y, yhat = _paired(y, yhat)
    if y.size < 2:
        raise EmptyInputError("r2 requires at least two pairs")
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        raise ZeroVarianceError("r2 undefined: ground-truth values have zero variance")
    ss_res = float(np.sum((y - yhat) ** 2))
    return 1.0 - ss_res / ss_tot


def r2_robust(y, yhat) -> float:
    """r2 after dropping the largest-|residual| 5% of pairs.

    The retained count is the nearest-rank 95th percentile position
    ceil(0.95 n); ties at the cut are resolved by keeping lower indices
    (stable sort), so the trim is deterministic. The mean of y is
    recomputed on the retained pairs.
    """
    y, yhat = _paired(y, yhat)
    n = y.size
    if n < R2_ROBUST_MIN_N:
        raise EmptyInputError(f"r2_robust requires at least {R2_ROBUST_MIN_N} pairs, got {n}")
    keep = math.ceil(R2_ROBUST_KEEP * n)
    order = np.argsort(np.abs(y - yhat), kind="stable")
    kept = np.sort(order[:keep])
    return r2(y[kept], yhat[kept])
