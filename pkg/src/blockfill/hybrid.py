"""Composition of two prediction maps into one."""

from __future__ import annotations

from .errors import KeyMismatchError
from .model import TargetPair

DEFAULT_ALPHA = 0.5


def hybrid_impute(
    pred_a: dict[str, TargetPair],
    pred_b: dict[str, TargetPair],
    alpha: float = DEFAULT_ALPHA,
) -> dict[str, TargetPair]:
    """Per-feature blend alpha*a + (1-alpha)*b over identical key sets."""
    if not (0.0 <= alpha <= 1.0):
        raise ValueError(f"alpha must be in [0, 1], got {alpha}")
    if pred_a.keys() != pred_b.keys():
        only_a = sorted(pred_a.keys() - pred_b.keys())[:5]
        only_b = sorted(pred_b.keys() - pred_a.keys())[:5]
        raise KeyMismatchError(f"prediction keys differ (a-only {only_a}, b-only {only_b})")
    return {
        bid: TargetPair(
            fsi=alpha * pred_a[bid].fsi + (1.0 - alpha) * pred_b[bid].fsi,
            gsi=alpha * pred_a[bid].gsi + (1.0 - alpha) * pred_b[bid].gsi,
        )
        for bid in pred_a
    }
