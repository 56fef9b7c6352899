"""Accuracy metrics for surrogate evaluation.

Two normalizations are used throughout: a per-cell RMSE normalized by the
mean target ("hourly"), and a totals-based bias ratio ("stock annual",
where squaring and square-rooting a single summed residual cancel, leaving
the normalized mean bias error).
"""

from __future__ import annotations

import numpy as np


class MetricError(ValueError):
    """Metric undefined for the given targets (zero or negative mass)."""


def _pair(preds, targets) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(preds, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    if p.shape != t.shape:
        raise MetricError(f"shape mismatch: preds {p.shape} vs targets {t.shape}")
    return p, t


def nrmse_hourly(preds, targets) -> float:
    """sqrt(mean((y - yhat)^2)) / mean(y) over all (system, step) cells."""
    p, t = _pair(preds, targets)
    mean = t.mean()
    if mean == 0.0:
        raise MetricError("hourly NRMSE undefined: target mean is zero")
    return float(np.sqrt(np.mean((t - p) ** 2)) / mean)


def nrmse_stock_annual(preds, targets) -> float:
    """|sum(yhat) - sum(y)| / sum(y): the normalized mean bias error."""
    p, t = _pair(preds, targets)
    total = t.sum()
    if total <= 0.0:
        raise MetricError("stock-annual NRMSE undefined: non-positive target sum")
    return float(abs(p.sum() - total) / total)
