"""Explained-variance (R^2) of an approximated cross-step change."""

from __future__ import annotations

import numpy as np

from .errors import DimensionError, UndefinedStatisticError


def r_squared(true_delta, approx_delta) -> float:
    """``1 - SSE / SST`` over all elements, accumulated in float64."""
    t = np.asarray(true_delta, dtype=np.float64)
    a = np.asarray(approx_delta, dtype=np.float64)
    if t.shape != a.shape:
        raise DimensionError(f"R^2 operands differ in shape: {t.shape} vs {a.shape}")
    sst = float(np.sum((t - t.mean()) ** 2))
    if sst == 0.0:
        raise UndefinedStatisticError("R^2 is undefined for a constant true delta")
    return 1.0 - float(np.sum((t - a) ** 2)) / sst


def r_squared_or_none(true_delta, approx_delta) -> float | None:
    try:
        return r_squared(true_delta, approx_delta)
    except UndefinedStatisticError:
        return None
