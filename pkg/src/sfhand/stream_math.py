"""Small statistics helpers for the streaming benchmark."""

from __future__ import annotations

import math

import numpy as np


def slope_statistics(y: np.ndarray) -> tuple[float, float]:
    """OLS slope of y against its index and a two-sided p-value for slope=0.

    Uses the normal approximation of the t statistic, fine at benchmark
    sample sizes.
    """
    y = np.asarray(y, dtype=np.float64)
    n = y.size
    if n < 3:
        return 0.0, 1.0
    x = np.arange(n, dtype=np.float64)
    xm, ym = x.mean(), y.mean()
    sxx = ((x - xm) ** 2).sum()
    slope = float(((x - xm) * (y - ym)).sum() / sxx)
    resid = y - (ym + slope * (x - xm))
    dof = n - 2
    s2 = float((resid**2).sum() / dof)
    se = math.sqrt(s2 / sxx) if sxx > 0 else 0.0
    if se == 0.0:
        return slope, 1.0 if slope == 0.0 else 0.0
    t = slope / se
    p = math.erfc(abs(t) / math.sqrt(2.0))
    return slope, p
