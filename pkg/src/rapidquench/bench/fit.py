"""Exponential scaling fits p ~ 2^(kappa n)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import linregress

from ..errors import QuenchError


@dataclass(frozen=True)
class ScalingFit:
    kappa: float
    intercept: float
    stderr: float
    sizes: np.ndarray
    probs: np.ndarray
    residuals: np.ndarray


def fit_kappa(sizes, probs) -> ScalingFit:
    """Least-squares fit of log2(p) = kappa * n + intercept."""
    n = np.asarray(sizes, dtype=float)
    p = np.asarray(probs, dtype=float)
    if n.shape != p.shape:
        raise QuenchError("dimension-mismatch", "sizes and probs differ in length")
    if len(np.unique(n)) < 3:
        raise QuenchError("insufficient-sizes", "a scaling fit needs at least 3 distinct sizes")
    if np.any(~(p > 0)):
        raise QuenchError("nonpositive-probability", "all probabilities must be > 0")
    y = np.log2(p)
    fit = linregress(n, y)
    resid = y - (fit.slope * n + fit.intercept)
    return ScalingFit(float(fit.slope), float(fit.intercept), float(fit.stderr), n, p, resid)
