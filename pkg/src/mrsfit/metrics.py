"""Quantification error metrics: MAE, optimal scaling, MOSAE, regression stats.

MAE averages absolute amplitude errors over the metabolites, excluding
the macromolecule entry.  The optimal scale w_opt minimizes the L1 error
sum_m |w * pred_m - true_m| over the same set; MOSAE is the optimally
rescaled absolute error divided by the full entry count M (a config flag
switches to M-1 for sensitivity checks).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError


def _included(pred_amps, true_amps, mm_index):
    pred = np.asarray(pred_amps, dtype=np.float64)
    true = np.asarray(true_amps, dtype=np.float64)
    if pred.shape != true.shape or pred.ndim != 1:
        raise ValidationError("amplitude vectors must be 1-D and of equal length")
    m = pred.size
    if mm_index is not None and not (0 <= mm_index < m):
        raise ValidationError(f"mm_index {mm_index} out of range for {m} metabolites")
    keep = np.ones(m, dtype=bool)
    if mm_index is not None:
        keep[mm_index] = False
    return pred[keep], true[keep], m


def mae(pred_amps, true_amps, mm_index) -> float:
    """Mean absolute amplitude error over metabolites (MM excluded)."""
    pred, true, _ = _included(pred_amps, true_amps, mm_index)
    return float(np.mean(np.abs(pred - true)))


def l1_objective(w: float, pred, true) -> float:
    return float(np.sum(np.abs(w * np.asarray(pred) - np.asarray(true))))


def optimal_scale(pred_amps, true_amps, mm_index) -> float:
    """L1-optimal global scale: weighted median of true/pred ratios.

    Entries with zero prediction contribute constants and are excluded
    from the median; ties resolve to the lower median.  Raises if every
    included prediction is zero.
    """
    pred, true, _ = _included(pred_amps, true_amps, mm_index)
    positive = pred > 0
    if not np.any(positive):
        raise ValidationError("optimal scale undefined: all included predictions are zero")
    ratios = true[positive] / pred[positive]
    weights = pred[positive]
    order = np.argsort(ratios, kind="stable")
    ratios, weights = ratios[order], weights[order]
    cum = np.cumsum(weights)
    half = 0.5 * cum[-1]
    idx = int(np.searchsorted(cum, half))  # first index with cum >= half (lower median)
    return float(max(ratios[idx], 0.0))


def mosae(pred_amps, true_amps, mm_index, normalization: str = "M") -> float:
    """Mean optimally scaled absolute error.

    normalization="M" divides the (M-1)-term sum by the full entry count M;
    "M-1" divides by the number of included metabolites instead.
    """
    pred, true, m = _included(pred_amps, true_amps, mm_index)
    w = optimal_scale(pred_amps, true_amps, mm_index)
    total = float(np.sum(np.abs(w * pred - true)))
    if normalization == "M":
        return total / m
    if normalization == "M-1":
        return total / pred.size
    raise ValidationError(f"unknown normalization {normalization!r}")


@dataclass(frozen=True)
class RegressionStats:
    alpha: float   # slope
    beta: float    # intercept
    r2: float
    rmse: float    # prediction-vs-truth root mean square error


def regression_stats(pairs) -> RegressionStats:
    """OLS of truth on prediction (true = alpha * pred + beta) plus prediction RMSE."""
    arr = np.asarray(pairs, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] < 2:
        raise ValidationError("regression needs >= 2 (pred, true) pairs")
    pred, true = arr[:, 0], arr[:, 1]
    var = np.var(pred)
    if var == 0:
        raise ValidationError("slope undefined: predictions have zero variance")
    alpha = float(np.cov(pred, true, bias=True)[0, 1] / var)
    beta = float(np.mean(true) - alpha * np.mean(pred))
    fit = alpha * pred + beta
    ss_res = float(np.sum((true - fit) ** 2))
    ss_tot = float(np.sum((true - np.mean(true)) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    rmse = float(np.sqrt(np.mean((pred - true) ** 2)))
    return RegressionStats(alpha=alpha, beta=beta, r2=r2, rmse=rmse)


@dataclass(frozen=True)
class MetricSummary:
    mean: float
    standard_error: float
    n: int


def aggregate(values) -> MetricSummary:
    """Mean and standard error (sample std / sqrt(n); zero for n = 1)."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        raise ValidationError("cannot aggregate an empty list")
    se = 0.0 if arr.size == 1 else float(np.std(arr, ddof=1) / np.sqrt(arr.size))
    return MetricSummary(mean=float(np.mean(arr)), standard_error=se, n=int(arr.size))
