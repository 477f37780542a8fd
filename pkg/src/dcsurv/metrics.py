"""Evaluation measures: score inconsistency, covariate balance and curve gap."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .survival import eval_step

logger = logging.getLogger(__name__)


class AlignmentError(KeyError):
    pass


@dataclass(frozen=True)
class BalanceReport:
    smd: np.ndarray
    masmd: float
    n_treated: int
    n_control: int


def inconsistency(scores, ref_scores) -> float:
    """RMS difference between two score sets over the ids of ``scores``."""
    ref = ref_scores.as_dict()
    try:
        r = np.array([ref[i] for i in scores.ids.tolist()])
    except KeyError as exc:
        raise AlignmentError(f"reference scores lack id {exc.args[0]}") from None
    return float(np.sqrt(np.mean((np.asarray(scores.scores) - r) ** 2)))


def smd(values_t, values_c) -> float:
    """Standardized mean difference with the pooled-variance denominator."""
    a = np.asarray(values_t, dtype=float)
    b = np.asarray(values_c, dtype=float)
    if len(a) < 2 or len(b) < 2:
        raise ValueError("each group needs at least two values")
    diff = a.mean() - b.mean()
    pooled = math.sqrt((a.var(ddof=1) + b.var(ddof=1)) / 2.0)
    if pooled == 0:
        if diff == 0:
            return 0.0
        logger.warning("zero variance in both groups with differing means; SMD is infinite")
        return math.copysign(math.inf, diff)
    return float(diff / pooled)


def masmd(X_treated, X_control) -> BalanceReport:
    Xt = np.atleast_2d(X_treated)
    Xc = np.atleast_2d(X_control)
    if len(Xt) == 0 or len(Xc) == 0:
        raise ValueError("both arms must be non-empty")
    d = np.array([smd(Xt[:, j], Xc[:, j]) for j in range(Xt.shape[1])])
    return BalanceReport(d, float(np.max(np.abs(d))), len(Xt), len(Xc))


def balance(dataset, matched) -> BalanceReport:
    """Balance of the original covariates over a matched set."""
    return masmd(dataset.rows(matched.treated), dataset.rows(matched.control))


def gap(curve, ref_curve) -> float:
    """RMS vertical distance on the reference curve's event-time grid."""
    grid = ref_curve.times
    if grid.size == 0:
        logger.warning("reference curve has no event times; gap defined as 0")
        return 0.0
    diff = eval_step(curve, grid) - eval_step(ref_curve, grid)
    return float(np.sqrt(np.mean(diff ** 2)))
