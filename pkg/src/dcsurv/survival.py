"""Kaplan-Meier product-limit curves."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class EmptyArmError(ValueError):
    pass


@dataclass(frozen=True)
class SurvivalCurve:
    """Right-continuous step function; ``survival[i]`` holds on ``[times[i], times[i+1])``."""

    times: np.ndarray
    survival: np.ndarray
    at_risk: np.ndarray
    events: np.ndarray
    group: str = ""

    def __call__(self, t):
        return eval_step(self, t)


def kaplan_meier(times, events, group: str = "") -> SurvivalCurve:
    """Product-limit estimate over the distinct event times.

    At tied times events precede censorings, so units censored at ``t``
    still count as at risk for events at ``t``.
    """
    times = np.asarray(times, dtype=float)
    events = np.asarray(events, dtype=np.int64)
    if times.size == 0:
        raise EmptyArmError("cannot estimate a survival curve from zero units")
    if len(times) != len(events):
        raise ValueError("times and events differ in length")
    if np.any(times < 0):
        raise ValueError("times must be nonnegative")
    grid = np.unique(times[events == 1])
    if grid.size == 0:
        empty = np.empty(0)
        return SurvivalCurve(empty, empty, np.empty(0, np.int64), np.empty(0, np.int64), group)
    sorted_t = np.sort(times)
    at_risk = len(times) - np.searchsorted(sorted_t, grid, side="left")
    ev_sorted = np.sort(times[events == 1])
    d = np.searchsorted(ev_sorted, grid, side="right") - np.searchsorted(ev_sorted, grid, side="left")
    surv = np.cumprod(1.0 - d / at_risk)
    return SurvivalCurve(grid, surv, at_risk.astype(np.int64), d.astype(np.int64), group)


def eval_step(curve: SurvivalCurve, t):
    """Evaluate the curve at ``t`` (scalar or array); 1 before the first event time."""
    t_arr = np.asarray(t, dtype=float)
    idx = np.searchsorted(curve.times, t_arr, side="right")
    padded = np.concatenate([[1.0], curve.survival])
    out = padded[idx]
    return float(out) if np.ndim(t) == 0 else out


def km_by_group(matched_ids, outcomes):
    """Treated and control curves on the matched sample.

    ``outcomes`` is any object with ``ids``, ``t``, ``delta``, ``Z`` arrays.
    """
    sub = outcomes.take(np.sort(np.asarray(matched_ids)))
    curves = []
    for z, name in ((1, "treated"), (0, "control")):
        mask = sub.Z == z
        if not mask.any():
            raise EmptyArmError(f"{name} arm is empty after matching")
        curves.append(kaplan_meier(sub.t[mask], sub.delta[mask], name))
    return tuple(curves)
