"""Greedy 1:1 caliper matching on the logit propensity scale."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .propensity import PropensityScores, logit

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MatchConfig:
    caliper: float = 0.2
    replacement: bool = False
    seed: int = 0

    def __post_init__(self):
        if not self.caliper > 0:
            raise ValueError("caliper multiplier must be positive")


@dataclass(frozen=True)
class MatchedSet:
    treated: np.ndarray
    control: np.ndarray
    caliper_width: float
    gaps: np.ndarray

    @property
    def pairs(self) -> list:
        return list(zip(self.treated.tolist(), self.control.tolist()))

    @property
    def matched_ids(self) -> np.ndarray:
        return np.unique(np.concatenate([self.treated, self.control]))

    def __len__(self):
        return len(self.treated)


def matched_sample_size(matched: MatchedSet) -> int:
    """Individuals in the matched sample (treated plus controls)."""
    return 2 * len(matched)


def caliper_width(logits, multiplier: float) -> float:
    logits = np.asarray(logits, dtype=float)
    sd = float(np.std(logits, ddof=1)) if len(logits) > 1 else 0.0
    return multiplier * sd


def _processing_order(scores, ids):
    # descending score, then ascending id
    return np.lexsort((ids, -scores))


def caliper_match(scores: PropensityScores, Z, config: MatchConfig = MatchConfig(),
                  rng: np.random.Generator | None = None) -> MatchedSet:
    """Match each treated unit to its nearest available control within the caliper.

    Treated units are visited in descending score order; ties in distance go
    to the lower control id. ``rng`` is accepted for interface symmetry; the
    procedure itself is deterministic.
    """
    Z = np.asarray(Z)
    ids = np.asarray(scores.ids)
    if len(Z) != len(ids):
        raise ValueError("Z must align with the scores")
    lg = logit(scores)
    width = caliper_width(lg, config.caliper)
    t_mask = Z == 1
    if not t_mask.any() or t_mask.all():
        raise ValueError("both treated and control units are required for matching")
    if width == 0:
        logger.warning("all logits equal; caliper width is 0 and only exact ties match")

    c_idx = np.flatnonzero(~t_mask)
    # controls sorted by (logit, id): equal-logit runs are in id order
    c_idx = c_idx[np.lexsort((ids[c_idx], lg[c_idx]))]
    c_lg = lg[c_idx]
    c_ids = ids[c_idx]
    nc = len(c_idx)
    # union-find style pointers to the nearest available control at or right/left of a slot
    right = np.arange(nc + 1)
    left = np.arange(nc + 1)  # slot i+1 stands for control i; slot 0 is the sentinel

    def find(ptr, i):
        root = i
        while ptr[root] != root:
            root = ptr[root]
        while ptr[i] != root:
            ptr[i], i = root, ptr[i]
        return root

    t_idx = np.flatnonzero(t_mask)
    treated, control, gaps = [], [], []
    for i in t_idx[_processing_order(scores.scores[t_idx], ids[t_idx])]:
        x = lg[i]
        pos = int(np.searchsorted(c_lg, x, side="left"))
        best = None
        r = find(right, pos)
        if r < nc:
            best = (c_lg[r] - x, c_ids[r], r)
        lslot = find(left, pos)
        if lslot > 0:
            j = lslot - 1
            # lowest-id available control sharing that logit
            j = find(right, int(np.searchsorted(c_lg, c_lg[j], side="left")))
            cand = (x - c_lg[j], c_ids[j], j)
            if best is None or cand[:2] < best[:2]:
                best = cand
        if best is None:
            break
        dist, _, j = best
        if dist <= width:
            treated.append(ids[i])
            control.append(c_ids[j])
            gaps.append(dist)
            if not config.replacement:
                right[j] = j + 1
                left[j + 1] = j
    return MatchedSet(np.asarray(treated, dtype=np.int64), np.asarray(control, dtype=np.int64),
                      width, np.asarray(gaps, dtype=float))


def audit(matched: MatchedSet, scores: PropensityScores, Z, replacement: bool = False) -> list:
    """Replay the greedy procedure and return a list of violations (empty if clean)."""
    problems = []
    lg = dict(zip(scores.ids.tolist(), logit(scores).tolist()))
    z = dict(zip(scores.ids.tolist(), np.asarray(Z).tolist()))
    for (t, c) in matched.pairs:
        if z[t] != 1 or z[c] != 0:
            problems.append(f"pair ({t}, {c}) has wrong treatment labels")
        if abs(lg[t] - lg[c]) > matched.caliper_width:
            problems.append(f"pair ({t}, {c}) outside caliper")
    if not replacement:
        used = np.concatenate([matched.treated, matched.control])
        if len(np.unique(used)) != len(used):
            problems.append("id reused without replacement")

    # greedy replay: at each treated unit in processing order, no free control is strictly closer
    sc = scores.as_dict()
    treated_ids = [i for i in scores.ids.tolist() if z[i] == 1]
    treated_ids.sort(key=lambda i: (-sc[i], i))
    free = {i for i in scores.ids.tolist() if z[i] == 0}
    partner = dict(matched.pairs)
    for t in treated_ids:
        best = min((abs(lg[t] - lg[c]), c) for c in free) if free else None
        if t in partner:
            c = partner[t]
            if c not in free and not replacement:
                problems.append(f"control {c} was not free when treated {t} was processed")
            elif best is not None and best[0] < abs(lg[t] - lg[c]):
                problems.append(f"treated {t}: control {best[1]} was strictly closer")
            if not replacement:
                free.discard(c)
        elif best is not None and best[0] <= matched.caliper_width:
            problems.append(f"treated {t} left unmatched although control {best[1]} was in caliper")
    return problems
