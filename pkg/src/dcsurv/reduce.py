"""Per-party PCA reducers and intermediate representations.

A fitted :class:`ReducerModel` is private to its party. Only the matrices it
produces (for local rows and for the anchor slice) are ever shared.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

logger = logging.getLogger(__name__)


class DimensionError(ValueError):
    pass


class PrivacyError(ValueError):
    """A shared representation would not reduce the party's dimension."""


@dataclass(frozen=True)
class ReducerModel:
    col_means: np.ndarray
    col_scales: np.ndarray
    components: np.ndarray
    explained_variance_ratio: np.ndarray = field(default_factory=lambda: np.empty(0))

    @property
    def target_dim(self) -> int:
        return self.components.shape[1]

    @property
    def m_l(self) -> int:
        return self.components.shape[0]

    def __reduce__(self):
        raise TypeError("reducer models stay on the user side and cannot be serialized")


@dataclass(frozen=True)
class IntermediateRep:
    party: tuple
    matrix: np.ndarray
    kind: str
    ids: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in ("data", "anchor"):
            raise ValueError(f"unknown representation kind {self.kind!r}")
        if self.kind == "data" and (self.ids is None or len(self.ids) != self.matrix.shape[0]):
            raise ValueError("data representations need one id per row")


def default_dim(m_l: int) -> int:
    return max(1, math.ceil(m_l / 2))


def check_private_dim(target_dim: int, m_l: int) -> None:
    if target_dim >= m_l:
        raise PrivacyError(
            f"reduced dimension {target_dim} must be strictly less than the local "
            f"covariate dimension {m_l}")


def canonical_signs(components: np.ndarray) -> np.ndarray:
    """Flip each column so that its largest-magnitude entry is positive."""
    components = components.copy()
    idx = np.argmax(np.abs(components), axis=0)
    signs = np.sign(components[idx, np.arange(components.shape[1])])
    signs[signs == 0] = 1.0
    return components * signs


def fit_reducer(X, target_dim: int, standardize: bool = False) -> ReducerModel:
    """Fit PCA on a party's local block.

    ``X`` may be a raw matrix or anything with an ``X`` attribute (a
    :class:`~dcsurv.data.PartyBlock`).
    """
    X = np.asarray(getattr(X, "X", X), dtype=float)
    n, m_l = X.shape
    if not 1 <= target_dim <= m_l:
        raise DimensionError(f"target dimension {target_dim} outside [1, {m_l}]")
    if n < 2:
        raise DimensionError("need at least two rows to fit a reducer")
    means = X.mean(axis=0)
    if standardize:
        scales = X.std(axis=0, ddof=1)
        flat = scales == 0
        if flat.any():
            logger.warning("zero-variance column(s) %s; scale forced to 1",
                           np.flatnonzero(flat).tolist())
            scales[flat] = 1.0
    else:
        scales = np.ones(m_l)
    centered = (X - means) / scales
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    comps = canonical_signs(vt[:target_dim].T)
    total = float(np.sum(s ** 2))
    evr = (s[:target_dim] ** 2) / total if total > 0 else np.zeros(target_dim)
    return ReducerModel(means, scales, comps, evr)


def apply_reducer(model: ReducerModel, rows) -> np.ndarray:
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    if rows.shape[1] != model.m_l:
        raise DimensionError(f"expected {model.m_l} columns, got {rows.shape[1]}")
    return ((rows - model.col_means) / model.col_scales) @ model.components


def encode_party(block, anchor_slice, target_dim: int, standardize: bool = False,
                 protocol: bool = False):
    """User-side step: fit the private reducer and return the two shareable reps."""
    if protocol:
        check_private_dim(target_dim, block.m_l)
    model = fit_reducer(block.X, target_dim, standardize)
    data = IntermediateRep(block.party, apply_reducer(model, block.X), "data", block.ids)
    anc = IntermediateRep(block.party, apply_reducer(model, anchor_slice), "anchor")
    return data, anc
