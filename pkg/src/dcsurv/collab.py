"""Analyst-side fusion of intermediate representations.

The concatenated anchor representations ``[A_1, ..., A_c]`` are compressed by
a truncated SVD to ``U_1``; each institution then gets the least-squares map
``G_k = pinv(A_k) @ U_1`` so that projected anchors agree across
institutions, and its data representation is mapped with the same ``G_k``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data import ValidationError

logger = logging.getLogger(__name__)


def truncated_svd(matrix, rank: int):
    """Best rank-``rank`` factorization ``U @ diag(S) @ V.T``."""
    A = np.atleast_2d(np.asarray(matrix, dtype=float))
    if not 1 <= rank <= min(A.shape):
        raise ValidationError(f"rank {rank} outside [1, {min(A.shape)}] for shape {A.shape}")
    U, S, Vt = np.linalg.svd(A, full_matrices=False)
    return U[:, :rank], S[:rank], Vt[:rank].T


def pseudoinverse(matrix, tol: float | None = None) -> np.ndarray:
    """Moore-Penrose inverse; singular values below ``tol * s_max`` are dropped.

    The default tolerance is ``max(shape) * eps``.
    """
    A = np.atleast_2d(np.asarray(matrix, dtype=float))
    if A.size == 0:
        return np.zeros(A.shape[::-1])
    U, S, Vt = np.linalg.svd(A, full_matrices=False)
    if tol is None:
        tol = max(A.shape) * np.finfo(float).eps
    cutoff = tol * (S[0] if S.size else 0.0)
    inv = np.zeros_like(S)
    keep = S > cutoff
    inv[keep] = 1.0 / S[keep]
    return (Vt.T * inv) @ U.T


def numerical_rank(matrix, tol: float | None = None) -> int:
    S = np.linalg.svd(np.atleast_2d(matrix), compute_uv=False)
    if S.size == 0:
        return 0
    if tol is None:
        tol = max(np.shape(matrix)) * np.finfo(float).eps
    return int(np.sum(S > tol * S[0]))


@dataclass(frozen=True)
class CollabTransform:
    k: int
    G: np.ndarray

    @property
    def target_dim(self) -> int:
        return self.G.shape[1]


@dataclass(frozen=True)
class CollabRepresentation:
    ids: np.ndarray
    X: np.ndarray
    institution_of: np.ndarray

    @property
    def n(self) -> int:
        return self.X.shape[0]


def build_collab_transforms(anchor_reps: Sequence[np.ndarray], target_dim: int,
                            institutions: Sequence[int] | None = None) -> list:
    """Return one :class:`CollabTransform` per institution (ascending ``k``).

    ``anchor_reps[i]`` is institution i's column-concatenated anchor
    representation, shape ``r x m~_k``.
    """
    reps = [np.atleast_2d(np.asarray(a, dtype=float)) for a in anchor_reps]
    if not reps:
        raise ValidationError("no anchor representations supplied")
    r = reps[0].shape[0]
    if any(a.shape[0] != r for a in reps):
        raise ValidationError("anchor representations must share the anchor row count")
    if r < target_dim:
        raise ValidationError(f"anchor has {r} rows, fewer than target dimension {target_dim}")
    stacked = np.hstack(reps)
    if target_dim > stacked.shape[1]:
        raise ValidationError(
            f"target dimension {target_dim} exceeds the {stacked.shape[1]} shared dimensions")
    rank = numerical_rank(stacked)
    if target_dim > rank:
        logger.warning("target dimension %d exceeds anchor rank %d", target_dim, rank)
    U1, _, _ = truncated_svd(stacked, target_dim)
    if institutions is None:
        institutions = range(1, len(reps) + 1)
    return [CollabTransform(k, pseudoinverse(a) @ U1) for k, a in zip(institutions, reps)]


def build_collab_representation(data_reps: Sequence, transforms: Sequence[CollabTransform]
                                ) -> CollabRepresentation:
    """Map each institution's data with its ``G_k`` and stack in institution order.

    ``data_reps`` holds ``(ids, matrix)`` pairs aligned with ``transforms``.
    """
    if len(data_reps) != len(transforms):
        raise ValidationError("one data representation per transform required")
    ids, blocks, inst = [], [], []
    for (rid, mat), tr in sorted(zip(data_reps, transforms), key=lambda p: p[1].k):
        mat = np.atleast_2d(np.asarray(mat, dtype=float))
        if mat.shape[1] != tr.G.shape[0]:
            raise ValidationError(
                f"institution {tr.k}: representation has {mat.shape[1]} columns, "
                f"transform expects {tr.G.shape[0]}")
        ids.append(np.asarray(rid, dtype=np.int64))
        blocks.append(mat @ tr.G)
        inst.append(np.full(mat.shape[0], tr.k))
    ids = np.concatenate(ids)
    if len(np.unique(ids)) != len(ids):
        raise ValidationError("sample id collision across institutions")
    return CollabRepresentation(ids, np.vstack(blocks), np.concatenate(inst))


def anchor_alignment_error(anchor_reps: Sequence[np.ndarray],
                           transforms: Sequence[CollabTransform]) -> float:
    """Largest pairwise relative disagreement between projected anchors."""
    proj = [np.asarray(a) @ t.G for a, t in zip(anchor_reps, transforms)]
    U1 = truncated_svd(np.hstack(anchor_reps), transforms[0].target_dim)[0]
    scale = np.linalg.norm(U1)
    worst = 0.0
    for i in range(len(proj)):
        for j in range(i + 1, len(proj)):
            worst = max(worst, float(np.linalg.norm(proj[i] - proj[j]) / scale))
    return worst
