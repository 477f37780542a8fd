"""Logistic-regression propensity scores fitted by damped Newton (IRLS)."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

logger = logging.getLogger(__name__)

CLAMP = 1e-12


class DegenerateLabelError(ValueError):
    pass


@dataclass(frozen=True)
class LogisticModel:
    intercept: float
    weights: np.ndarray
    converged: bool
    iterations: int
    final_grad_norm: float

    def linear_predictor(self, features) -> np.ndarray:
        F = _design(features, len(self.weights))
        return self.intercept + F @ self.weights


@dataclass(frozen=True)
class PropensityScores:
    ids: np.ndarray
    scores: np.ndarray
    source: str = ""

    def __post_init__(self):
        if len(self.ids) != len(self.scores):
            raise ValueError("one score per id required")

    def __len__(self):
        return len(self.ids)

    def as_dict(self) -> dict:
        return dict(zip(self.ids.tolist(), self.scores.tolist()))


def _design(features, p: int | None = None) -> np.ndarray:
    F = np.asarray(features, dtype=float)
    if F.ndim == 1:
        F = F.reshape(-1, 1) if p != 0 else F.reshape(-1, 0)
    if p is not None and F.shape[1] != p:
        raise ValueError(f"expected {p} feature columns, got {F.shape[1]}")
    return F


def sigmoid(x):
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def log_likelihood(beta, A, z) -> float:
    eta = A @ beta
    # log(1 + e^eta) computed stably
    return float(np.sum(z * eta - np.logaddexp(0.0, eta)))


def gradient(beta, A, z) -> np.ndarray:
    return A.T @ (z - sigmoid(A @ beta))


def fit_logistic(features, Z, tol: float = 1e-8, max_iter: int = 100,
                 ridge: float = 1e-8) -> LogisticModel:
    """Maximum-likelihood logistic regression with an intercept.

    ``ridge`` is added to the Hessian diagonal of the slope terms only; it
    conditions the Newton system without changing the fixed point.
    Convergence: max-abs gradient of the log-likelihood <= ``tol``.
    """
    z = np.asarray(Z, dtype=float)
    F = _design(features)
    if F.shape[0] != len(z):
        raise ValueError("features and Z differ in length")
    if len(z) < 2:
        raise ValueError("need at least two samples")
    if z.min() == z.max():
        raise DegenerateLabelError("treatment vector contains a single class")
    A = np.hstack([np.ones((len(z), 1)), F])
    p = A.shape[1]
    beta = np.zeros(p)
    beta[0] = np.log(z.mean() / (1 - z.mean()))
    reg = np.full(p, ridge)
    reg[0] = 0.0

    ll = log_likelihood(beta, A, z)
    g = gradient(beta, A, z)
    it = 0
    while np.max(np.abs(g)) > tol and it < max_iter:
        it += 1
        mu = sigmoid(A @ beta)
        w = mu * (1 - mu)
        H = (A * w[:, None]).T @ A + np.diag(reg)
        try:
            step = np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(H, g, rcond=None)[0]
        t = 1.0
        for _ in range(30):
            cand = beta + t * step
            ll_new = log_likelihood(cand, A, z)
            if ll_new >= ll - 1e-12 * abs(ll):
                break
            t *= 0.5
        beta, ll = cand, ll_new
        g = gradient(beta, A, z)

    gnorm = float(np.max(np.abs(g)))
    converged = gnorm <= tol
    if not converged:
        logger.warning("logistic fit stopped after %d iterations (max |grad| %.3g)", it, gnorm)
    if np.max(np.abs(A @ beta)) > 30:
        logger.warning("possible quasi-separation: |linear predictor| > 30; scores clamped")
    return LogisticModel(float(beta[0]), beta[1:].copy(), bool(converged), it, gnorm)


def score(model: LogisticModel, features, ids, source: str = "") -> PropensityScores:
    p = sigmoid(model.linear_predictor(features))
    return PropensityScores(np.asarray(ids, dtype=np.int64), np.clip(p, CLAMP, 1 - CLAMP), source)


def logit(scores) -> np.ndarray:
    p = np.asarray(getattr(scores, "scores", scores), dtype=float)
    if np.any((p <= 0) | (p >= 1)):
        raise ValueError("logit is only defined on (0, 1)")
    return np.log(p) - np.log1p(-p)


def estimate(features, Z, ids, source: str = "") -> PropensityScores:
    """Fit and score in one go."""
    return score(fit_logistic(features, Z), features, ids, source)
