"""Synthetic confounded survival benchmark.

Six correlated Gaussian covariates drive both treatment assignment and a
Weibull event time; the event indicator is an independent coin flip and
observed event times are shrunk by a uniform(0.8, 1) factor.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .data import ConfigError, Dataset

N_COVARIATES = 6

# two exchangeable blocks of three covariates, correlation 0.5 within a block
COVARIANCE = np.kron(np.eye(2), np.full((3, 3), 0.5) + 0.5 * np.eye(3))
COVARIANCE.setflags(write=False)


@dataclass(frozen=True)
class SynthConfig:
    n: int = 1000
    lam: float = 2.0
    v: float = 2.0
    gamma: float = -1.0
    seed: int = 0

    def validate(self) -> None:
        if int(self.n) != self.n or self.n < 1:
            raise ConfigError(f"n must be a positive integer, got {self.n!r}")
        if not self.lam > 0:
            raise ConfigError(f"Weibull scale must be positive, got {self.lam!r}")
        if not self.v > 0:
            raise ConfigError(f"Weibull shape must be positive, got {self.v!r}")

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        d = dict(d)
        d.pop("source", None)
        if "lambda" in d:
            d["lam"] = d.pop("lambda")
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown synthetic config keys: {sorted(unknown)}")
        cfg = cls(**d)
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        return d


def cholesky_factor() -> np.ndarray:
    return np.linalg.cholesky(COVARIANCE)


def gen_covariates(n: int, rng: np.random.Generator) -> np.ndarray:
    if n < 1:
        raise ConfigError("n must be >= 1")
    return rng.standard_normal((n, N_COVARIATES)) @ cholesky_factor().T


def treatment_probability(X: np.ndarray) -> np.ndarray:
    X = np.atleast_2d(X)
    return 1.0 / (1.0 + np.exp(-X.sum(axis=1) / 3.0))


def assign_treatment(X: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    p = treatment_probability(X)
    return (rng.random(len(p)) < p).astype(np.int64)


def linear_predictor(X, Z, gamma: float) -> np.ndarray:
    return -np.atleast_2d(X).sum(axis=1) / 3.0 + gamma * np.asarray(Z, dtype=float)


def weibull_time(u, X, Z, lam: float, v: float, gamma: float) -> np.ndarray:
    """Inverse-CDF Weibull time for given uniform draws ``u``."""
    if not lam > 0 or not v > 0:
        raise ConfigError("Weibull scale and shape must be positive")
    u = np.asarray(u, dtype=float)
    return (-np.log(u) / (lam * np.exp(linear_predictor(X, Z, gamma)))) ** (1.0 / v)


def gen_survival(X, Z, config: SynthConfig, rng: np.random.Generator):
    """Return ``(observed_time, delta, true_time)``.

    ``delta`` is drawn independently of the time; event times are observed
    with multiplicative noise in [0.8, 1], censored times exactly.
    """
    config.validate()
    n = len(Z)
    u = 1.0 - rng.random(n)  # (0, 1]
    t = weibull_time(u, X, Z, config.lam, config.v, config.gamma)
    delta = (rng.random(n) < 0.5).astype(np.int64)
    eps = rng.uniform(0.8, 1.0, n)
    observed = np.where(delta == 1, eps * t, t)
    return observed, delta, t


def generate(config: SynthConfig, rng: np.random.Generator | None = None) -> Dataset:
    config.validate()
    if rng is None:
        rng = np.random.default_rng(config.seed)
    X = gen_covariates(config.n, rng)
    Z = assign_treatment(X, rng)
    observed, delta, _ = gen_survival(X, Z, config, rng)
    return Dataset(np.arange(config.n), X, observed, delta, Z)
