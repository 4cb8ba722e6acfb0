"""Randomness used by the forecasting stages.

Coefficient draws come from a multivariate normal centered on the fit via
a symmetric eigenvalue square root (semi-definite covariances are
eigen-clipped at zero). Count noise is gamma-Poisson mixed negative
binomial; an infinite theta means no observation noise at all (the
rounded mean), which the degenerate test paths rely on.
"""

from __future__ import annotations

import hashlib
import math

import numpy as np

from ..errors import ValidationError
from .negbin import FittedModel


def derive_seed(*parts) -> int:
    """Stable 64-bit seed from string parts; independent of scheduling."""
    text = ":".join(str(p) for p in parts)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def sample_coefficients(model: FittedModel, n: int, seed: int) -> np.ndarray:
    """n draws from MVN(beta_hat, V), shape (n, p); deterministic per seed."""
    if n <= 0:
        raise ValidationError("need a positive number of draws")
    V = model.covariance
    eigvals, eigvecs = np.linalg.eigh(V)
    root = eigvecs * np.sqrt(np.clip(eigvals, 0.0, None))[None, :]
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n, V.shape[0]))
    return model.coefficients[None, :] + z @ root.T


def sample_negative_binomial(mean, theta: float, seed_or_rng) -> np.ndarray:
    """Negative-binomial draws with E = mean, Var = mean + mean^2/theta.

    Accepts a scalar or array mean; theta = inf returns the rounded mean
    with no noise. Pass either an integer seed or a Generator.
    """
    rng = (
        seed_or_rng
        if isinstance(seed_or_rng, np.random.Generator)
        else np.random.default_rng(seed_or_rng)
    )
    mu = np.asarray(mean, dtype=float)
    if np.any(mu <= 0):
        raise ValidationError("negative-binomial mean must be positive")
    if not theta > 0:
        raise ValidationError("theta must be positive")
    if math.isinf(theta):
        return np.rint(mu).astype(np.int64)
    lam = rng.gamma(shape=theta, scale=mu / theta)
    return rng.poisson(lam).astype(np.int64)
