"""Analytic score models for the discrete VP diffusion.

Under the forward marginal z^t = sqrt(abar) z^0 + sqrt(1-abar) eps, a
Gaussian (or diagonal-covariance Gaussian mixture) prior stays Gaussian
(mixture) with component means sqrt(abar)*mu and variances
abar*var + (1-abar). Scores, log-densities and Hessian-vector products
are therefore available in closed form at every t, which is what makes
the whole sampler verifiable against finite differences.
"""

from typing import Protocol, runtime_checkable

import numpy as np

from . import _kernels
from .schedule import DiffusionSchedule

__all__ = [
    "ScoreModel",
    "GaussianScore",
    "GmmScore",
    "score_jacobian_vp",
    "fd_probe_step",
]


@runtime_checkable
class ScoreModel(Protocol):
    """Pluggable score function s(z, t) with optional analytic Jacobian."""

    dim: int
    prior_kind: str
    has_analytic_jacobian: bool

    def score(self, z: np.ndarray, t: int, s: DiffusionSchedule) -> np.ndarray: ...

    def logpdf(self, z: np.ndarray, t: int, s: DiffusionSchedule) -> float: ...

    def jacobian_vp(
        self, z: np.ndarray, t: int, s: DiffusionSchedule, v: np.ndarray
    ) -> np.ndarray: ...

    def prior_components(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]: ...


def _check_z(z, dim):
    z = np.ascontiguousarray(z, dtype=float)
    if z.shape != (dim,):
        raise ValueError(f"latent must have shape ({dim},), got {z.shape}")
    if not np.isfinite(z).all():
        raise ValueError("latent contains non-finite values")
    return z


class GaussianScore:
    """Score of a diagonal Gaussian prior N(mean, diag(var))."""

    prior_kind = "gaussian"
    has_analytic_jacobian = True

    def __init__(self, mean, var):
        self.mean = np.ascontiguousarray(mean, dtype=float).ravel()
        self.var = np.ascontiguousarray(var, dtype=float).ravel()
        if self.mean.shape != self.var.shape:
            raise ValueError("mean and var must have matching shapes")
        if np.any(self.var <= 0) or not np.isfinite(self.var).all():
            raise ValueError("variances must be finite and positive")
        self.dim = self.mean.size

    def _diffused(self, t, s):
        s.check_step(t)
        ab = s.alpha_bar[t]
        return np.sqrt(ab) * self.mean, ab * self.var + (1.0 - ab)

    def score(self, z, t, s):
        z = _check_z(z, self.dim)
        mu_t, var_t = self._diffused(t, s)
        return -(z - mu_t) / var_t

    def logpdf(self, z, t, s):
        z = _check_z(z, self.dim)
        mu_t, var_t = self._diffused(t, s)
        logp, _ = _kernels.gaussian_logpdf_score(z, mu_t, var_t)
        return float(logp)

    def jacobian_vp(self, z, t, s, v):
        # Score is linear; the Jacobian is the constant -diag(1/var_t).
        _check_z(z, self.dim)
        mu_t, var_t = self._diffused(t, s)
        return -np.asarray(v, dtype=float) / var_t

    def prior_components(self):
        return np.zeros(1), self.mean[None, :].copy(), self.var[None, :].copy()


class GmmScore:
    """Score of a Gaussian mixture prior with diagonal component covariances."""

    prior_kind = "gmm"
    has_analytic_jacobian = True

    def __init__(self, weights, means, variances):
        self.weights = np.ascontiguousarray(weights, dtype=float).ravel()
        self.means = np.ascontiguousarray(means, dtype=float)
        self.variances = np.ascontiguousarray(variances, dtype=float)
        if self.means.ndim != 2:
            raise ValueError("means must be a (K, dim) array")
        if self.variances.shape != self.means.shape:
            raise ValueError("variances must match the shape of means")
        K = self.means.shape[0]
        if self.weights.shape != (K,):
            raise ValueError("weights must have one entry per component")
        if np.any(self.weights <= 0):
            raise ValueError("component weights must be positive")
        if abs(self.weights.sum() - 1.0) > 1e-9:
            raise ValueError("component weights must sum to 1")
        if np.any(self.variances <= 0) or not np.isfinite(self.variances).all():
            raise ValueError("component variances must be finite and positive")
        self.dim = self.means.shape[1]
        self._logw = np.log(self.weights)

    def _diffused(self, t, s):
        s.check_step(t)
        ab = s.alpha_bar[t]
        mus = np.ascontiguousarray(np.sqrt(ab) * self.means)
        variances = np.ascontiguousarray(ab * self.variances + (1.0 - ab))
        return mus, variances

    def score(self, z, t, s):
        z = _check_z(z, self.dim)
        mus, variances = self._diffused(t, s)
        _, score = _kernels.gmm_logpdf_score(z, mus, variances, self._logw)
        return score

    def logpdf(self, z, t, s):
        z = _check_z(z, self.dim)
        mus, variances = self._diffused(t, s)
        logp, _ = _kernels.gmm_logpdf_score(z, mus, variances, self._logw)
        return float(logp)

    def jacobian_vp(self, z, t, s, v):
        z = _check_z(z, self.dim)
        v = np.ascontiguousarray(v, dtype=float)
        mus, variances = self._diffused(t, s)
        return _kernels.gmm_hessian_vp(z, mus, variances, self._logw, v)

    def prior_components(self):
        return np.log(self.weights), self.means.copy(), self.variances.copy()


def fd_probe_step(z: np.ndarray) -> float:
    """Central-difference step h = 1e-4 * max(1, ||z||_inf)."""
    return 1e-4 * max(1.0, float(np.max(np.abs(z))))


def score_jacobian_vp(
    model: ScoreModel,
    z: np.ndarray,
    t: int,
    s: DiffusionSchedule,
    v: np.ndarray,
) -> np.ndarray:
    """(d score / d z) @ v, analytic when the model provides it.

    Falls back to a directional central difference of the score along
    v / ||v|| with the shared probe step.
    """
    v = np.asarray(v, dtype=float)
    norm = float(np.linalg.norm(v))
    if norm == 0.0:
        return np.zeros_like(v)
    if getattr(model, "has_analytic_jacobian", False):
        return model.jacobian_vp(z, t, s, v)
    h = fd_probe_step(np.asarray(z, dtype=float))
    if not np.isfinite(h) or h <= 0.0:
        raise FloatingPointError("finite-difference step underflowed")
    u = v / norm
    plus = model.score(z + h * u, t, s)
    minus = model.score(z - h * u, t, s)
    return norm * (plus - minus) / (2.0 * h)
