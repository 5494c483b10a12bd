"""Ground-truth posteriors for desk-scale validation.

Two independent routes: the conjugate linear-Gaussian formula (dense,
dims <= 64) and brute-force grid Bayes (dims <= 2, any shipped prior).
Dense linear algebra lives here and nowhere else; the main pipeline
stays matrix-free.
"""

from dataclasses import dataclass

import numpy as np

from .operators import LinearOperator, Measurement
from .score import ScoreModel

__all__ = [
    "GaussianPosterior",
    "GridPosterior",
    "dense_matrix",
    "linear_gaussian_posterior",
    "grid_posterior",
]

_MAX_DENSE_DIM = 64


@dataclass(frozen=True)
class GaussianPosterior:
    mean: np.ndarray
    cov: np.ndarray

    def marginal_std(self) -> np.ndarray:
        return np.sqrt(np.diag(self.cov))


@dataclass(frozen=True)
class GridPosterior:
    """Normalized posterior mass on a regular grid."""

    mean: np.ndarray
    mass: np.ndarray
    axes: tuple

    def argmax_point(self) -> np.ndarray:
        idx = np.unravel_index(int(np.argmax(self.mass)), self.mass.shape)
        return np.array([self.axes[d][idx[d]] for d in range(len(self.axes))])


def dense_matrix(A: LinearOperator) -> np.ndarray:
    """Materialize a small operator by probing basis vectors."""
    if A.in_dim > _MAX_DENSE_DIM:
        raise ValueError(f"refusing to densify operator with in_dim {A.in_dim}")
    cols = []
    for j in range(A.in_dim):
        e = np.zeros(A.in_dim)
        e[j] = 1.0
        cols.append(A.apply(e))
    return np.stack(cols, axis=1)


def _as_cov(Sigma0, dim):
    Sigma0 = np.asarray(Sigma0, dtype=float)
    if Sigma0.ndim == 0:
        Sigma0 = np.full(dim, float(Sigma0))
    if Sigma0.ndim == 1:
        if Sigma0.shape != (dim,):
            raise ValueError("diagonal prior covariance has wrong length")
        Sigma0 = np.diag(Sigma0)
    if Sigma0.shape != (dim, dim):
        raise ValueError("prior covariance has wrong shape")
    return Sigma0


def linear_gaussian_posterior(
    mu0, Sigma0, A: LinearOperator, M: Measurement
) -> GaussianPosterior:
    """Conjugate posterior for y = A x + noise with Gaussian prior on x.

    Sigma_p = (Sigma0^-1 + A^T A / sigma^2)^-1,
    mu_p    = Sigma_p (Sigma0^-1 mu0 + A^T y / sigma^2).
    """
    if M.sigma_nu <= 0:
        raise ValueError("analytic posterior requires sigma_nu > 0")
    dim = A.in_dim
    if dim > _MAX_DENSE_DIM:
        raise ValueError(f"dense posterior limited to dims <= {_MAX_DENSE_DIM}")
    mu0 = np.asarray(mu0, dtype=float).ravel()
    if mu0.shape != (dim,):
        raise ValueError("prior mean has wrong length")
    Sigma0 = _as_cov(Sigma0, dim)
    try:
        prior_precision = np.linalg.inv(Sigma0)
    except np.linalg.LinAlgError as exc:
        raise ValueError("prior covariance is singular") from exc

    Amat = dense_matrix(A)
    precision = prior_precision + (Amat.T @ Amat) / M.sigma_nu**2
    cov = np.linalg.inv(precision)
    cov = 0.5 * (cov + cov.T)
    mean = cov @ (prior_precision @ mu0 + (Amat.T @ M.y) / M.sigma_nu**2)
    return GaussianPosterior(mean=mean, cov=cov)


def _prior_logpdf_grid(model: ScoreModel, X: np.ndarray) -> np.ndarray:
    """Vectorized prior log-density over grid points X (npoints, dim)."""
    logw, means, variances = model.prior_components()
    parts = []
    for k in range(means.shape[0]):
        diff = X - means[k]
        quad = np.sum(diff * diff / variances[k], axis=1)
        norm = np.sum(np.log(2.0 * np.pi * variances[k]))
        parts.append(logw[k] - 0.5 * (quad + norm))
    stacked = np.stack(parts, axis=0)
    m = stacked.max(axis=0)
    return m + np.log(np.sum(np.exp(stacked - m), axis=0))


def grid_posterior(
    model: ScoreModel,
    A: LinearOperator,
    M: Measurement,
    bounds,
    resolution: int = 401,
) -> GridPosterior:
    """Brute-force Bayes on a regular grid (dims <= 2).

    ``bounds`` is a (lo, hi) pair per axis. Accumulation happens in log
    space; if more than 1e-6 of the mass lands on the boundary cells the
    box was too tight and a ValueError is raised.
    """
    dim = A.in_dim
    if dim > 2:
        raise ValueError("grid posterior supports dims <= 2")
    if M.sigma_nu <= 0:
        raise ValueError("grid posterior requires sigma_nu > 0")
    bounds = np.asarray(bounds, dtype=float)
    if bounds.shape == (2,):
        bounds = bounds[None, :]
    if bounds.shape != (dim, 2):
        raise ValueError(f"bounds must be ({dim}, 2)")
    if resolution < 3:
        raise ValueError("resolution must be >= 3")

    axes = tuple(np.linspace(lo, hi, resolution) for lo, hi in bounds)
    if dim == 1:
        X = axes[0][:, None]
        shape = (resolution,)
    else:
        g0, g1 = np.meshgrid(axes[0], axes[1], indexing="ij")
        X = np.stack([g0.ravel(), g1.ravel()], axis=1)
        shape = (resolution, resolution)

    Amat = dense_matrix(A)
    residual = M.y[None, :] - X @ Amat.T
    loglik = -0.5 * np.sum(residual * residual, axis=1) / M.sigma_nu**2
    logpost = _prior_logpdf_grid(model, X) + loglik
    logpost -= logpost.max()
    mass = np.exp(logpost)
    mass /= mass.sum()
    mass = mass.reshape(shape)

    if dim == 1:
        boundary = mass[0] + mass[-1]
    else:
        boundary = (
            mass[0, :].sum() + mass[-1, :].sum() + mass[1:-1, 0].sum() + mass[1:-1, -1].sum()
        )
    if boundary > 1e-6:
        raise ValueError(
            f"posterior mass {boundary:.3g} on the boundary; widen the bounds"
        )

    mean = (mass.reshape(-1, 1) * X).sum(axis=0) if dim == 2 else np.array(
        [(mass * axes[0]).sum()]
    )
    return GridPosterior(mean=mean, mass=mass, axes=axes)
