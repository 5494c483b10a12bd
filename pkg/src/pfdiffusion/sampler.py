"""One guided reverse-diffusion step per particle.

A step at transition t chains four pieces:

1. Tweedie denoised estimate  zhat0 = (z + (1-abar_t) s(z,t)) / sqrt(abar_t)
2. ancestral update           z' = c_t z + c_0 zhat0 + sigma_tilde_t eps
3. data-misfit correction     z'' = z' - eta_t * grad ||y - A(D(zhat0))||^2
4. gluing correction          z_next = z'' - gamma_t * grad of the latent
   consistency penalty ||zhat0 - E(c + (I - A^T A) D(zhat0))||^2, where c
   is A^T y by default (or A^T A x* when the true signal is supplied for
   synthetic exactness studies).

Gradients are taken with respect to the pre-update state z via the
Tweedie Jacobian J = (I + (1-abar) dS/dz)/sqrt(abar); both corrections
support an analytic chain-rule mode and a central-finite-difference mode
on the scalar objective.
"""

from dataclasses import dataclass

import numpy as np

from .errors import NumericalError
from .operators import Codec, LinearOperator, Measurement, residual_norm_sq
from .schedule import DiffusionSchedule
from .score import ScoreModel, fd_probe_step

__all__ = [
    "SamplerConfig",
    "StepOutput",
    "DEFAULT_ETA",
    "tweedie_estimate",
    "ancestral_update",
    "measurement_gradient",
    "gluing_gradient",
    "guided_step",
]

# Constant data-misfit step size for the desk-scale benchmarks. Tuned so
# that on the shipped linear-Gaussian benchmark the terminal distribution
# of the observed coordinate matches the analytic posterior spread; see
# the acceptance suite.
DEFAULT_ETA = 0.15


@dataclass(frozen=True)
class SamplerConfig:
    """Step sizes and gradient options for the guided sampler.

    ``eta`` and ``gamma`` are either scalars or arrays of length T+1
    indexed by transition; ``gamma=None`` means 0.1 * eta. ``glue=None``
    enables the gluing correction exactly for projector operators
    (identity, inpainting). ``gradient_mode='auto'`` picks the analytic
    chain rule for Gaussian priors and central differences otherwise.
    """

    eta: float | np.ndarray = DEFAULT_ETA
    gamma: float | np.ndarray | None = None
    gradient_mode: str = "auto"
    glue: bool | None = None
    glue_reference: str = "measurement"

    def __post_init__(self):
        if self.gradient_mode not in ("auto", "analytic", "finite_difference"):
            raise ValueError(f"unknown gradient_mode {self.gradient_mode!r}")
        if self.glue_reference not in ("measurement", "true_signal"):
            raise ValueError(f"unknown glue_reference {self.glue_reference!r}")
        for name in ("eta", "gamma"):
            val = getattr(self, name)
            if val is None:
                continue
            arr = np.asarray(val, dtype=float)
            if np.any(arr < 0) or not np.isfinite(arr).all():
                raise ValueError(f"{name} must be finite and >= 0 everywhere")

    def eta_at(self, t: int) -> float:
        return _step_size(self.eta, t)

    def gamma_at(self, t: int) -> float:
        if self.gamma is None:
            return 0.1 * self.eta_at(t)
        return _step_size(self.gamma, t)

    def glue_enabled(self, A: LinearOperator) -> bool:
        if self.glue is None:
            return A.is_projector
        return bool(self.glue)

    def resolve_gradient_mode(self, model: ScoreModel) -> str:
        if self.gradient_mode != "auto":
            return self.gradient_mode
        if getattr(model, "prior_kind", "") == "gaussian" and model.has_analytic_jacobian:
            return "analytic"
        return "finite_difference"


def _step_size(value, t: int) -> float:
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        return float(arr)
    return float(arr[t])


@dataclass(frozen=True)
class StepOutput:
    """Result of one guided step: denoised estimate, next state, misfit."""

    z_hat0: np.ndarray
    z_next: np.ndarray
    residual_sq: float

    def __post_init__(self):
        ok = (
            np.isfinite(self.z_hat0).all()
            and np.isfinite(self.z_next).all()
            and np.isfinite(self.residual_sq)
        )
        if not ok:
            raise NumericalError("guided step produced non-finite output")


def tweedie_estimate(
    z: np.ndarray, t: int, model: ScoreModel, s: DiffusionSchedule
) -> np.ndarray:
    """Posterior-mean denoised estimate of z^0 given z^t."""
    s.check_step(t, lowest=1)
    ab = s.alpha_bar[t]
    if ab <= 0.0:
        raise ValueError(f"alpha_bar[{t}] must be positive")
    return _tweedie_from_score(z, model.score(z, t, s), ab)


def _tweedie_from_score(z, score, ab):
    return (z + (1.0 - ab) * score) / np.sqrt(ab)


def ancestral_update(
    z: np.ndarray,
    z_hat0: np.ndarray,
    t: int,
    s: DiffusionSchedule,
    rng: np.random.Generator | None,
) -> np.ndarray:
    """Ancestral transition to state t-1 given the denoised estimate.

    Passing ``rng=None`` suppresses the sigma_tilde noise term, making
    the map deterministic and linear in (z, z_hat0).
    """
    s.check_step(t, lowest=1)
    one_minus_ab = 1.0 - s.alpha_bar[t]
    if one_minus_ab <= 0.0:
        raise ValueError(f"1 - alpha_bar[{t}] must be positive to step")
    coef_z = np.sqrt(s.alpha[t]) * (1.0 - s.alpha_bar[t - 1]) / one_minus_ab
    coef_z0 = np.sqrt(s.alpha_bar[t - 1]) * s.beta[t] / one_minus_ab
    out = coef_z * np.asarray(z, dtype=float) + coef_z0 * np.asarray(z_hat0, dtype=float)
    if rng is not None:
        out = out + s.sigma_tilde[t] * rng.standard_normal(out.shape)
    return out


def _chain_through_tweedie(model, z, t, s, ab, g_hat0):
    # grad_z = J^T g with J = (I + (1-abar) H)/sqrt(abar); H symmetric.
    hv = model.jacobian_vp(z, t, s, g_hat0)
    return (g_hat0 + (1.0 - ab) * hv) / np.sqrt(ab)


def _fd_gradient(objective, z):
    h = fd_probe_step(z)
    g = np.empty_like(z)
    for i in range(z.size):
        zp = z.copy()
        zm = z.copy()
        zp[i] += h
        zm[i] -= h
        g[i] = (objective(zp) - objective(zm)) / (2.0 * h)
    return g


def _misfit_grad_wrt_hat0(M, A, D, z_hat0):
    r = A.apply(D.decode(z_hat0)) - M.y
    return 2.0 * D.decode_adjoint(A.adjoint(r)), float(r @ r)


def measurement_gradient(
    z: np.ndarray,
    t: int,
    M: Measurement,
    A: LinearOperator,
    D: Codec,
    model: ScoreModel,
    s: DiffusionSchedule,
    cfg: SamplerConfig = SamplerConfig(),
) -> np.ndarray:
    """Gradient of ||y - A(D(zhat0(z)))||^2 with respect to z at step t."""
    z = np.asarray(z, dtype=float)
    mode = cfg.resolve_gradient_mode(model)
    if mode == "analytic":
        if not model.has_analytic_jacobian:
            raise ValueError("model lacks an analytic Jacobian")
        ab = s.alpha_bar[t]
        z_hat0 = tweedie_estimate(z, t, model, s)
        g_hat0, _ = _misfit_grad_wrt_hat0(M, A, D, z_hat0)
        return _chain_through_tweedie(model, z, t, s, ab, g_hat0)
    return _fd_gradient(
        lambda zz: residual_norm_sq(M, A, D, tweedie_estimate(zz, t, model, s)), z
    )


def _glue_target(M, A, x_star, reference):
    if reference == "true_signal":
        if x_star is None:
            raise ValueError("glue_reference='true_signal' requires x_star")
        return A.normal(np.asarray(x_star, dtype=float))
    return A.adjoint(M.y)


def _glue_objective(target, A, codec, z_hat0):
    decoded = codec.decode(z_hat0)
    composite = target + decoded - A.normal(decoded)
    r = z_hat0 - codec.encode(composite)
    return r, float(r @ r)


def _glue_grad_wrt_hat0(target, A, codec, z_hat0):
    r, value = _glue_objective(target, A, codec, z_hat0)
    w = codec.encode_adjoint(r)
    g = 2.0 * (r - codec.decode_adjoint(w - A.normal(w)))
    return g, value


def gluing_gradient(
    z: np.ndarray,
    t: int,
    M: Measurement,
    A: LinearOperator,
    codec: Codec,
    model: ScoreModel,
    s: DiffusionSchedule,
    cfg: SamplerConfig = SamplerConfig(),
    x_star: np.ndarray | None = None,
) -> np.ndarray:
    """Gradient of the latent consistency penalty with respect to z.

    With an identity codec and an inpainting mask this penalizes
    disagreement between the denoised estimate and the measurement on
    the observed pixels only.
    """
    z = np.asarray(z, dtype=float)
    target = _glue_target(M, A, x_star, cfg.glue_reference)
    mode = cfg.resolve_gradient_mode(model)
    if mode == "analytic":
        if not model.has_analytic_jacobian:
            raise ValueError("model lacks an analytic Jacobian")
        ab = s.alpha_bar[t]
        z_hat0 = tweedie_estimate(z, t, model, s)
        g_hat0, _ = _glue_grad_wrt_hat0(target, A, codec, z_hat0)
        return _chain_through_tweedie(model, z, t, s, ab, g_hat0)

    def objective(zz):
        _, value = _glue_objective(target, A, codec, tweedie_estimate(zz, t, model, s))
        return value

    return _fd_gradient(objective, z)


def guided_step(
    z: np.ndarray,
    t: int,
    M: Measurement,
    A: LinearOperator,
    codec: Codec,
    model: ScoreModel,
    s: DiffusionSchedule,
    cfg: SamplerConfig,
    rng: np.random.Generator | None,
    x_star: np.ndarray | None = None,
) -> StepOutput:
    """Full guided transition z^t -> z^{t-1} for one particle.

    The score is evaluated once and shared between the Tweedie estimate
    and the analytic gradient chain. Non-finite output raises
    NumericalError so the caller can retire the particle.
    """
    z = np.asarray(z, dtype=float)
    s.check_step(t, lowest=1)
    ab = s.alpha_bar[t]
    mode = cfg.resolve_gradient_mode(model)

    z_hat0 = _tweedie_from_score(z, model.score(z, t, s), ab)
    z_prime = ancestral_update(z, z_hat0, t, s, rng)

    eta = cfg.eta_at(t)
    glue_on = cfg.glue_enabled(A)
    gamma = cfg.gamma_at(t) if glue_on else 0.0

    if mode == "analytic":
        g_hat0, residual_sq = _misfit_grad_wrt_hat0(M, A, codec, z_hat0)
        z_next = z_prime - eta * _chain_through_tweedie(model, z, t, s, ab, g_hat0)
        if glue_on and gamma > 0.0:
            target = _glue_target(M, A, x_star, cfg.glue_reference)
            gg_hat0, _ = _glue_grad_wrt_hat0(target, A, codec, z_hat0)
            z_next = z_next - gamma * _chain_through_tweedie(model, z, t, s, ab, gg_hat0)
    else:
        residual_sq = residual_norm_sq(M, A, codec, z_hat0)
        z_next = z_prime - eta * measurement_gradient(z, t, M, A, codec, model, s, cfg)
        if glue_on and gamma > 0.0:
            z_next = z_next - gamma * gluing_gradient(
                z, t, M, A, codec, model, s, cfg, x_star
            )

    return StepOutput(z_hat0=z_hat0, z_next=z_next, residual_sq=residual_sq)
