"""Discrete variance-preserving noise schedule.

Index convention: transitions are indexed t = 1..T, states t = 0..T.
``alpha_bar`` has length T+1 with ``alpha_bar[0] = 1``; the per-step
arrays (``beta``, ``alpha``, ``sigma_tilde``) are stored padded with a
leading placeholder so that index t refers to transition t.
"""

from dataclasses import dataclass, field

import numpy as np

__all__ = ["DiffusionSchedule", "build_linear_schedule", "marginal_coeffs"]


@dataclass(frozen=True)
class DiffusionSchedule:
    """Immutable container for the discrete VP-SDE coefficients.

    Attributes:
        T: number of diffusion steps (>= 1).
        beta: shape (T+1,); beta[t] is the noise rate of transition t,
            beta[0] is an unused placeholder (nan).
        alpha: shape (T+1,); 1 - beta with the same padding.
        alpha_bar: shape (T+1,); cumulative product of alpha over
            transitions, alpha_bar[0] = 1.
        sigma_tilde: shape (T+1,); reverse-transition noise scale,
            sigma_tilde[0] is a placeholder (nan).
    """

    T: int
    beta: np.ndarray = field(repr=False)
    alpha: np.ndarray = field(repr=False)
    alpha_bar: np.ndarray = field(repr=False)
    sigma_tilde: np.ndarray = field(repr=False)

    def __post_init__(self):
        for name in ("beta", "alpha", "alpha_bar", "sigma_tilde"):
            getattr(self, name).setflags(write=False)

    def check_step(self, t: int, lowest: int = 0) -> None:
        if not lowest <= t <= self.T:
            raise ValueError(f"step index {t} outside [{lowest}, {self.T}]")


def build_linear_schedule(
    T: int,
    beta_min: float = 1e-4,
    beta_max: float = 0.02,
    posterior_variance: bool = True,
) -> DiffusionSchedule:
    """Build a schedule with beta interpolating linearly over t = 1..T.

    ``posterior_variance`` selects the ancestral posterior form
    sigma_tilde[t]^2 = beta[t] * (1 - alpha_bar[t-1]) / (1 - alpha_bar[t]);
    when False the simpler sigma_tilde[t]^2 = beta[t] is used.
    """
    if not isinstance(T, (int, np.integer)) or isinstance(T, bool) or T < 1:
        raise ValueError(f"T must be an integer >= 1, got {T!r}")
    for name, val in (("beta_min", beta_min), ("beta_max", beta_max)):
        if not np.isfinite(val) or not 0.0 < val < 1.0:
            raise ValueError(f"{name} must be finite and in (0, 1), got {val!r}")
    if beta_min > beta_max:
        raise ValueError(f"beta_min {beta_min} > beta_max {beta_max}")

    beta = np.full(T + 1, np.nan)
    beta[1:] = np.linspace(beta_min, beta_max, T)
    alpha = np.full(T + 1, np.nan)
    alpha[1:] = 1.0 - beta[1:]
    alpha_bar = np.empty(T + 1)
    alpha_bar[0] = 1.0
    alpha_bar[1:] = np.cumprod(alpha[1:])

    sigma_sq = np.full(T + 1, np.nan)
    if posterior_variance:
        sigma_sq[1:] = beta[1:] * (1.0 - alpha_bar[:-1]) / (1.0 - alpha_bar[1:])
    else:
        sigma_sq[1:] = beta[1:]
    sigma_tilde = np.sqrt(sigma_sq)

    return DiffusionSchedule(
        T=int(T), beta=beta, alpha=alpha, alpha_bar=alpha_bar, sigma_tilde=sigma_tilde
    )


def marginal_coeffs(s: DiffusionSchedule, t: int) -> tuple[float, float]:
    """(signal_scale, noise_scale) of the forward marginal at state t.

    These are the coefficients of z^t = signal_scale * z^0 +
    noise_scale * eps; their squares sum to one by construction.
    """
    s.check_step(t)
    ab = s.alpha_bar[t]
    return float(np.sqrt(ab)), float(np.sqrt(1.0 - ab))
