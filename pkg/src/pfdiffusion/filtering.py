"""Particle-filter wrapper around the guided reverse-diffusion sampler.

The population starts at N0 standard-normal latents with uniform
weights. Each reverse step advances every particle independently,
multiplies its weight by the bounded likelihood 1/(misfit + 1),
normalizes, resamples with replacement when the effective sample size
falls to the threshold, and halves the population every ``prune_period``
steps by discarding the lowest-weight particles. The decoded denoised
estimate of the highest-weight survivor is the final answer.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from ._backend import backend_name
from .errors import NumericalError
from .operators import Codec, LinearOperator, Measurement
from .sampler import SamplerConfig, guided_step
from .schedule import DiffusionSchedule
from .score import ScoreModel
from .streams import INIT, RESAMPLE, derive_rng, particle_rng

__all__ = [
    "Particle",
    "Ensemble",
    "FilterConfig",
    "RunReport",
    "init_ensemble",
    "update_weight",
    "normalize_weights",
    "effective_sample_size",
    "degeneracy",
    "maybe_resample",
    "prune",
    "run_particle_filter",
]


@dataclass
class Particle:
    """One weighted latent trajectory.

    ``lineage`` is the ancestry chain of ids, grown at resample events;
    it keys the particle's private noise streams.
    """

    id: int
    lineage: tuple
    z: np.ndarray
    w: float
    z_hat0: np.ndarray | None = None
    residual_sq: float = np.inf


@dataclass
class FilterConfig:
    """Population controls.

    ``n_th=None`` resamples when the degeneracy metric falls to half the
    current population; a number fixes an absolute threshold.
    """

    n0: int = 10
    n_th: float | None = None
    prune_period: int = 20
    resample_scheme: str = "multinomial"

    def __post_init__(self):
        if self.n0 < 1:
            raise ValueError("n0 must be >= 1")
        if self.n_th is not None and not 1 <= self.n_th <= self.n0:
            raise ValueError("n_th must satisfy 1 <= n_th <= n0")
        if self.prune_period < 1:
            raise ValueError("prune_period must be >= 1")
        if self.resample_scheme not in ("multinomial", "systematic"):
            raise ValueError(f"unknown resample_scheme {self.resample_scheme!r}")

    def threshold(self, n_current: int) -> float:
        return float(self.n_th) if self.n_th is not None else n_current / 2.0


@dataclass
class Ensemble:
    """The evolving weighted population plus bookkeeping."""

    particles: list[Particle]
    t: int
    n0: int
    next_id: int
    history: list[dict] = field(default_factory=list)
    events: list[dict] = field(default_factory=list)
    particle_steps: int = 0

    @property
    def n(self) -> int:
        return len(self.particles)

    def weights(self) -> np.ndarray:
        return np.array([p.w for p in self.particles])


def init_ensemble(n0: int, dim: int, rng: np.random.Generator, t: int = 0) -> Ensemble:
    """Fresh population of i.i.d. standard-normal latents, uniform weights."""
    if n0 < 1 or dim < 1:
        raise ValueError("n0 and dim must be >= 1")
    states = rng.standard_normal((n0, dim))
    particles = [
        Particle(id=i, lineage=(i,), z=states[i], w=1.0 / n0) for i in range(n0)
    ]
    return Ensemble(particles=particles, t=t, n0=n0, next_id=n0)


def update_weight(w_prev: float, residual_sq: float) -> float:
    """Bounded-likelihood weight update w / (misfit + 1)."""
    if w_prev < 0 or residual_sq < 0:
        raise ValueError("weight and residual must be non-negative")
    return w_prev / (residual_sq + 1.0)


def normalize_weights(ensemble: Ensemble) -> Ensemble:
    total = sum(p.w for p in ensemble.particles)
    if not np.isfinite(total) or total <= 0.0:
        raise NumericalError(
            f"weight sum {total!r} is not positive; all particles are "
            "numerically dead"
        )
    for p in ensemble.particles:
        p.w /= total
    return ensemble


def effective_sample_size(weights: np.ndarray) -> float:
    """1 / sum(w^2) for an already-normalized weight vector."""
    w = np.asarray(weights, dtype=float)
    return float(1.0 / np.sum(w * w))


def degeneracy(ensemble: Ensemble) -> float:
    """Degeneracy metric of the ensemble; requires normalized weights."""
    w = ensemble.weights()
    if abs(w.sum() - 1.0) > 1e-9:
        raise ValueError("weights must be normalized before degeneracy()")
    return effective_sample_size(w)


def _draw_ancestors(weights, scheme, rng):
    n = weights.size
    cumw = np.cumsum(weights)
    cumw[-1] = 1.0
    if scheme == "systematic":
        positions = (rng.random() + np.arange(n)) / n
    else:
        positions = rng.random(n)
    return _kernels.indices_from_uniforms(cumw, positions)


def maybe_resample(
    ensemble: Ensemble, cfg: FilterConfig, rng: np.random.Generator
) -> Ensemble:
    """Resample with replacement when degeneracy drops to the threshold.

    Selected states are copied into particles with fresh ids (lineage
    extended) and weights reset to 1/N; above the threshold the ensemble
    passes through untouched.
    """
    n_d = degeneracy(ensemble)
    if n_d > cfg.threshold(ensemble.n):
        return ensemble
    if ensemble.n == 1:
        # Resampling a lone particle is an exact no-op; skipping it keeps
        # the lineage (and hence the rng key space) from growing.
        return ensemble
    w = ensemble.weights()
    ancestors = _draw_ancestors(w, cfg.resample_scheme, rng)
    new_particles = []
    for idx in ancestors:
        parent = ensemble.particles[idx]
        pid = ensemble.next_id
        ensemble.next_id += 1
        new_particles.append(
            Particle(
                id=pid,
                lineage=parent.lineage + (pid,),
                z=parent.z.copy(),
                w=1.0 / ensemble.n,
                z_hat0=None if parent.z_hat0 is None else parent.z_hat0.copy(),
                residual_sq=parent.residual_sq,
            )
        )
    ensemble.particles = new_particles
    ensemble.events.append(
        {
            "kind": "resample",
            "t": ensemble.t,
            "n_d": n_d,
            "ancestors": [int(a) for a in ancestors],
        }
    )
    return ensemble


def prune(ensemble: Ensemble, cfg: FilterConfig) -> Ensemble:
    """Halve the population, discarding the lowest-weight particles.

    Keeps floor(N/2); among equal weights the lower id is removed first,
    so the argmax-weight particle always survives. Weights are
    renormalized afterwards. A single-particle ensemble is left alone.
    """
    n = ensemble.n
    if n <= 1:
        return ensemble
    keep = n // 2
    order = sorted(ensemble.particles, key=lambda p: (p.w, p.id))
    survivor_ids = {p.id for p in order[n - keep :]}
    ensemble.particles = [p for p in ensemble.particles if p.id in survivor_ids]
    ensemble.events.append({"kind": "prune", "t": ensemble.t, "from_n": n, "to_n": keep})
    return normalize_weights(ensemble)


@dataclass
class RunReport:
    """Everything one run produced, JSON-serializable via to_dict()."""

    seed: int
    n0: int
    prune_period: int
    t_steps: int
    backend: str
    particle_steps: int
    estimate: np.ndarray
    estimate_latent: np.ndarray
    final_weight: float
    final_residual_sq: float
    history: list[dict]
    events: list[dict]
    wall_ms: float
    metrics: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "n0": self.n0,
            "prune_period": self.prune_period,
            "t_steps": self.t_steps,
            "backend": self.backend,
            "particle_steps": self.particle_steps,
            "estimate": [float(v) for v in self.estimate],
            "estimate_latent": [float(v) for v in self.estimate_latent],
            "final_weight": self.final_weight,
            "final_residual_sq": self.final_residual_sq,
            "history": self.history,
            "events": self.events,
            "metrics": self.metrics,
            "config": self.config,
            "wall_ms": self.wall_ms,
        }


def _residual_stats(particles):
    r = np.array([p.residual_sq for p in particles])
    return float(r.min()), float(np.median(r)), float(r.max())


def run_particle_filter(
    M: Measurement,
    A: LinearOperator,
    codec: Codec,
    model: ScoreModel,
    s: DiffusionSchedule,
    sampler_cfg: SamplerConfig,
    filter_cfg: FilterConfig,
    seed: int,
    x_star: np.ndarray | None = None,
) -> tuple[np.ndarray, RunReport]:
    """Full reverse loop t = T..1 over the whole population.

    Particles whose step output goes non-finite are retired with a
    logged event; the run fails loudly only if none survive. Identical
    (config, seed) pairs reproduce the report bit for bit on one
    platform: every noise draw comes from a stream keyed by
    (seed, purpose, t, lineage).
    """
    start = time.perf_counter()
    T = s.T
    ensemble = init_ensemble(filter_cfg.n0, model.dim, derive_rng(seed, INIT), t=T)

    for t in range(T, 0, -1):
        ensemble.t = t
        survivors = []
        for p in ensemble.particles:
            rng = particle_rng(seed, t, p.lineage)
            ensemble.particle_steps += 1
            try:
                out = guided_step(
                    p.z, t, M, A, codec, model, s, sampler_cfg, rng, x_star
                )
            except NumericalError:
                ensemble.events.append(
                    {"kind": "abort", "t": t, "particle": p.id}
                )
                continue
            p.z = out.z_next
            p.z_hat0 = out.z_hat0
            p.residual_sq = out.residual_sq
            p.w = update_weight(p.w, out.residual_sq)
            survivors.append(p)
        if not survivors:
            raise NumericalError(f"all particles aborted at step {t}")
        ensemble.particles = survivors

        normalize_weights(ensemble)
        elapsed = T - t + 1
        res_min, res_med, res_max = _residual_stats(ensemble.particles)
        ensemble.history.append(
            {
                "t": t - 1,
                "elapsed": elapsed,
                "n": ensemble.n,
                "ess": degeneracy(ensemble),
                "residual_min": res_min,
                "residual_median": res_med,
                "residual_max": res_max,
            }
        )

        maybe_resample(ensemble, filter_cfg, derive_rng(seed, RESAMPLE, t))
        if elapsed % filter_cfg.prune_period == 0 and 0 < elapsed < T and ensemble.n > 1:
            prune(ensemble, filter_cfg)

    best = max(ensemble.particles, key=lambda p: (p.w, -p.id))
    estimate_latent = best.z_hat0
    estimate = codec.decode(estimate_latent)
    wall_ms = (time.perf_counter() - start) * 1e3

    report = RunReport(
        seed=seed,
        n0=filter_cfg.n0,
        prune_period=filter_cfg.prune_period,
        t_steps=T,
        backend=backend_name(),
        particle_steps=ensemble.particle_steps,
        estimate=np.asarray(estimate, dtype=float),
        estimate_latent=np.asarray(estimate_latent, dtype=float),
        final_weight=float(best.w),
        final_residual_sq=float(best.residual_sq),
        history=ensemble.history,
        events=ensemble.events,
        wall_ms=wall_ms,
    )
    return report.estimate, report
