"""Declarative experiment configuration.

Experiments are described by one nested YAML file (see configs/ in the
repository root for commented examples). ``ExperimentConfig.from_dict``
validates the raw mapping, reporting bad fields by dotted path, and
``build_problem`` assembles the concrete operator/codec/model/measurement
stack. The config hash covers everything except the output section, so
moving result directories never changes identity.
"""

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from .errors import ConfigError
from .filtering import FilterConfig
from .operators import (
    BlockDownsample,
    Codec,
    GaussianBlur,
    Identity,
    IdentityCodec,
    InpaintingMask,
    LinearOperator,
    Measurement,
    OrthonormalCodec,
    make_measurement,
)
from .oracle import GaussianPosterior, linear_gaussian_posterior
from .sampler import SamplerConfig
from .schedule import DiffusionSchedule, build_linear_schedule
from .score import GaussianScore, GmmScore, ScoreModel
from .streams import MEASUREMENT, SIGNAL, derive_rng

__all__ = ["ExperimentConfig", "Problem", "load_config", "config_hash"]


def _get(d: dict, path: str, default=..., types=None):
    node = d
    for part in path.split("."):
        if not isinstance(node, dict) or part not in node:
            if default is ...:
                raise ConfigError(f"{path}: required field is missing")
            return default
        node = node[part]
    if types is not None and not isinstance(node, types):
        raise ConfigError(f"{path}: expected {types}, got {type(node).__name__}")
    return node


def _vector(d, path, length=None):
    raw = _get(d, path)
    try:
        arr = np.asarray(raw, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: not numeric") from exc
    if arr.ndim != 1:
        raise ConfigError(f"{path}: expected a flat list of numbers")
    if length is not None and arr.size != length:
        raise ConfigError(f"{path}: expected length {length}, got {arr.size}")
    return arr


@dataclass(frozen=True)
class Problem:
    """Fully assembled experiment: everything a run needs."""

    schedule: DiffusionSchedule
    operator: LinearOperator
    codec: Codec
    model: ScoreModel
    measurement: Measurement
    x_star: np.ndarray
    sampler_cfg: SamplerConfig
    latent_dim: int
    ambient_dim: int
    max_value: float
    posterior: GaussianPosterior | None


@dataclass
class ExperimentConfig:
    raw: dict
    seeds: list[int]
    out_dir: Path
    formats: tuple[str, ...]

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("top level: expected a mapping")
        for section in ("problem", "schedule"):
            _get(d, section, types=dict)
        seeds = _parse_seeds(d)
        out_dir = Path(_get(d, "output.dir", "results", types=str))
        formats = _get(d, "output.formats", ["json", "csv"], types=list)
        for f in formats:
            if f not in ("json", "csv"):
                raise ConfigError(f"output.formats: unknown format {f!r}")
        cfg = cls(raw=d, seeds=seeds, out_dir=out_dir, formats=tuple(formats))
        cfg.build_problem()  # fail fast on any bad field
        return cfg

    @classmethod
    def from_yaml(cls, path) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                data = yaml.safe_load(fh)
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError(f"invalid YAML in {path}: {exc}") from exc
        return cls.from_dict(data)

    # -- section builders -------------------------------------------------

    def build_schedule(self) -> DiffusionSchedule:
        d = self.raw
        try:
            return build_linear_schedule(
                T=_get(d, "schedule.T", types=int),
                beta_min=float(_get(d, "schedule.beta_min", 1e-4, types=(int, float))),
                beta_max=float(_get(d, "schedule.beta_max", 0.02, types=(int, float))),
                posterior_variance=_get(d, "schedule.posterior_variance", True, types=bool),
            )
        except ValueError as exc:
            raise ConfigError(f"schedule: {exc}") from exc

    def build_model(self) -> ScoreModel:
        d = self.raw
        dim = _get(d, "problem.dim", types=int)
        kind = _get(d, "problem.prior.kind", types=str)
        try:
            if kind == "gaussian":
                return GaussianScore(
                    mean=_vector(d, "problem.prior.mean", dim),
                    var=_vector(d, "problem.prior.var", dim),
                )
            if kind == "gmm":
                weights = _vector(d, "problem.prior.weights")
                means = np.asarray(_get(d, "problem.prior.means"), dtype=float)
                variances = np.asarray(_get(d, "problem.prior.vars"), dtype=float)
                return GmmScore(weights=weights, means=means, variances=variances)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"problem.prior: {exc}") from exc
        raise ConfigError(f"problem.prior.kind: unknown kind {kind!r}")

    def build_codec(self) -> Codec:
        d = self.raw
        dim = _get(d, "problem.dim", types=int)
        kind = _get(d, "problem.codec.kind", "identity", types=str)
        try:
            if kind == "identity":
                return IdentityCodec(dim)
            if kind == "rotation":
                if dim != 2:
                    raise ConfigError("problem.codec: rotation codec needs dim == 2")
                angle = float(_get(d, "problem.codec.angle", types=(int, float)))
                return OrthonormalCodec.rotation2d(angle)
            if kind == "random_orthonormal":
                ambient = _get(d, "problem.codec.ambient_dim", types=int)
                seed = _get(d, "problem.codec.seed", 0, types=int)
                return OrthonormalCodec.random(ambient, dim, seed)
        except ValueError as exc:
            raise ConfigError(f"problem.codec: {exc}") from exc
        raise ConfigError(f"problem.codec.kind: unknown kind {kind!r}")

    def build_operator(self, ambient_dim: int) -> LinearOperator:
        d = self.raw
        kind = _get(d, "problem.operator.kind", types=str)
        shape = _get(d, "problem.operator.shape", None, types=list)
        shape = tuple(shape) if shape else (ambient_dim,)
        if int(np.prod(shape)) != ambient_dim:
            raise ConfigError(
                f"problem.operator.shape: product {np.prod(shape)} != ambient dim {ambient_dim}"
            )
        try:
            if kind == "identity":
                return Identity(ambient_dim)
            if kind == "inpaint":
                observed = _get(d, "problem.operator.observed")
                return InpaintingMask.from_indices(ambient_dim, observed)
            if kind == "blur":
                kernel = _get(d, "problem.operator.kernel", None)
                if kernel is not None:
                    return GaussianBlur(np.asarray(kernel, dtype=float), shape)
                sigma = float(_get(d, "problem.operator.sigma", types=(int, float)))
                width = _get(d, "problem.operator.width", 5, types=int)
                return GaussianBlur.from_sigma(shape, sigma, width)
            if kind == "downsample":
                factor = _get(d, "problem.operator.factor", types=int)
                return BlockDownsample(shape, factor)
        except (ValueError, IndexError) as exc:
            raise ConfigError(f"problem.operator: {exc}") from exc
        raise ConfigError(f"problem.operator.kind: unknown kind {kind!r}")

    def build_sampler_cfg(self) -> SamplerConfig:
        d = self.raw
        glue = _get(d, "sampler.glue", "auto")
        if glue == "auto":
            glue = None
        elif not isinstance(glue, bool):
            raise ConfigError("sampler.glue: expected 'auto', true or false")
        gamma = _get(d, "sampler.gamma", None, types=(int, float, type(None)))
        kwargs = {}
        eta = _get(d, "sampler.eta", None, types=(int, float, type(None)))
        if eta is not None:
            kwargs["eta"] = float(eta)
        try:
            return SamplerConfig(
                gamma=None if gamma is None else float(gamma),
                gradient_mode=_get(d, "sampler.gradient_mode", "auto", types=str),
                glue=glue,
                glue_reference=_get(d, "sampler.glue_reference", "measurement", types=str),
                **kwargs,
            )
        except ValueError as exc:
            raise ConfigError(f"sampler: {exc}") from exc

    def build_filter_cfg(self, n0: int | None = None, prune_period: int | None = None) -> FilterConfig:
        d = self.raw
        n_th = _get(d, "filter.n_th", None, types=(int, float, type(None)))
        try:
            return FilterConfig(
                n0=n0 if n0 is not None else _get(d, "filter.n0", 10, types=int),
                n_th=n_th,
                prune_period=(
                    prune_period
                    if prune_period is not None
                    else _get(d, "filter.prune_period", 20, types=int)
                ),
                resample_scheme=_get(d, "filter.resample_scheme", "multinomial", types=str),
            )
        except ValueError as exc:
            raise ConfigError(f"filter: {exc}") from exc

    def _draw_signal(self, model: ScoreModel, codec: Codec) -> np.ndarray:
        d = self.raw
        kind = _get(d, "problem.signal.kind", types=str)
        if kind == "explicit":
            values = _vector(d, "problem.signal.values", codec.ambient_dim)
            return values
        if kind == "prior_draw":
            seed = _get(d, "problem.signal.seed", 0, types=int)
            rng = derive_rng(seed, SIGNAL)
            logw, means, variances = model.prior_components()
            k = rng.choice(means.shape[0], p=np.exp(logw))
            z_star = means[k] + np.sqrt(variances[k]) * rng.standard_normal(model.dim)
            return codec.decode(z_star)
        raise ConfigError(f"problem.signal.kind: unknown kind {kind!r}")

    def build_problem(self) -> Problem:
        d = self.raw
        model = self.build_model()
        codec = self.build_codec()
        if model.dim != codec.latent_dim:
            raise ConfigError(
                f"problem: prior dim {model.dim} != codec latent dim {codec.latent_dim}"
            )
        operator = self.build_operator(codec.ambient_dim)
        schedule = self.build_schedule()
        sampler_cfg = self.build_sampler_cfg()
        x_star = self._draw_signal(model, codec)
        sigma_nu = float(_get(d, "problem.sigma_nu", types=(int, float)))
        meas_seed = _get(d, "problem.measurement_seed", 0, types=int)
        try:
            measurement = make_measurement(
                operator, x_star, sigma_nu, derive_rng(meas_seed, MEASUREMENT)
            )
        except ValueError as exc:
            raise ConfigError(f"problem: {exc}") from exc

        posterior = None
        if model.prior_kind == "gaussian" and sigma_nu > 0 and codec.ambient_dim <= 64:
            # Pixel-space conjugate posterior through the linear codec.
            W = _codec_matrix(codec)
            mu_x = W @ model.mean
            Sigma_x = W @ np.diag(model.var) @ W.T
            posterior = linear_gaussian_posterior(mu_x, Sigma_x, operator, measurement)

        return Problem(
            schedule=schedule,
            operator=operator,
            codec=codec,
            model=model,
            measurement=measurement,
            x_star=x_star,
            sampler_cfg=sampler_cfg,
            latent_dim=codec.latent_dim,
            ambient_dim=codec.ambient_dim,
            max_value=float(_get(d, "problem.max_value", 1.0, types=(int, float))),
            posterior=posterior,
        )


def _codec_matrix(codec: Codec) -> np.ndarray:
    cols = []
    for j in range(codec.latent_dim):
        e = np.zeros(codec.latent_dim)
        e[j] = 1.0
        cols.append(codec.decode(e))
    return np.stack(cols, axis=1)


def _parse_seeds(d: dict) -> list[int]:
    raw = _get(d, "seeds", {"base": 0, "count": 1})
    if isinstance(raw, list):
        if not raw:
            raise ConfigError("seeds: list must be non-empty")
        if not all(isinstance(s, int) for s in raw):
            raise ConfigError("seeds: entries must be integers")
        return list(raw)
    if isinstance(raw, dict):
        base = _get(d, "seeds.base", 0, types=int)
        count = _get(d, "seeds.count", 1, types=int)
        if count < 1:
            raise ConfigError("seeds.count: must be >= 1")
        return list(range(base, base + count))
    raise ConfigError("seeds: expected a list or {base, count}")


def load_config(path) -> ExperimentConfig:
    return ExperimentConfig.from_yaml(path)


def config_hash(cfg: ExperimentConfig) -> str:
    """Stable digest of the config without its output section."""
    stripped = {k: v for k, v in cfg.raw.items() if k != "output"}
    canon = json.dumps(stripped, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canon.encode()).hexdigest()[:16]
