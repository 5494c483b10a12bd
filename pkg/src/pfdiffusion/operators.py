"""Matrix-free linear forward operators, codecs and measurements.

Operators act on flat float64 vectors; 2-D variants reshape internally.
Inpainting is represented square (n -> n, masked entries zeroed) so that
A^T A and I - A^T A are complementary keep/fill projectors.
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

__all__ = [
    "LinearOperator",
    "Identity",
    "InpaintingMask",
    "GaussianBlur",
    "BlockDownsample",
    "Codec",
    "IdentityCodec",
    "OrthonormalCodec",
    "Measurement",
    "make_measurement",
    "residual_norm_sq",
]


def _as_vector(x, dim: int, what: str) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (dim,):
        raise ValueError(f"{what} must have shape ({dim},), got {x.shape}")
    return x


class LinearOperator(ABC):
    """Linear map with an adjoint; apply/adjoint are matrix-free."""

    in_dim: int
    out_dim: int
    kind: str

    @abstractmethod
    def apply(self, x: np.ndarray) -> np.ndarray: ...

    @abstractmethod
    def adjoint(self, u: np.ndarray) -> np.ndarray: ...

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.apply(x)

    def normal(self, x: np.ndarray) -> np.ndarray:
        """A^T A x."""
        return self.adjoint(self.apply(x))

    @property
    def is_projector(self) -> bool:
        """True when A^T A = A = A^T (identity and inpainting masks)."""
        return False

    @property
    def operator_id(self) -> str:
        return f"{self.kind}:{self.in_dim}->{self.out_dim}"


class Identity(LinearOperator):
    kind = "identity"

    def __init__(self, dim: int):
        if dim < 1:
            raise ValueError("dim must be >= 1")
        self.in_dim = self.out_dim = int(dim)

    def apply(self, x):
        return _as_vector(x, self.in_dim, "x").copy()

    def adjoint(self, u):
        return _as_vector(u, self.out_dim, "u").copy()

    @property
    def is_projector(self):
        return True


class InpaintingMask(LinearOperator):
    """Square masking operator: observed entries kept, the rest zeroed.

    ``keep`` is a boolean array over pixels; the operator is self-adjoint
    and idempotent, which makes the gluing complement I - A^T A the fill
    projector.
    """

    kind = "inpaint"

    def __init__(self, keep):
        keep = np.asarray(keep, dtype=bool).ravel()
        if keep.size < 1:
            raise ValueError("mask must be non-empty")
        if not keep.any():
            raise ValueError("mask keeps no pixels")
        self.keep = keep
        self.keep.setflags(write=False)
        self.in_dim = self.out_dim = int(keep.size)

    @classmethod
    def from_indices(cls, dim: int, observed) -> "InpaintingMask":
        keep = np.zeros(dim, dtype=bool)
        keep[np.asarray(observed, dtype=int)] = True
        return cls(keep)

    def apply(self, x):
        x = _as_vector(x, self.in_dim, "x")
        return np.where(self.keep, x, 0.0)

    def adjoint(self, u):
        return self.apply(u)

    @property
    def is_projector(self):
        return True


def gaussian_kernel(sigma: float, width: int) -> np.ndarray:
    """Normalized odd-width Gaussian stencil."""
    if width < 1 or width % 2 == 0:
        raise ValueError(f"kernel width must be odd and >= 1, got {width}")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    half = width // 2
    x = np.arange(-half, half + 1, dtype=float)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


class GaussianBlur(LinearOperator):
    """Stencil blur with symmetric (edge-including) reflect boundary.

    1-D signals convolve directly; 2-D images apply the same stencil
    separably along both axes. The adjoint is exact for the reflect
    boundary: it transposes each stage (valid correlation -> full
    convolution, reflect pad -> fold-back add).
    """

    kind = "blur"

    def __init__(self, kernel, shape):
        kernel = np.asarray(kernel, dtype=float).ravel()
        if kernel.size % 2 == 0:
            raise ValueError("kernel width must be odd")
        if np.any(kernel < 0) or not np.isfinite(kernel).all():
            raise ValueError("kernel entries must be finite and non-negative")
        total = kernel.sum()
        if total <= 0:
            raise ValueError("kernel must have positive mass")
        self.kernel = kernel / total
        self.kernel.setflags(write=False)

        if np.isscalar(shape) or isinstance(shape, (int, np.integer)):
            self.shape = (int(shape),)
        else:
            self.shape = tuple(int(s) for s in shape)
        if len(self.shape) not in (1, 2):
            raise ValueError("shape must be 1-D length or (h, w)")
        pad = kernel.size // 2
        for s in self.shape:
            if s < pad:
                raise ValueError(f"axis length {s} shorter than pad {pad}")
        self.in_dim = self.out_dim = int(np.prod(self.shape))
        # Symmetric pad as an index map so the fold-back adjoint reuses it.
        self._pad_idx = {
            n: np.concatenate(
                [np.arange(pad - 1, -1, -1), np.arange(n), np.arange(n - 1, n - 1 - pad, -1)]
            )
            for n in set(self.shape)
        }

    @classmethod
    def from_sigma(cls, shape, sigma: float, width: int = 5) -> "GaussianBlur":
        return cls(gaussian_kernel(sigma, width), shape)

    def _corr_last_axis(self, a: np.ndarray) -> np.ndarray:
        n = a.shape[-1]
        ap = a[..., self._pad_idx[n]]
        out = np.zeros(a.shape)
        for j, kj in enumerate(self.kernel):
            out += kj * ap[..., j : j + n]
        return out

    def _corr_last_axis_adjoint(self, u: np.ndarray) -> np.ndarray:
        n = u.shape[-1]
        width = self.kernel.size
        full = np.zeros(u.shape[:-1] + (n + width - 1,))
        for j, kj in enumerate(self.kernel):
            full[..., j : j + n] += kj * u
        out = np.zeros(u.shape)
        idx = self._pad_idx[n]
        if out.ndim == 1:
            np.add.at(out, idx, full)
        else:
            np.add.at(out, (np.arange(out.shape[0])[:, None], idx[None, :]), full)
        return out

    def apply(self, x):
        x = _as_vector(x, self.in_dim, "x").reshape(self.shape)
        if len(self.shape) == 1:
            return self._corr_last_axis(x)
        y = self._corr_last_axis(x)
        y = self._corr_last_axis(y.T).T
        return y.ravel()

    def adjoint(self, u):
        u = _as_vector(u, self.out_dim, "u").reshape(self.shape)
        if len(self.shape) == 1:
            return self._corr_last_axis_adjoint(u)
        y = self._corr_last_axis_adjoint(u.T).T
        y = self._corr_last_axis_adjoint(y)
        return y.ravel()


class BlockDownsample(LinearOperator):
    """Block-average downsampling by an integer factor.

    The adjoint spreads each coarse value uniformly over its block,
    scaled by one over the block size.
    """

    kind = "downsample"

    def __init__(self, shape, factor: int):
        factor = int(factor)
        if factor < 1:
            raise ValueError("factor must be >= 1")
        if np.isscalar(shape) or isinstance(shape, (int, np.integer)):
            self.shape = (int(shape),)
        else:
            self.shape = tuple(int(s) for s in shape)
        if len(self.shape) not in (1, 2):
            raise ValueError("shape must be 1-D length or (h, w)")
        for s in self.shape:
            if s % factor != 0:
                raise ValueError(f"axis length {s} not divisible by factor {factor}")
        self.factor = factor
        self.in_dim = int(np.prod(self.shape))
        self.out_shape = tuple(s // factor for s in self.shape)
        self.out_dim = int(np.prod(self.out_shape))
        self._block = factor ** len(self.shape)

    def apply(self, x):
        x = _as_vector(x, self.in_dim, "x").reshape(self.shape)
        f = self.factor
        if len(self.shape) == 1:
            return x.reshape(-1, f).mean(axis=1)
        h, w = self.out_shape
        return x.reshape(h, f, w, f).mean(axis=(1, 3)).ravel()

    def adjoint(self, u):
        u = _as_vector(u, self.out_dim, "u").reshape(self.out_shape)
        f = self.factor
        scale = 1.0 / self._block
        if len(self.shape) == 1:
            return np.repeat(u * scale, f)
        up = np.repeat(np.repeat(u * scale, f, axis=0), f, axis=1)
        return up.ravel()


class Codec(ABC):
    """Encoder/decoder pair between pixel space R^n and latent space R^k.

    Shipped codecs are linear with encode a left inverse of decode, so
    analytic gradients chain through both directions.
    """

    ambient_dim: int
    latent_dim: int
    kind: str

    @abstractmethod
    def encode(self, x: np.ndarray) -> np.ndarray: ...

    @abstractmethod
    def decode(self, z: np.ndarray) -> np.ndarray: ...

    @abstractmethod
    def decode_adjoint(self, v: np.ndarray) -> np.ndarray: ...

    @abstractmethod
    def encode_adjoint(self, v: np.ndarray) -> np.ndarray: ...


class IdentityCodec(Codec):
    kind = "identity"

    def __init__(self, dim: int):
        self.ambient_dim = self.latent_dim = int(dim)

    def encode(self, x):
        return _as_vector(x, self.ambient_dim, "x").copy()

    def decode(self, z):
        return _as_vector(z, self.latent_dim, "z").copy()

    def decode_adjoint(self, v):
        return _as_vector(v, self.ambient_dim, "v").copy()

    def encode_adjoint(self, v):
        return _as_vector(v, self.latent_dim, "v").copy()


class OrthonormalCodec(Codec):
    """Fixed linear codec with orthonormal columns (decode = W z).

    encode = W^T is both the pseudo-inverse and the exact left inverse
    of decode.
    """

    kind = "orthonormal"

    def __init__(self, matrix: np.ndarray):
        W = np.asarray(matrix, dtype=float)
        if W.ndim != 2 or W.shape[0] < W.shape[1]:
            raise ValueError("matrix must be (n, k) with n >= k")
        if not np.allclose(W.T @ W, np.eye(W.shape[1]), atol=1e-10):
            raise ValueError("matrix columns must be orthonormal")
        self.W = W
        self.W.setflags(write=False)
        self.ambient_dim, self.latent_dim = W.shape

    @classmethod
    def random(cls, ambient_dim: int, latent_dim: int, seed: int = 0) -> "OrthonormalCodec":
        rng = np.random.default_rng(seed)
        g = rng.standard_normal((ambient_dim, latent_dim))
        q, r = np.linalg.qr(g)
        # Fix column signs so the codec is unique given the seed.
        q = q * np.sign(np.diag(r))
        return cls(q)

    @classmethod
    def rotation2d(cls, angle: float) -> "OrthonormalCodec":
        c, s = np.cos(angle), np.sin(angle)
        return cls(np.array([[c, -s], [s, c]]))

    def encode(self, x):
        return self.W.T @ _as_vector(x, self.ambient_dim, "x")

    def decode(self, z):
        return self.W @ _as_vector(z, self.latent_dim, "z")

    def decode_adjoint(self, v):
        return self.W.T @ _as_vector(v, self.ambient_dim, "v")

    def encode_adjoint(self, v):
        return self.W @ _as_vector(v, self.latent_dim, "v")


@dataclass(frozen=True)
class Measurement:
    """Observation y = A(x*) + sigma_nu * eps with its provenance."""

    y: np.ndarray
    sigma_nu: float
    operator_id: str

    def __post_init__(self):
        if not np.isfinite(self.y).all():
            raise ValueError("measurement contains non-finite values")
        if self.sigma_nu < 0:
            raise ValueError("sigma_nu must be >= 0")
        self.y.setflags(write=False)


def make_measurement(
    A: LinearOperator,
    x_star: np.ndarray,
    sigma_nu: float,
    rng: np.random.Generator,
) -> Measurement:
    """Synthesize a noisy measurement of ``x_star`` through ``A``."""
    x_star = _as_vector(x_star, A.in_dim, "x_star")
    if not np.isfinite(x_star).all():
        raise ValueError("x_star contains non-finite values")
    if not np.isfinite(sigma_nu) or sigma_nu < 0:
        raise ValueError(f"sigma_nu must be finite and >= 0, got {sigma_nu!r}")
    y = A.apply(x_star) + sigma_nu * rng.standard_normal(A.out_dim)
    return Measurement(y=y, sigma_nu=float(sigma_nu), operator_id=A.operator_id)


def residual_norm_sq(
    M: Measurement, A: LinearOperator, D: Codec, z_hat0: np.ndarray
) -> float:
    """Squared data misfit ||y - A(D(z_hat0))||^2 of a denoised latent."""
    r = M.y - A.apply(D.decode(z_hat0))
    if not np.isfinite(r).all():
        raise ValueError("non-finite residual")
    return float(r @ r)
