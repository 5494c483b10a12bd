"""Reconstruction-quality metrics: PSNR, SSIM and plain L2 error.

The learned-perceptual metric used alongside these at full scale needs a
pretrained network, so reports substitute l2_error and the measurement
misfit and label them as such.
"""

from dataclasses import dataclass

import numpy as np

__all__ = ["MetricReport", "psnr", "ssim", "l2_error"]

PSNR_CAP_DB = 200.0
_ZERO_MSE = 1e-20


@dataclass(frozen=True)
class MetricReport:
    psnr: float
    ssim: float | None
    l2_error: float
    residual_sq: float

    def to_dict(self) -> dict:
        return {
            "psnr": self.psnr,
            "ssim": self.ssim,
            "l2_error": self.l2_error,
            "residual_sq": self.residual_sq,
            "perceptual_metric": "omitted (needs a pretrained network); "
            "l2_error and residual_sq stand in",
        }


def psnr(reference, estimate, max_value: float = 1.0) -> float:
    """10 log10(max^2 / MSE), capped at 200 dB for exact matches."""
    reference = np.asarray(reference, dtype=float)
    estimate = np.asarray(estimate, dtype=float)
    if reference.shape != estimate.shape:
        raise ValueError(f"shape mismatch {reference.shape} vs {estimate.shape}")
    if max_value <= 0:
        raise ValueError("max_value must be positive")
    mse = float(np.mean((reference - estimate) ** 2))
    if mse < _ZERO_MSE:
        return PSNR_CAP_DB
    return float(10.0 * np.log10(max_value**2 / mse))


def l2_error(reference, estimate) -> float:
    reference = np.asarray(reference, dtype=float)
    estimate = np.asarray(estimate, dtype=float)
    if reference.shape != estimate.shape:
        raise ValueError(f"shape mismatch {reference.shape} vs {estimate.shape}")
    return float(np.linalg.norm(reference - estimate))


def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    half = size // 2
    x = np.arange(-half, half + 1, dtype=float)
    w = np.exp(-0.5 * (x / sigma) ** 2)
    return w / w.sum()


def _local_means(img: np.ndarray, win: np.ndarray) -> np.ndarray:
    """Valid-mode separable correlation with the (outer-product) window."""
    size = win.size
    h = img.shape[0] - size + 1
    out = np.zeros((h, img.shape[1]))
    for j, wj in enumerate(win):
        out += wj * img[j : j + h, :]
    w = img.shape[1] - size + 1
    out2 = np.zeros((h, w))
    for j, wj in enumerate(win):
        out2 += wj * out[:, j : j + w]
    return out2


def ssim(
    reference,
    estimate,
    window: int = 11,
    max_value: float = 1.0,
    sigma: float = 1.5,
) -> float:
    """Mean local structural similarity with the standard constants.

    Gaussian-weighted local statistics (window x window, sigma 1.5),
    C1 = (0.01 max)^2, C2 = (0.03 max)^2. 1-D signals are treated as
    1 x n images with a 1-D window. Inputs must be at least as large as
    the window along every axis.
    """
    x = np.asarray(reference, dtype=float)
    y = np.asarray(estimate, dtype=float)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {y.shape}")
    if window < 1 or window % 2 == 0:
        raise ValueError("window must be odd and >= 1")
    if max_value <= 0:
        raise ValueError("max_value must be positive")

    one_d = x.ndim == 1
    if one_d:
        x = x[None, :]
        y = y[None, :]
    if x.ndim != 2:
        raise ValueError("ssim expects 1-D or 2-D inputs")

    win = _gaussian_window(window, sigma)
    if one_d:
        if x.shape[1] < window:
            raise ValueError(f"signal length {x.shape[1]} smaller than window {window}")
        means = lambda img: _local_means_1d(img, win)
    else:
        if min(x.shape) < window:
            raise ValueError(f"image {x.shape} smaller than window {window}")
        means = lambda img: _local_means(img, win)

    c1 = (0.01 * max_value) ** 2
    c2 = (0.03 * max_value) ** 2
    mu_x = means(x)
    mu_y = means(y)
    var_x = means(x * x) - mu_x**2
    var_y = means(y * y) - mu_y**2
    cov = means(x * y) - mu_x * mu_y
    num = (2 * mu_x * mu_y + c1) * (2 * cov + c2)
    den = (mu_x**2 + mu_y**2 + c1) * (var_x + var_y + c2)
    return float(np.mean(num / den))


def _local_means_1d(img: np.ndarray, win: np.ndarray) -> np.ndarray:
    size = win.size
    w = img.shape[1] - size + 1
    out = np.zeros((img.shape[0], w))
    for j, wj in enumerate(win):
        out += wj * img[:, j : j + w]
    return out
