"""Hot numeric kernels with numba and pure-numpy twins.

Every kernel is written once in nopython-compatible style; ``jit_kernel``
compiles it when the numba backend is active. The ``*_py`` names always
point at the uncompiled source for parity testing and benchmarking.

Shapes: ``z`` and ``v`` are 1-D float64 latents of length ``d``;
mixture parameters are ``(K, d)`` float64 arrays; ``logw`` has length
``K``. Randomness never happens inside a kernel - callers pass uniforms
drawn from their own generator, which keeps backends interchangeable.
"""

import numpy as np

from ._backend import backend_name, jit_kernel

_LOG_2PI = 1.8378770664093453


def gaussian_logpdf_score_py(z, mu, var):
    """Log-density and score of a diagonal Gaussian at ``z``."""
    d = z.shape[0]
    logp = 0.0
    score = np.empty(d)
    for j in range(d):
        diff = z[j] - mu[j]
        score[j] = -diff / var[j]
        logp += -0.5 * (diff * diff / var[j] + np.log(var[j]) + _LOG_2PI)
    return logp, score


def gmm_logpdf_score_py(z, mus, variances, logw):
    """Log-density and score of a diagonal-covariance Gaussian mixture.

    Responsibilities are formed in log space (log-sum-exp) so widely
    separated components cannot underflow to a 0/0 score.
    """
    K, d = mus.shape
    logps = np.empty(K)
    for k in range(K):
        acc = logw[k]
        for j in range(d):
            diff = z[j] - mus[k, j]
            acc += -0.5 * (diff * diff / variances[k, j] + np.log(variances[k, j]) + _LOG_2PI)
        logps[k] = acc
    m = logps[0]
    for k in range(1, K):
        if logps[k] > m:
            m = logps[k]
    norm = 0.0
    for k in range(K):
        norm += np.exp(logps[k] - m)
    logpdf = m + np.log(norm)
    score = np.zeros(d)
    for k in range(K):
        r = np.exp(logps[k] - logpdf)
        for j in range(d):
            score[j] += r * (-(z[j] - mus[k, j]) / variances[k, j])
    return logpdf, score


def gmm_hessian_vp_py(z, mus, variances, logw, v):
    """Hessian of the mixture log-density times ``v``.

    H = sum_k r_k H_k + sum_k r_k s_k s_k^T - s s^T with per-component
    H_k = -diag(1/var_k), component scores s_k and mixture score s.
    """
    K, d = mus.shape
    logps = np.empty(K)
    for k in range(K):
        acc = logw[k]
        for j in range(d):
            diff = z[j] - mus[k, j]
            acc += -0.5 * (diff * diff / variances[k, j] + np.log(variances[k, j]) + _LOG_2PI)
        logps[k] = acc
    m = logps[0]
    for k in range(1, K):
        if logps[k] > m:
            m = logps[k]
    norm = 0.0
    for k in range(K):
        norm += np.exp(logps[k] - m)
    logpdf = m + np.log(norm)

    out = np.zeros(d)
    sbar = np.zeros(d)
    sbar_dot_v = 0.0
    for k in range(K):
        r = np.exp(logps[k] - logpdf)
        sk_dot_v = 0.0
        for j in range(d):
            sk = -(z[j] - mus[k, j]) / variances[k, j]
            sk_dot_v += sk * v[j]
            sbar[j] += r * sk
        for j in range(d):
            sk = -(z[j] - mus[k, j]) / variances[k, j]
            out[j] += r * (-v[j] / variances[k, j] + sk * sk_dot_v)
    for j in range(d):
        sbar_dot_v += sbar[j] * v[j]
    for j in range(d):
        out[j] -= sbar[j] * sbar_dot_v
    return out


def indices_from_uniforms_py(cumw, u):
    """Map uniforms in [0,1) to ancestor indices via the weight CDF.

    Plain binary search per draw; ``u`` need not be sorted. The last
    index is clamped so cumulative round-off cannot fall off the end.
    """
    n = cumw.shape[0]
    out = np.empty(u.shape[0], dtype=np.int64)
    for i in range(u.shape[0]):
        lo = 0
        hi = n - 1
        x = u[i]
        while lo < hi:
            mid = (lo + hi) // 2
            if cumw[mid] > x:
                hi = mid
            else:
                lo = mid + 1
        out[i] = lo
    return out


gaussian_logpdf_score = jit_kernel(gaussian_logpdf_score_py)
gmm_logpdf_score = jit_kernel(gmm_logpdf_score_py)
gmm_hessian_vp = jit_kernel(gmm_hessian_vp_py)
indices_from_uniforms = jit_kernel(indices_from_uniforms_py)

__all__ = [
    "backend_name",
    "gaussian_logpdf_score",
    "gaussian_logpdf_score_py",
    "gmm_logpdf_score",
    "gmm_logpdf_score_py",
    "gmm_hessian_vp",
    "gmm_hessian_vp_py",
    "indices_from_uniforms",
    "indices_from_uniforms_py",
]
