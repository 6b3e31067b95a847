"""Sandwich (Godambe) covariance estimation and the Gaussian closed form.

The asymptotic covariance of the fitted parameters is C = g^{-1} Sigma g^{-1}
where g is the curvature of the population objective at the optimum and Sigma
is the covariance of the per-datapoint objective gradient.  Both matrices are
estimated by Monte Carlo over B independent batches and aggregated by the
componentwise median, which is robust to occasional outlier batches.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .errors import ConvMmdError, CurvatureNotInvertibleError
from .kernels import KernelMixture, gram
from .mmd import _as_matrix
from .noise import NoiseModel, sample_noise
from .optim import estimate_gradient

EIG_FLOOR_FACTOR = 1e-10


@dataclass(frozen=True)
class SandwichEstimate:
    curvature_g: np.ndarray
    score_cov_sigma: np.ndarray
    covariance_c: np.ndarray
    n_batches_b: int
    batch_size: int

    def __post_init__(self):
        g = np.asarray(self.curvature_g, dtype=float)
        s = np.asarray(self.score_cov_sigma, dtype=float)
        c = np.asarray(self.covariance_c, dtype=float)
        if np.max(np.abs(g - g.T)) > 1e-8:
            raise ConvMmdError("curvature matrix is not symmetric")
        if np.min(np.linalg.eigvalsh(s)) < -1e-8:
            raise ConvMmdError("score covariance has significantly negative eigenvalues")
        if np.max(np.abs(c - c.T)) > 1e-8:
            raise ConvMmdError("covariance matrix is not symmetric")


def _stable_inverse(g: np.ndarray) -> np.ndarray:
    eigvals, eigvecs = np.linalg.eigh(g)
    max_eig = float(np.max(np.abs(eigvals)))
    if max_eig <= 0 or np.min(eigvals) <= 0:
        cond = np.inf if np.min(np.abs(eigvals)) == 0 else max_eig / np.min(np.abs(eigvals))
        raise CurvatureNotInvertibleError(
            f"curvature not invertible (min eigenvalue {np.min(eigvals):.3e})",
            condition_number=cond,
        )
    floor = EIG_FLOOR_FACTOR * max_eig
    if np.min(eigvals) < floor:
        warnings.warn(
            "curvature eigenvalues floored during inversion; "
            "covariance may be regularization-dominated"
        )
        eigvals = np.maximum(eigvals, floor)
    return (eigvecs / eigvals) @ eigvecs.T


def _per_datapoint_scores(model, theta, xs, noise, kernel, m, rng):
    """N x p matrix of per-datapoint gradient contributions s(x_i, theta).

    Uses one shared model batch: s_i = (2/M) sum_j [A_j - k(x_i, y_j)] S_j
    with A_j the leave-one-out batch kernel mean at y_j.
    """
    ys = model.sample(theta, m, rng)
    noisy_ys = ys + sample_noise(noise, m, rng)
    scores = model.score(theta, ys)
    kyy = gram(noisy_ys, noisy_ys, kernel)
    a = (kyy.sum(axis=1) - np.diag(kyy)) / (m - 1)
    kxy = gram(xs, noisy_ys, kernel)
    return (2.0 / m) * ((a[None, :] - kxy) @ scores)


def sandwich_covariance(model, theta_hat, noisy_data, noise: NoiseModel,
                        kernel: KernelMixture, b: int = 50, m: int = None,
                        rng=None) -> SandwichEstimate:
    """Median-aggregated Monte-Carlo sandwich covariance at theta_hat.

    Per batch: the curvature is a symmetrized central finite difference of
    estimate_gradient with common random numbers (step 1e-3 * (1 + |theta_j|)
    per coordinate); the score covariance is the centered empirical
    covariance of per-datapoint scores.  Both are aggregated by the
    componentwise median over b batches before the sandwich product.
    """
    xs = _as_matrix(noisy_data, "noisy_data")
    theta = np.asarray(theta_hat, dtype=float)
    p = theta.size
    if b < 1:
        raise ConvMmdError("need at least one batch")
    if m is None:
        m = xs.shape[0]
    if m < 2:
        raise ConvMmdError("batch size must be >= 2")
    if rng is None:
        rng = np.random.default_rng(0)

    steps = 1e-3 * (1.0 + np.abs(theta))
    g_batches = np.empty((b, p, p))
    s_batches = np.empty((b, p, p))
    for batch in range(b):
        g = np.empty((p, p))
        for j in range(p):
            seed = int(rng.integers(2**63))
            e = np.zeros(p)
            e[j] = steps[j]
            plus = estimate_gradient(model, theta + e, xs, noise, kernel, m,
                                     np.random.default_rng(seed))
            minus = estimate_gradient(model, theta - e, xs, noise, kernel, m,
                                      np.random.default_rng(seed))
            g[:, j] = (plus - minus) / (2.0 * steps[j])
        g_batches[batch] = 0.5 * (g + g.T)

        scores = _per_datapoint_scores(model, theta, xs, noise, kernel, m, rng)
        centered = scores - scores.mean(axis=0, keepdims=True)
        s_batches[batch] = centered.T @ centered / (scores.shape[0] - 1)

    g_med = np.median(g_batches, axis=0)
    g_med = 0.5 * (g_med + g_med.T)
    s_med = np.median(s_batches, axis=0)
    s_med = 0.5 * (s_med + s_med.T)

    g_inv = _stable_inverse(g_med)
    c = g_inv @ s_med @ g_inv
    c = 0.5 * (c + c.T)
    return SandwichEstimate(
        curvature_g=g_med,
        score_cov_sigma=s_med,
        covariance_c=c,
        n_batches_b=b,
        batch_size=m,
    )


def closed_form_gaussian_cov(sigma: float, tau: float, ell: float, d: int = 1) -> np.ndarray:
    """Asymptotic covariance of the mean estimate for Gaussian data, Gaussian
    noise, and a Gaussian kernel.

    (sigma^2 + tau^2) * [(l^2 + s2)(l^2 + 3 s2)]^{-d/2 - 1} * (l^2 + 2 s2)^{d+2}
    times the identity, with s2 = sigma^2 + tau^2.
    """
    if sigma <= 0 or ell <= 0:
        raise ConvMmdError("sigma and ell must be positive")
    if tau < 0:
        raise ConvMmdError("tau must be nonnegative")
    if d < 1:
        raise ConvMmdError("dimension must be >= 1")
    s2 = sigma**2 + tau**2
    l2 = ell**2
    value = s2 * ((l2 + s2) * (l2 + 3.0 * s2)) ** (-d / 2.0 - 1.0) * (l2 + 2.0 * s2) ** (d + 2)
    return value * np.eye(d)


def ci_from_covariance(theta_hat, c, n: int, level: float):
    """Per-coordinate normal-approximation confidence intervals.

    theta_j +/- z_{(1+level)/2} sqrt(C_jj / N).
    """
    theta = np.asarray(theta_hat, dtype=float)
    c = np.atleast_2d(np.asarray(c, dtype=float))
    if not 0.0 <= level < 1.0:
        raise ConvMmdError(f"level must lie in [0, 1), got {level}")
    if n < 1:
        raise ConvMmdError("sample size must be >= 1")
    diag = np.diag(c)
    if np.any(diag < 0):
        raise ConvMmdError("covariance has negative diagonal entries")
    z = norm.ppf(0.5 * (1.0 + level))
    half = z * np.sqrt(diag / n)
    return np.column_stack([theta - half, theta + half])
