"""Parametric latent families: sampling, log-density, and analytic scores.

All models use an unconstrained parameter vector so plain gradient steps need
no projection: mixture weights are softmax of logits and scales are exp of
log-scales.  Scores are exact analytic gradients of the log-density with
respect to the unconstrained coordinates.

Parameter layouts:
  GaussianMixtureModel1D(K): [logits(K), means(K), log_sds(K)]
  GaussianScaleModel:        [log_sigma]             (mean fixed at 0)
  GaussianLocationModel:     [mu]                    (sd fixed)
  LinearEivModel(K):         [alpha, beta, log_sigma_reg, gmm block(3K) for X]
  LogisticEivModel(Ks):      [alpha, beta_f per feature, gmm block per feature]
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, logsumexp, softmax

from .errors import ConvMmdError, DimensionMismatchError


def _check_theta(theta, n_params):
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (n_params,):
        raise DimensionMismatchError(
            f"parameter vector has shape {theta.shape}, expected ({n_params},)"
        )
    if not np.all(np.isfinite(theta)):
        raise ConvMmdError("parameter vector has non-finite entries")
    return theta


def _gmm_unpack(block):
    k = block.size // 3
    logits, means, log_sds = block[:k], block[k:2 * k], block[2 * k:]
    return softmax(logits), means, np.exp(log_sds)


def _gmm_sample(block, n, rng):
    weights, means, sds = _gmm_unpack(block)
    comp = rng.choice(weights.size, size=n, p=weights)
    return rng.standard_normal(n) * sds[comp] + means[comp]


def _gmm_log_density(block, y):
    """Log mixture density at each point of the 1-d array y."""
    weights, means, sds = _gmm_unpack(block)
    z = (y[:, None] - means[None, :]) / sds[None, :]
    log_comp = (
        np.log(weights)[None, :]
        - np.log(sds)[None, :]
        - 0.5 * np.log(2.0 * np.pi)
        - 0.5 * z * z
    )
    return logsumexp(log_comp, axis=1)


def _gmm_score(block, y):
    """Per-point gradient of the log mixture density w.r.t. the gmm block.

    Uses responsibilities r_k(y): d/dlogit_k = r_k - w_k,
    d/dmu_k = r_k (y - mu_k) / s_k^2, d/dlog s_k = r_k ((y - mu_k)^2/s_k^2 - 1).
    """
    weights, means, sds = _gmm_unpack(block)
    z = (y[:, None] - means[None, :]) / sds[None, :]
    log_comp = (
        np.log(weights)[None, :]
        - np.log(sds)[None, :]
        - 0.5 * z * z
    )
    log_norm = logsumexp(log_comp, axis=1, keepdims=True)
    resp = np.exp(log_comp - log_norm)
    d_logits = resp - weights[None, :]
    d_means = resp * z / sds[None, :]
    d_log_sds = resp * (z * z - 1.0)
    return np.concatenate([d_logits, d_means, d_log_sds], axis=1)


def gmm_theta(weights, means, sds):
    """Pack (weights, means, sds) into the unconstrained gmm parameter block."""
    weights = np.asarray(weights, dtype=float)
    return np.concatenate([np.log(weights), np.asarray(means, dtype=float),
                           np.log(np.asarray(sds, dtype=float))])


def gmm_params(block):
    """Unpack a gmm block into (weights, means, sds)."""
    return _gmm_unpack(np.asarray(block, dtype=float))


@dataclass(frozen=True)
class GaussianMixtureModel1D:
    """Univariate K-component Gaussian mixture."""

    n_components: int

    def __post_init__(self):
        if self.n_components < 1:
            raise ConvMmdError("need at least one mixture component")

    @property
    def dim(self) -> int:
        return 1

    @property
    def n_params(self) -> int:
        return 3 * self.n_components

    def sample(self, theta, n, rng):
        theta = _check_theta(theta, self.n_params)
        return _gmm_sample(theta, n, rng)[:, None]

    def log_density(self, theta, ys):
        theta = _check_theta(theta, self.n_params)
        y = np.asarray(ys, dtype=float).reshape(-1)
        return _gmm_log_density(theta, y)

    def score(self, theta, ys):
        theta = _check_theta(theta, self.n_params)
        y = np.asarray(ys, dtype=float).reshape(-1)
        return _gmm_score(theta, y)


@dataclass(frozen=True)
class GaussianScaleModel:
    """N(0, sigma^2) with theta = [log sigma]; the scale-estimation model."""

    @property
    def dim(self) -> int:
        return 1

    @property
    def n_params(self) -> int:
        return 1

    def sample(self, theta, n, rng):
        theta = _check_theta(theta, 1)
        return (rng.standard_normal(n) * np.exp(theta[0]))[:, None]

    def log_density(self, theta, ys):
        theta = _check_theta(theta, 1)
        y = np.asarray(ys, dtype=float).reshape(-1)
        sigma = np.exp(theta[0])
        return -0.5 * np.log(2.0 * np.pi) - theta[0] - 0.5 * (y / sigma) ** 2

    def score(self, theta, ys):
        theta = _check_theta(theta, 1)
        y = np.asarray(ys, dtype=float).reshape(-1)
        sigma = np.exp(theta[0])
        return ((y / sigma) ** 2 - 1.0)[:, None]


@dataclass(frozen=True)
class GaussianLocationModel:
    """N(mu, sigma^2) with fixed sigma and theta = [mu]; the mean model."""

    sigma: float = 1.0

    def __post_init__(self):
        if self.sigma <= 0:
            raise ConvMmdError(f"sigma must be positive, got {self.sigma}")

    @property
    def dim(self) -> int:
        return 1

    @property
    def n_params(self) -> int:
        return 1

    def sample(self, theta, n, rng):
        theta = _check_theta(theta, 1)
        return (rng.standard_normal(n) * self.sigma + theta[0])[:, None]

    def log_density(self, theta, ys):
        theta = _check_theta(theta, 1)
        y = np.asarray(ys, dtype=float).reshape(-1)
        z = (y - theta[0]) / self.sigma
        return -0.5 * np.log(2.0 * np.pi) - np.log(self.sigma) - 0.5 * z * z

    def score(self, theta, ys):
        theta = _check_theta(theta, 1)
        y = np.asarray(ys, dtype=float).reshape(-1)
        return ((y - theta[0]) / self.sigma**2)[:, None]


@dataclass(frozen=True)
class LinearEivModel:
    """Joint model for (X, Y): X ~ K-component GMM, Y = alpha + beta X + eps.

    theta = [alpha, beta, log sigma_reg, gmm block(3K)]; data columns (x, y).
    """

    n_components: int

    def __post_init__(self):
        if self.n_components < 1:
            raise ConvMmdError("need at least one mixture component")

    @property
    def dim(self) -> int:
        return 2

    @property
    def n_params(self) -> int:
        return 3 + 3 * self.n_components

    def _split(self, theta):
        return theta[0], theta[1], np.exp(theta[2]), theta[3:]

    def sample(self, theta, n, rng):
        theta = _check_theta(theta, self.n_params)
        alpha, beta, sigma, gmm = self._split(theta)
        x = _gmm_sample(gmm, n, rng)
        y = alpha + beta * x + rng.standard_normal(n) * sigma
        return np.column_stack([x, y])

    def log_density(self, theta, ys):
        theta = _check_theta(theta, self.n_params)
        alpha, beta, sigma, gmm = self._split(theta)
        pts = np.atleast_2d(np.asarray(ys, dtype=float))
        x, y = pts[:, 0], pts[:, 1]
        resid = (y - alpha - beta * x) / sigma
        log_reg = -0.5 * np.log(2.0 * np.pi) - np.log(sigma) - 0.5 * resid * resid
        return _gmm_log_density(gmm, x) + log_reg

    def score(self, theta, ys):
        theta = _check_theta(theta, self.n_params)
        alpha, beta, sigma, gmm = self._split(theta)
        pts = np.atleast_2d(np.asarray(ys, dtype=float))
        x, y = pts[:, 0], pts[:, 1]
        e = (y - alpha - beta * x) / sigma
        d_alpha = e / sigma
        d_beta = x * e / sigma
        d_log_sigma = e * e - 1.0
        return np.column_stack(
            [d_alpha, d_beta, d_log_sigma, _gmm_score(gmm, x)]
        )


@dataclass(frozen=True)
class LogisticEivModel:
    """Joint model over (features, binary response).

    Features are independent univariate GMMs; the response is
    Bernoulli(sigmoid(alpha + beta . x)).  Data columns: features then the
    response last.  theta = [alpha, beta per feature, gmm block per feature].
    """

    n_components: tuple  # per-feature K

    def __post_init__(self):
        ks = tuple(int(k) for k in np.atleast_1d(self.n_components))
        object.__setattr__(self, "n_components", ks)
        if len(ks) < 1 or any(k < 1 for k in ks):
            raise ConvMmdError("each feature needs at least one mixture component")

    @property
    def n_features(self) -> int:
        return len(self.n_components)

    @property
    def dim(self) -> int:
        return self.n_features + 1

    @property
    def n_params(self) -> int:
        return 1 + self.n_features + 3 * sum(self.n_components)

    def _blocks(self, theta):
        f = self.n_features
        alpha = theta[0]
        betas = theta[1:1 + f]
        blocks = []
        off = 1 + f
        for k in self.n_components:
            blocks.append(theta[off:off + 3 * k])
            off += 3 * k
        return alpha, betas, blocks

    def sample(self, theta, n, rng):
        theta = _check_theta(theta, self.n_params)
        alpha, betas, blocks = self._blocks(theta)
        xs = np.column_stack([_gmm_sample(b, n, rng) for b in blocks])
        p = expit(alpha + xs @ betas)
        y = (rng.random(n) < p).astype(float)
        return np.column_stack([xs, y])

    def log_density(self, theta, ys):
        theta = _check_theta(theta, self.n_params)
        alpha, betas, blocks = self._blocks(theta)
        pts = np.atleast_2d(np.asarray(ys, dtype=float))
        xs, y = pts[:, :-1], pts[:, -1]
        if not np.all((y == 0.0) | (y == 1.0)):
            raise ConvMmdError("responses must be 0 or 1")
        eta = alpha + xs @ betas
        # y*log p + (1-y)*log(1-p) in a numerically stable form
        log_bern = np.where(y == 1.0, -np.logaddexp(0.0, -eta), -np.logaddexp(0.0, eta))
        total = log_bern
        for j, b in enumerate(blocks):
            total = total + _gmm_log_density(b, xs[:, j])
        return total

    def score(self, theta, ys):
        theta = _check_theta(theta, self.n_params)
        alpha, betas, blocks = self._blocks(theta)
        pts = np.atleast_2d(np.asarray(ys, dtype=float))
        xs, y = pts[:, :-1], pts[:, -1]
        if not np.all((y == 0.0) | (y == 1.0)):
            raise ConvMmdError("responses must be 0 or 1")
        resid = y - expit(alpha + xs @ betas)
        cols = [resid[:, None], resid[:, None] * xs]
        for j, b in enumerate(blocks):
            cols.append(_gmm_score(b, xs[:, j]))
        return np.concatenate(cols, axis=1)
