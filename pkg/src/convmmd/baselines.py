"""Noise-ignorant reference estimators: EM for univariate GMMs, ordinary
least squares, and logistic-regression MLE.

These serve two purposes: comparison rows in the simulation tables and warm
starts for the kernel-discrepancy optimizer.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, logsumexp

from .errors import ConvMmdError, DegenerateDataError, SeparationError

_VAR_FLOOR_FACTOR = 1e-6


@dataclass(frozen=True)
class EmResult:
    weights: np.ndarray  # sorted ascending
    means: np.ndarray
    sds: np.ndarray
    log_likelihood: list
    n_iter_used: int
    converged: bool


def _em_log_likelihood(y, weights, means, sds):
    z = (y[:, None] - means[None, :]) / sds[None, :]
    log_comp = (
        np.log(weights)[None, :]
        - np.log(sds)[None, :]
        - 0.5 * np.log(2.0 * np.pi)
        - 0.5 * z * z
    )
    return logsumexp(log_comp, axis=1)


def _kmeanspp_centers(y, k, rng):
    centers = [y[rng.integers(y.size)]]
    for _ in range(1, k):
        d2 = np.min((y[:, None] - np.array(centers)[None, :]) ** 2, axis=1)
        total = d2.sum()
        if total <= 0:
            centers.append(y[rng.integers(y.size)])
        else:
            centers.append(y[rng.choice(y.size, p=d2 / total)])
    return np.array(centers)


def _em_once(y, k, init_means, max_iter, tol, var_floor):
    n = y.size
    weights = np.full(k, 1.0 / k)
    means = init_means.copy()
    sds = np.full(k, max(np.std(y), np.sqrt(var_floor)))
    ll_trace = []
    prev_ll = -np.inf
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        z = (y[:, None] - means[None, :]) / sds[None, :]
        log_comp = (
            np.log(weights)[None, :]
            - np.log(sds)[None, :]
            - 0.5 * np.log(2.0 * np.pi)
            - 0.5 * z * z
        )
        log_norm = logsumexp(log_comp, axis=1, keepdims=True)
        ll = float(log_norm.sum())
        ll_trace.append(ll)
        resp = np.exp(log_comp - log_norm)
        nk = resp.sum(axis=0)
        nk = np.maximum(nk, 1e-12)
        weights = nk / n
        means = (resp * y[:, None]).sum(axis=0) / nk
        var = (resp * (y[:, None] - means[None, :]) ** 2).sum(axis=0) / nk
        sds = np.sqrt(np.maximum(var, var_floor))
        if ll - prev_ll < tol and it > 1:
            converged = True
            break
        prev_ll = ll
    return weights, means, sds, ll_trace, it, converged


def em_gmm(data, k: int, max_iter: int = 500, tol: float = 1e-8,
           rng=None) -> EmResult:
    """EM fit of a K-component univariate Gaussian mixture.

    First restart initializes means at evenly spaced quantiles; further
    restarts use distance-weighted (k-means++-style) seeding.  Components are
    sorted by ascending weight in the result.
    """
    y = np.asarray(data, dtype=float).reshape(-1)
    n = y.size
    if k < 1 or n <= k:
        raise ConvMmdError(f"need N > K >= 1, got N={n}, K={k}")
    data_var = float(np.var(y))
    if data_var <= 0:
        raise DegenerateDataError("all data points identical; EM is degenerate")
    var_floor = _VAR_FLOOR_FACTOR * data_var
    if rng is None:
        rng = np.random.default_rng(0)

    best = None
    n_restarts = 5
    for r in range(n_restarts):
        if r == 0:
            qs = (np.arange(k) + 0.5) / k
            init_means = np.quantile(y, qs)
        else:
            init_means = _kmeanspp_centers(y, k, rng)
        weights, means, sds, ll_trace, it, conv = _em_once(
            y, k, init_means, max_iter, tol, var_floor
        )
        if best is None or ll_trace[-1] > best[3][-1]:
            best = (weights, means, sds, ll_trace, it, conv)

    weights, means, sds, ll_trace, it, conv = best
    order = np.argsort(weights)
    return EmResult(
        weights=weights[order],
        means=means[order],
        sds=sds[order],
        log_likelihood=ll_trace,
        n_iter_used=it,
        converged=conv,
    )


def ols(x, y):
    """Closed-form simple linear regression; returns (alpha, beta, resid sd).

    Residual standard deviation uses the N - 2 denominator.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    y = np.asarray(y, dtype=float).reshape(-1)
    if x.size != y.size:
        raise ConvMmdError("x and y must have equal length")
    n = x.size
    if n < 3:
        raise ConvMmdError(f"need at least 3 points, got {n}")
    vx = np.var(x)
    if vx <= 0:
        raise DegenerateDataError("x has zero variance")
    beta = float(np.cov(x, y, bias=True)[0, 1] / vx)
    alpha = float(np.mean(y) - beta * np.mean(x))
    resid = y - alpha - beta * x
    sd = float(np.sqrt(np.sum(resid**2) / (n - 2)))
    return alpha, beta, sd


def logistic_mle(x, y, max_iter: int = 100, tol: float = 1e-8):
    """Logistic-regression MLE via damped Newton (IRLS with step halving).

    x is n x p (no intercept column; one is prepended); returns coefficients
    [intercept, slopes...].  Raises SeparationError when the likelihood keeps
    improving without the gradient vanishing (complete separation) or when
    only one class is present.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[0] == 1 and x.shape[1] > 1 and np.asarray(y).size == x.shape[1]:
        x = x.T
    y = np.asarray(y, dtype=float).reshape(-1)
    if x.shape[0] != y.size:
        raise ConvMmdError("x and y must have matching lengths")
    if not np.all((y == 0.0) | (y == 1.0)):
        raise ConvMmdError("responses must be 0 or 1")
    if y.min() == y.max():
        raise SeparationError("degenerate labels: only one class present")

    design = np.column_stack([np.ones(y.size), x])
    beta = np.zeros(design.shape[1])

    def negloglik(b):
        eta = design @ b
        return float(np.sum(np.logaddexp(0.0, eta) - y * eta))

    nll = negloglik(beta)
    for _ in range(max_iter):
        p = expit(design @ beta)
        grad = design.T @ (p - y)
        if np.linalg.norm(grad) < tol * y.size:
            # a vanishing gradient with every point classified at extreme
            # confidence means the MLE diverged (complete separation)
            eta = design @ beta
            if np.min(np.abs(eta)) > 10.0 and np.all((eta > 0) == (y == 1.0)):
                raise SeparationError(
                    "complete separation: fitted probabilities are all 0/1 "
                    "and coefficients diverge"
                )
            return beta
        w = np.maximum(p * (1.0 - p), 1e-10)
        hess = design.T @ (design * w[:, None])
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            raise SeparationError("singular Hessian in logistic MLE")
        # step halving keeps the negative log-likelihood nonincreasing
        scale = 1.0
        for _ in range(30):
            cand = beta - scale * step
            cand_nll = negloglik(cand)
            if cand_nll <= nll + 1e-12:
                beta, nll = cand, cand_nll
                break
            scale *= 0.5
        else:
            break
    raise SeparationError(
        "logistic MLE did not converge (possible complete separation)"
    )
