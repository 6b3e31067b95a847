"""Squared-MMD estimators between noisy samples and the analytic bounds.

Both the biased (V-statistic) and unbiased (paired U-statistic) estimators
operate directly on noisy samples; the simulated comparison sample is
produced by drawing clean model samples and adding fresh measurement noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConvMmdError, DegenerateDataError, DimensionMismatchError
from .kernels import KernelMixture, gram
from .noise import NoiseModel, sample_noise


@dataclass(frozen=True)
class MmdEstimate:
    value: float
    estimator_kind: str  # "biased" | "unbiased"
    n_x: int
    n_y: int
    kernel: KernelMixture

    def __post_init__(self):
        if self.estimator_kind == "biased":
            if self.value < -1e-12:
                raise ConvMmdError(f"biased MMD^2 must be >= 0, got {self.value}")
        elif self.estimator_kind == "unbiased":
            if self.value < -4.0 * self.kernel.bound_k:
                raise ConvMmdError(
                    f"unbiased MMD^2 below the -4K floor: {self.value}"
                )
        else:
            raise ConvMmdError(f"unknown estimator kind {self.estimator_kind!r}")


def _as_matrix(data, name):
    a = np.asarray(data, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2 or a.shape[0] < 1:
        raise DegenerateDataError(f"{name} must be a nonempty n x d array")
    return a


def mmd2_biased(xs, ys, kernel: KernelMixture) -> float:
    """Biased (V-statistic) squared MMD: all pairs including self-pairs."""
    xs = _as_matrix(xs, "xs")
    ys = _as_matrix(ys, "ys")
    if xs.shape[1] != ys.shape[1]:
        raise DimensionMismatchError(
            f"sample dims differ: {xs.shape[1]} vs {ys.shape[1]}"
        )
    kxx = gram(xs, xs, kernel)
    kyy = gram(ys, ys, kernel)
    kxy = gram(xs, ys, kernel)
    nx, ny = xs.shape[0], ys.shape[0]
    return float(kxx.mean() + kyy.mean() - 2.0 * kxy.sum() / (nx * ny))


def mmd2_unbiased(xs, ys, kernel: KernelMixture) -> float:
    """Paired one-sample U-statistic: (1/(N(N-1))) sum_{i != j} h(z_i, z_j).

    h(z_i, z_j) = k(x_i, x_j) + k(y_i, y_j) - k(x_i, y_j) - k(y_i, x_j).
    Requires equal sample sizes; use mmd2_biased for unequal samples.
    """
    xs = _as_matrix(xs, "xs")
    ys = _as_matrix(ys, "ys")
    if xs.shape[1] != ys.shape[1]:
        raise DimensionMismatchError(
            f"sample dims differ: {xs.shape[1]} vs {ys.shape[1]}"
        )
    n = xs.shape[0]
    if ys.shape[0] != n:
        raise ConvMmdError(
            "the paired U-statistic needs equal sample sizes; "
            "use mmd2_biased for unequal samples"
        )
    if n < 2:
        raise DegenerateDataError("paired U-statistic needs N >= 2")
    kxx = gram(xs, xs, kernel)
    kyy = gram(ys, ys, kernel)
    kxy = gram(xs, ys, kernel)
    # off-diagonal sums; the cross term uses k(x_i, y_j) + k(y_i, x_j), i != j
    off = (
        kxx.sum() - np.trace(kxx)
        + kyy.sum() - np.trace(kyy)
        - 2.0 * (kxy.sum() - np.trace(kxy))
    )
    return float(off / (n * (n - 1)))


def convmmd_objective(noisy_data, model, theta, noise: NoiseModel, kernel: KernelMixture,
                      m: int, rng) -> float:
    """Monte-Carlo estimate of the fitting objective L_N(theta).

    Simulates m clean model draws, adds fresh measurement noise, and returns
    the biased squared MMD between the observed noisy data and the simulated
    noisy sample.  Deterministic given the generator state.
    """
    if m < 2:
        raise ConvMmdError(f"batch size must be >= 2, got {m}")
    ys = model.sample(theta, m, rng)
    ys = np.atleast_2d(np.asarray(ys, dtype=float))
    if ys.shape[0] == 1 and m > 1:
        ys = ys.T
    noisy_ys = ys + sample_noise(noise, m, rng)
    return mmd2_biased(noisy_data, noisy_ys, kernel)


def deviation_bound(bound_k: float, n: int, gamma: float) -> float:
    """High-probability bound on |estimated MMD - population MMD|.

    sqrt(16 K / N) * (1 + sqrt(log(2 / gamma) / 4)).
    """
    if bound_k <= 0:
        raise ConvMmdError(f"kernel bound must be positive, got {bound_k}")
    if n < 1:
        raise ConvMmdError(f"sample size must be >= 1, got {n}")
    if not 0.0 < gamma < 1.0:
        raise ConvMmdError(f"level must lie in (0, 1), got {gamma}")
    return math.sqrt(16.0 * bound_k / n) * (1.0 + math.sqrt(0.25 * math.log(2.0 / gamma)))


def variance_inflation_bound(l_k: float, bound_k: float, n: int, mean_alpha: float) -> float:
    """Additive noise-induced inflation of the U-statistic second moment.

    (2 / (N(N-1))) * [32 L_k^2 a + 8 K sqrt(32 L_k^2 a)], a = E[alpha(phi)].
    """
    if l_k <= 0 or bound_k <= 0:
        raise ConvMmdError("Lipschitz constant and kernel bound must be positive")
    if n < 2:
        raise ConvMmdError(f"need N >= 2, got {n}")
    if mean_alpha < 0:
        raise ConvMmdError(f"mean_alpha must be nonnegative, got {mean_alpha}")
    inner = 32.0 * l_k * l_k * mean_alpha
    return (2.0 / (n * (n - 1))) * (inner + 8.0 * bound_k * math.sqrt(inner))


def noise_shift_bound(l_k: float, mean_alpha: float) -> float:
    """Bound on the shift between noiseless and noise-convolved squared MMD.

    4 L_k sqrt(2 E[alpha(phi)]).
    """
    if l_k < 0 or mean_alpha < 0:
        raise ConvMmdError("inputs must be nonnegative")
    return 4.0 * l_k * math.sqrt(2.0 * mean_alpha)
