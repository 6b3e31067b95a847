"""Gaussian kernels, multi-scale median-heuristic bandwidths, and noise-convolved bandwidths.

The kernel is the unnormalized Gaussian with peak value 1, so the uniform
bound K = 1 used by the deviation and variance bounds is exact.  In d > 1 the
kernel is a product of per-coordinate 1-d Gaussians with per-coordinate
bandwidths.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateDataError, DimensionMismatchError, InvalidBandwidthError

MULTISCALE_FACTORS = (0.5, 1.0, 1.5)
MEDIAN_SUBSAMPLE_LIMIT = 5000


@dataclass(frozen=True)
class KernelMixture:
    """Uniform mixture of product-Gaussian kernels.

    bandwidths has shape (n_components, dim): one bandwidth per mixture
    component and coordinate.  weights are nonnegative and sum to 1.
    bound_k = 1 for the unnormalized Gaussian.
    """

    bandwidths: np.ndarray
    weights: np.ndarray = None
    bound_k: float = field(default=1.0)

    def __post_init__(self):
        bw = np.atleast_2d(np.asarray(self.bandwidths, dtype=float))
        object.__setattr__(self, "bandwidths", bw)
        if self.weights is None:
            w = np.full(bw.shape[0], 1.0 / bw.shape[0])
        else:
            w = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "weights", w)
        if np.any(bw <= 0) or not np.all(np.isfinite(bw)):
            raise InvalidBandwidthError(f"bandwidths must be strictly positive, got {bw}")
        if w.shape != (bw.shape[0],):
            raise DimensionMismatchError(
                f"{w.size} weights for {bw.shape[0]} mixture components"
            )
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise InvalidBandwidthError("mixture weights must be nonnegative and sum to 1")

    @property
    def dim(self) -> int:
        return self.bandwidths.shape[1]

    @property
    def n_components(self) -> int:
        return self.bandwidths.shape[0]

    @property
    def bandwidths_per_dim(self) -> list:
        """Per-coordinate list of the component bandwidths."""
        return [list(self.bandwidths[:, j]) for j in range(self.dim)]

    @classmethod
    def single(cls, bandwidths) -> "KernelMixture":
        """One-component kernel with the given per-coordinate bandwidths."""
        bw = np.atleast_1d(np.asarray(bandwidths, dtype=float))
        return cls(bandwidths=bw[None, :])

    @classmethod
    def from_data(cls, data, factors=MULTISCALE_FACTORS, seed: int = 0) -> "KernelMixture":
        """Multi-scale mixture with per-coordinate median-heuristic bandwidths."""
        data = np.asarray(data, dtype=float)
        if data.ndim == 1:
            data = data[:, None]
        dim = data.shape[1]
        med = np.array([_coordinate_bandwidth(data[:, j], seed) for j in range(dim)])
        bw = np.array([[f * m for m in med] for f in factors])
        return cls(bandwidths=bw)


def _coordinate_bandwidth(column, seed: int) -> float:
    """Median-heuristic bandwidth for one coordinate.

    Low-cardinality coordinates (e.g. a binary response) have a zero median
    pairwise distance; fall back to the median of the nonzero distances
    (1.0 for a 0/1 indicator).  A constant column stays an error.
    """
    try:
        return median_heuristic(column, seed=seed)
    except DegenerateDataError:
        values = np.unique(np.asarray(column, dtype=float))
        if values.size < 2:
            raise
        dist = np.abs(values[:, None] - values[None, :])
        return float(np.median(dist[dist > 0]))


def _check_points(x, y):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if x.shape != y.shape:
        raise DimensionMismatchError(f"point dimensions differ: {x.shape} vs {y.shape}")
    return x, y


def gaussian_kernel(x, y, bandwidths) -> float:
    """Product Gaussian kernel: prod_j exp(-(x_j - y_j)^2 / (2 l_j^2))."""
    x, y = _check_points(x, y)
    bw = np.broadcast_to(np.atleast_1d(np.asarray(bandwidths, dtype=float)), x.shape)
    if np.any(bw <= 0):
        raise InvalidBandwidthError(f"bandwidths must be positive, got {bandwidths}")
    z = (x - y) / bw
    return float(np.exp(-0.5 * np.sum(z * z)))


def mixture_kernel(x, y, mixture: KernelMixture) -> float:
    """Weighted average of gaussian_kernel over the mixture's bandwidth set."""
    x, y = _check_points(x, y)
    if x.size != mixture.dim:
        raise DimensionMismatchError(
            f"points have dim {x.size} but kernel expects {mixture.dim}"
        )
    total = 0.0
    for w, bw in zip(mixture.weights, mixture.bandwidths):
        total += w * gaussian_kernel(x, y, bw)
    return float(total)


def gram(xs, ys, mixture: KernelMixture, dtype=np.float64) -> np.ndarray:
    """Kernel matrix K[i, j] = mixture_kernel(xs[i], ys[j]), vectorized."""
    xs = np.atleast_2d(np.asarray(xs, dtype=dtype))
    ys = np.atleast_2d(np.asarray(ys, dtype=dtype))
    if xs.shape[1] != ys.shape[1] or xs.shape[1] != mixture.dim:
        raise DimensionMismatchError(
            f"gram: dims {xs.shape[1]}, {ys.shape[1]} vs kernel dim {mixture.dim}"
        )
    sq = [
        (xs[:, j, None] - ys[None, :, j]) ** 2 for j in range(mixture.dim)
    ]
    out = np.zeros((xs.shape[0], ys.shape[0]), dtype=dtype)
    for w, bw in zip(mixture.weights, mixture.bandwidths):
        expo = sq[0] / dtype(2.0 * bw[0] ** 2)
        for j in range(1, mixture.dim):
            expo = expo + sq[j] / dtype(2.0 * bw[j] ** 2)
        out += dtype(w) * np.exp(-expo)
    return out


def median_heuristic(data, seed: int = 0) -> float:
    """Median of all pairwise Euclidean distances.

    For more than MEDIAN_SUBSAMPLE_LIMIT points the median is taken over a
    seeded uniform subsample; the result stays deterministic for a fixed seed.
    """
    data = np.asarray(data, dtype=float)
    if data.ndim == 1:
        data = data[:, None]
    n = data.shape[0]
    if n < 2:
        raise DegenerateDataError("median heuristic needs at least 2 points")
    if n > MEDIAN_SUBSAMPLE_LIMIT:
        rng = np.random.default_rng(seed)
        idx = rng.choice(n, size=MEDIAN_SUBSAMPLE_LIMIT, replace=False)
        data = data[np.sort(idx)]
        n = MEDIAN_SUBSAMPLE_LIMIT
    diff = data[:, None, :] - data[None, :, :]
    dist = np.sqrt(np.sum(diff * diff, axis=2))
    iu = np.triu_indices(n, k=1)
    med = float(np.median(dist[iu]))
    if med <= 0.0:
        raise DegenerateDataError(
            "degenerate data: median pairwise distance is zero; "
            "supply an explicit bandwidth"
        )
    return med


def multiscale_bandwidths(sigma_med: float, factors=MULTISCALE_FACTORS) -> list:
    """Bandwidth set {0.5, 1, 1.5} x sigma_med, ascending."""
    if sigma_med <= 0:
        raise InvalidBandwidthError(f"sigma_med must be positive, got {sigma_med}")
    return [f * sigma_med for f in factors]


def convolved_gaussian_bandwidth(ell: float, tau: float) -> float:
    """Bandwidth of the noise-smoothed kernel for mean-zero Gaussian noise.

    Adding independent N(0, tau^2) noise to both arguments of a Gaussian
    kernel with bandwidth ell averages to a Gaussian kernel with bandwidth
    sqrt(ell^2 + 2 tau^2).
    """
    if ell <= 0:
        raise InvalidBandwidthError(f"bandwidth must be positive, got {ell}")
    if tau < 0:
        raise InvalidBandwidthError(f"noise scale must be nonnegative, got {tau}")
    return math.sqrt(ell * ell + 2.0 * tau * tau)


def lipschitz_constant_gaussian(ell: float) -> float:
    """Sup of |d/dz exp(-z^2/(2 ell^2))|, attained at z = ell."""
    if ell <= 0:
        raise InvalidBandwidthError(f"bandwidth must be positive, got {ell}")
    return math.exp(-0.5) / ell
