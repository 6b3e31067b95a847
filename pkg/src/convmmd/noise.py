"""Measurement-noise models: sampling, second moments, characteristic functions.

Each coordinate gets its own additive mean-zero noise family.  Scales are
either fixed, drawn per observation from a scaled uniform hyper-law
(heteroscedastic case), or supplied per observation (known per-row scales).

Heteroscedastic scale convention: the uniform hyper-draw u ~ U(lo, hi) is
divided by the family's variance multiplier (sqrt(2) for Laplace, sqrt(3)
for Student's t) so the conditional noise variance equals u^2 for every
family, keeping effective variances comparable across families.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConvMmdError, UnsupportedFamilyError

GAUSSIAN = "gaussian"
UNIFORM = "uniform"
LAPLACE = "laplace"
STUDENT_T = "student_t"
CENTERED_POISSON = "centered_poisson"
NONE = "none"

_FAMILIES = (GAUSSIAN, UNIFORM, LAPLACE, STUDENT_T, CENTERED_POISSON, NONE)

# conditional variance = multiplier * scale^2
_VARIANCE_MULTIPLIER = {GAUSSIAN: 1.0, UNIFORM: 1.0 / 3.0, LAPLACE: 2.0, STUDENT_T: 3.0}


@dataclass(frozen=True)
class Fixed:
    value: float

    def __post_init__(self):
        if self.value <= 0:
            raise ConvMmdError(f"scale must be positive, got {self.value}")

    def draw(self, n, rng):
        return np.full(n, self.value)

    def mean_square(self) -> float:
        return self.value**2


@dataclass(frozen=True)
class HierarchicalUniform:
    """Scale = u / divisor with u ~ U(lo, hi), redrawn per observation."""

    lo: float
    hi: float
    divisor: float = 1.0

    def __post_init__(self):
        if not (0 < self.lo < self.hi):
            raise ConvMmdError(f"need 0 < lo < hi, got ({self.lo}, {self.hi})")
        if self.divisor <= 0:
            raise ConvMmdError("divisor must be positive")

    def draw(self, n, rng):
        return rng.uniform(self.lo, self.hi, size=n) / self.divisor

    def mean_square(self) -> float:
        # E[u^2] for u ~ U(lo, hi), then scaled by the divisor
        eu2 = (self.hi**3 - self.lo**3) / (3.0 * (self.hi - self.lo))
        return eu2 / self.divisor**2


@dataclass(frozen=True)
class PerObservation:
    """Known per-row scales (e.g. pipeline-reported uncertainties)."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", v)
        if v.ndim != 1 or np.any(v <= 0):
            raise ConvMmdError("per-observation scales must be a 1-d positive array")

    def draw(self, n, rng):
        if n == self.values.size:
            return self.values
        # model batches resample scales with replacement from the catalog
        return rng.choice(self.values, size=n, replace=True)

    def mean_square(self) -> float:
        return float(np.mean(self.values**2))


@dataclass(frozen=True)
class CoordinateNoise:
    family: str
    scale: object = None  # Fixed | HierarchicalUniform | PerObservation
    rate: float = None  # centered_poisson lambda
    multiplier: float = None  # centered_poisson c

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise UnsupportedFamilyError(f"unknown noise family {self.family!r}")
        if self.family == CENTERED_POISSON:
            if self.rate is None or self.rate <= 0 or self.multiplier is None:
                raise ConvMmdError("centered_poisson needs rate > 0 and a multiplier")
        elif self.family != NONE and self.scale is None:
            raise ConvMmdError(f"family {self.family!r} needs a scale law")

    def sample(self, n: int, rng) -> np.ndarray:
        if self.family == NONE:
            return np.zeros(n)
        if self.family == CENTERED_POISSON:
            return self.multiplier * (rng.poisson(self.rate, size=n) - self.rate)
        scale = self.scale.draw(n, rng)
        if self.family == GAUSSIAN:
            return rng.standard_normal(n) * scale
        if self.family == UNIFORM:
            return rng.uniform(-1.0, 1.0, size=n) * scale
        if self.family == LAPLACE:
            return rng.laplace(0.0, 1.0, size=n) * scale
        if self.family == STUDENT_T:
            return rng.standard_t(3, size=n) * scale
        raise UnsupportedFamilyError(self.family)

    def alpha(self) -> float:
        """E over the scale law of the conditional noise variance."""
        if self.family == NONE:
            return 0.0
        if self.family == CENTERED_POISSON:
            return self.multiplier**2 * self.rate
        return _VARIANCE_MULTIPLIER[self.family] * self.scale.mean_square()

    def characteristic_function(self, t: float) -> complex:
        """Closed-form characteristic function; fixed-scale analytic families only."""
        if self.family not in (GAUSSIAN, UNIFORM, LAPLACE):
            raise UnsupportedFamilyError(
                f"unsupported: no closed form exposed for family {self.family!r}"
            )
        if not isinstance(self.scale, Fixed):
            raise UnsupportedFamilyError(
                "unsupported: no closed form exposed for hierarchical scales"
            )
        s = self.scale.value
        if self.family == GAUSSIAN:
            return complex(math.exp(-0.5 * s * s * t * t))
        if self.family == UNIFORM:
            if t == 0.0:
                return complex(1.0)
            return complex(math.sin(s * t) / (s * t))
        return complex(1.0 / (1.0 + s * s * t * t))


@dataclass(frozen=True)
class NoiseModel:
    coords: tuple

    def __post_init__(self):
        object.__setattr__(self, "coords", tuple(self.coords))
        for c in self.coords:
            if not isinstance(c, CoordinateNoise):
                raise ConvMmdError("coords must be CoordinateNoise instances")

    @property
    def dim(self) -> int:
        return len(self.coords)

    @property
    def is_none(self) -> bool:
        return all(c.family == NONE for c in self.coords)

    @classmethod
    def none(cls, dim: int = 1) -> "NoiseModel":
        return cls(tuple(CoordinateNoise(NONE) for _ in range(dim)))

    @classmethod
    def gaussian_fixed(cls, phi: float, dim: int = 1) -> "NoiseModel":
        return cls(tuple(CoordinateNoise(GAUSSIAN, Fixed(phi)) for _ in range(dim)))


def sample_noise(model: NoiseModel, n: int, rng) -> np.ndarray:
    """n x d matrix of independent noise draws; fresh hyper-scales per draw."""
    if n < 1:
        raise ConvMmdError(f"need n >= 1, got {n}")
    cols = [c.sample(n, rng) for c in model.coords]
    return np.column_stack(cols)


def mean_alpha(model: NoiseModel) -> np.ndarray:
    """Per-coordinate expected noise variance E_phi[alpha(phi)]."""
    return np.array([c.alpha() for c in model.coords])


def total_mean_alpha(model: NoiseModel) -> float:
    """E[||U||^2] summed across coordinates, as used by the analytic bounds."""
    return float(np.sum(mean_alpha(model)))


def characteristic_function(model: NoiseModel, t: float, coord: int = 0) -> complex:
    return model.coords[coord].characteristic_function(t)
