"""Per-meter divisible Laplace noise and additive noise splitting."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PrivacyParams:
    """Noise calibration shared by all meters of an area.

    ``scale`` is always ``sensitivity / epsilon``; build with :meth:`from_sensitivity`
    or let ``__post_init__`` fill it in.
    """

    epsilon: float
    sensitivity: float
    n_meters: int
    scale: float = float("nan")

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not self.sensitivity >= 0:
            raise ValueError("sensitivity must be non-negative")
        if self.n_meters < 1:
            raise ValueError("n_meters must be at least 1")
        expected = self.sensitivity / self.epsilon
        if math.isnan(self.scale):
            object.__setattr__(self, "scale", expected)
        elif self.scale != expected:
            raise ValueError("scale must equal sensitivity / epsilon")

    @classmethod
    def from_sensitivity(cls, sensitivity: float, epsilon: float, n_meters: int) -> "PrivacyParams":
        return cls(epsilon=float(epsilon), sensitivity=float(sensitivity), n_meters=int(n_meters))

    @classmethod
    def noiseless(cls, n_meters: int) -> "PrivacyParams":
        """Degenerate calibration with zero scale; every noise draw is exactly 0."""
        return cls(epsilon=1.0, sensitivity=0.0, n_meters=int(n_meters))

    @property
    def gamma_shape(self) -> float:
        return 1.0 / self.n_meters


def compute_sensitivity(trace) -> float:
    """Point-wise sensitivity: the largest absolute reading of any meter at any instant."""
    values = np.asarray(getattr(trace, "values", trace), dtype=float)
    if values.size == 0:
        raise ValueError("empty trace")
    return float(np.max(np.abs(values)))


def sample_meter_noise(params: PrivacyParams, rng: np.random.Generator, size=None):
    """Draw one meter's noise as G - G', both Gamma(shape=1/N, scale=lambda).

    The sum of N independent draws is Laplace(0, lambda). With ``size`` the
    result is an array of independent draws; the stream consumed is identical
    to calling this ``prod(size)`` times in a row.
    """
    if params.scale == 0:
        return 0.0 if size is None else np.zeros(size)
    if size is None:
        g = rng.gamma(params.gamma_shape, params.scale, size=2)
        return float(g[0] - g[1])
    shape = (size, 2) if np.isscalar(size) else (*size, 2)
    g = rng.gamma(params.gamma_shape, params.scale, size=shape)
    return g[..., 0] - g[..., 1]


def split_noise(noise: float, m: int, rng: np.random.Generator, scale: float) -> list[float]:
    """Split ``noise`` into ``m`` additive shares.

    The first ``m - 1`` shares are i.i.d. Laplace(0, scale) blinds and the last
    one closes the sum, so any ``m - 1`` shares are independent of ``noise``.
    """
    if m < 1:
        raise ValueError("at least one master required")
    if m == 1:
        return [float(noise)]
    if scale == 0:
        return [0.0] * (m - 1) + [float(noise)]
    blinds = rng.laplace(0.0, scale, size=m - 1)
    return [*map(float, blinds), float(noise - blinds.sum())]


def split_noise_block(noise: np.ndarray, m: int, rng: np.random.Generator, scale: float) -> np.ndarray:
    """Vectorised :func:`split_noise` over a 1-D series; returns shape ``(len(noise), m)``.

    Consumes the generator exactly as ``len(noise)`` successive scalar calls would.
    """
    if m < 1:
        raise ValueError("at least one master required")
    noise = np.asarray(noise, dtype=float)
    out = np.empty((noise.shape[0], m))
    if m == 1:
        out[:, 0] = noise
        return out
    if scale == 0:
        out[:, :-1] = 0.0
    else:
        out[:, :-1] = rng.laplace(0.0, scale, size=(noise.shape[0], m - 1))
    out[:, -1] = noise - out[:, :-1].sum(axis=1)
    return out
