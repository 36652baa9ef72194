"""Classical denoising operators used in place of a learned network.

All solvers accept any callable mapping an array to an array of the same
shape. The operators here additionally expose ``declared_lipschitz`` (a known
bound on their Lipschitz constant, or None) and ``affine`` (whether the map
is affine, which lets :func:`lipschitz_estimate` recover the exact operator
norm by power iteration rather than settle for an empirical lower bound).
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .images import Kernel, circular_convolve2d, uniform_kernel

__all__ = [
    "IdentityDenoiser",
    "LinearSmoother",
    "ScaledContraction",
    "MedianFilter",
    "LipschitzEstimate",
    "lipschitz_estimate",
]


@dataclass(frozen=True)
class IdentityDenoiser:
    """Does nothing; Lipschitz constant exactly 1."""

    affine = True

    @property
    def declared_lipschitz(self) -> float:
        return 1.0

    def __call__(self, x):
        return np.array(x, dtype=np.float64)


@dataclass(frozen=True, eq=False)
class LinearSmoother:
    """Convex blend (1-alpha)*x + alpha*(k (*) x) with a symmetric blur kernel.

    Symmetry plus normalization keep every eigenvalue of the map in [-1, 1],
    so the operator is nonexpansive for any alpha in [0, 1].
    """

    alpha: float
    kernel: Kernel = field(default_factory=lambda: uniform_kernel(3))

    affine = True

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        taps = self.kernel.taps
        if not np.allclose(taps, taps[::-1, ::-1], atol=1e-12):
            raise ValueError("smoother kernel must be symmetric under 180-degree flip")

    @property
    def declared_lipschitz(self) -> float:
        return 1.0

    def __call__(self, x):
        x = np.asarray(x, dtype=np.float64)
        return (1.0 - self.alpha) * x + self.alpha * circular_convolve2d(
            x, self.kernel.taps
        )


@dataclass(frozen=True, eq=False)
class ScaledContraction:
    """Affine shrink toward an anchor: D(x) = anchor + rho*(x - anchor).

    The Lipschitz constant is exactly rho, which makes this the reference
    operator for exercising the fixed-point convergence certificate.
    """

    rho: float
    anchor: object = 0.0

    affine = True

    def __post_init__(self):
        if not 0.0 <= self.rho < 1.0:
            raise ValueError(f"rho must lie in [0, 1), got {self.rho}")

    @property
    def declared_lipschitz(self) -> float:
        return self.rho

    def __call__(self, x):
        x = np.asarray(x, dtype=np.float64)
        anchor = np.asarray(self.anchor, dtype=np.float64)
        return anchor + self.rho * (x - anchor)


@dataclass(frozen=True)
class MedianFilter:
    """Sliding-window median with periodic boundary; nonlinear."""

    window: int = 3

    affine = False
    declared_lipschitz = None

    def __post_init__(self):
        if self.window < 1 or self.window % 2 == 0:
            raise ValueError(f"window must be a positive odd integer, got {self.window}")

    def __call__(self, x):
        x = np.asarray(x, dtype=np.float64)
        return ndimage.median_filter(x, size=self.window, mode="wrap")


class LipschitzEstimate(float):
    """A float carrying whether it is exact or only an empirical lower bound."""

    lower_bound_only: bool

    def __new__(cls, value: float, lower_bound_only: bool):
        obj = super().__new__(cls, value)
        obj.lower_bound_only = lower_bound_only
        return obj

    def __repr__(self):
        tag = "lower bound" if self.lower_bound_only else "exact"
        return f"LipschitzEstimate({float(self)!r}, {tag})"


def lipschitz_estimate(denoiser, probe_shape, trials: int = 32,
                       seed: int = 0) -> LipschitzEstimate:
    """Estimate the Lipschitz constant of a denoiser on a given input shape.

    Affine operators (``denoiser.affine`` truthy) get their linear part
    D(v) - D(0) power-iterated to the operator norm; anything else is probed
    with ``trials`` random input pairs, which only ever yields a lower bound.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    probe_shape = tuple(np.atleast_1d(probe_shape))
    rng = np.random.default_rng(seed)
    if getattr(denoiser, "affine", False):
        offset = denoiser(np.zeros(probe_shape))
        v = rng.standard_normal(probe_shape)
        v /= np.linalg.norm(v)
        sigma_prev = -1.0
        sigma = 0.0
        for _ in range(5000):
            w = denoiser(v) - offset
            sigma = float(np.linalg.norm(w))
            if sigma == 0.0:
                return LipschitzEstimate(0.0, lower_bound_only=False)
            v = w / sigma
            if abs(sigma - sigma_prev) <= 1e-13 * sigma:
                break
            sigma_prev = sigma
        return LipschitzEstimate(sigma, lower_bound_only=False)
    best = 0.0
    for _ in range(trials):
        a = rng.standard_normal(probe_shape)
        b = rng.standard_normal(probe_shape)
        gap = float(np.linalg.norm(a - b))
        if gap == 0.0:
            continue
        best = max(best, float(np.linalg.norm(denoiser(a) - denoiser(b))) / gap)
    return LipschitzEstimate(best, lower_bound_only=True)
