"""Reference functions, Bregman distances, and closed-form proximal maps.

Three reference functions generate the geometries used by the solvers:

* quadratic      h(x) = 1/2 ||x||^2          (classical Euclidean case)
* burg           h(x) = -sum_i log x_i       (positive orthant)
* shannon        h(x) = sum_i x_i log x_i    (positive orthant)

Strong-convexity and gradient-Lipschitz constants of the entropies blow up
near 0 and infinity, so each instance carries a working box [a, b] on which
its constants are finite. The box is declarative: evaluations are not clipped
to it, it only scopes mu_h and L_h.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, DualDomainError

__all__ = [
    "ReferenceFunction",
    "quadratic",
    "burg_entropy",
    "shannon_entropy",
    "Regularizer",
    "ZERO",
    "NONNEG",
    "l1",
    "bpo_euclidean",
    "bpo_burg",
    "bregman_simplex_projection",
]

_KINDS = ("quadratic", "burg", "shannon")


@dataclass(frozen=True)
class ReferenceFunction:
    kind: str
    domain_box: tuple

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown reference function {self.kind!r}")
        a, b = self.domain_box
        if not a < b:
            raise ValueError(f"domain box must satisfy a < b, got [{a}, {b}]")
        if self.kind in ("burg", "shannon") and a <= 0:
            raise DomainError(f"{self.kind} entropy needs a positive box, got a={a}")

    @property
    def mu_h(self) -> float:
        """Strong-convexity constant on the domain box."""
        a, b = self.domain_box
        if self.kind == "quadratic":
            return 1.0
        if self.kind == "burg":
            return 1.0 / (b * b)
        return 1.0 / b

    @property
    def L_h(self) -> float:
        """Gradient Lipschitz constant on the domain box."""
        a, b = self.domain_box
        if self.kind == "quadratic":
            return 1.0
        if self.kind == "burg":
            return 1.0 / (a * a)
        return 1.0 / a

    def value(self, x) -> float:
        x = np.asarray(x, dtype=np.float64)
        if self.kind == "quadratic":
            flat = x.reshape(-1)
            return 0.5 * float(flat @ flat)
        if self.kind == "burg":
            if np.any(x <= 0):
                raise DomainError("burg entropy requires strictly positive input")
            return -float(np.log(x).sum())
        if np.any(x < 0):
            raise DomainError("shannon entropy requires nonnegative input")
        positive = np.where(x > 0, x, 1.0)  # 0 log 0 := 0
        return float((np.where(x > 0, x, 0.0) * np.log(positive)).sum())

    def grad(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if self.kind == "quadratic":
            return x.copy()
        if np.any(x <= 0):
            raise DomainError(f"{self.kind} gradient needs strictly positive input")
        if self.kind == "burg":
            return -1.0 / x
        return 1.0 + np.log(x)

    def grad_conj(self, z) -> np.ndarray:
        """Gradient of the convex conjugate; the inverse map of :meth:`grad`."""
        z = np.asarray(z, dtype=np.float64)
        if self.kind == "quadratic":
            return z.copy()
        if self.kind == "burg":
            bad = int(np.count_nonzero(z >= 0))
            if bad:
                raise DualDomainError(
                    f"{bad} coordinate(s) outside the dual domain (need z < 0)"
                )
            return -1.0 / z
        return np.exp(z - 1.0)

    def distance(self, x, y) -> float:
        """Bregman distance h(x) - h(y) - <grad h(y), x - y>."""
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        gy = self.grad(y)
        return self.value(x) - self.value(y) - float((gy * (x - y)).sum())


def quadratic() -> ReferenceFunction:
    return ReferenceFunction("quadratic", (-math.inf, math.inf))


def burg_entropy(domain_box=(1e-4, 1.0)) -> ReferenceFunction:
    return ReferenceFunction("burg", tuple(domain_box))


def shannon_entropy(domain_box=(1e-4, 1.0)) -> ReferenceFunction:
    return ReferenceFunction("shannon", tuple(domain_box))


# ---------------------------------------------------------------------------
# Simple regularizers with closed-form proximal maps in both geometries.
# ---------------------------------------------------------------------------

_REG_KINDS = ("zero", "nonneg", "l1")


@dataclass(frozen=True)
class Regularizer:
    kind: str
    lam: float = 0.0

    def __post_init__(self):
        if self.kind not in _REG_KINDS:
            raise ValueError(f"unknown regularizer {self.kind!r}")
        if self.kind == "l1" and self.lam < 0:
            raise ValueError("l1 weight must be nonnegative")

    def value(self, x) -> float:
        x = np.asarray(x, dtype=np.float64)
        if self.kind == "zero":
            return 0.0
        if self.kind == "nonneg":
            return 0.0 if np.all(x >= 0) else math.inf
        return self.lam * float(np.abs(x).sum())


ZERO = Regularizer("zero")
NONNEG = Regularizer("nonneg")


def l1(lam: float) -> Regularizer:
    return Regularizer("l1", lam)


def bpo_euclidean(z, reg: Regularizer, gamma: float) -> np.ndarray:
    """Classical proximal map of gamma * reg at z."""
    if gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    z = np.asarray(z, dtype=np.float64)
    if reg.kind == "zero":
        return z.copy()
    if reg.kind == "nonneg":
        return np.maximum(z, 0.0)
    threshold = gamma * reg.lam
    return np.sign(z) * np.maximum(np.abs(z) - threshold, 0.0)


def bpo_burg(z, reg: Regularizer, gamma: float) -> np.ndarray:
    """Proximal map of gamma * reg in the burg geometry (z > 0 required).

    Stationarity of -1/x + 1/z + gamma*lam = 0 gives the closed form
    x = z / (1 + gamma*lam*z) for the l1 case; the zero and nonnegativity
    regularizers leave z untouched because z is already feasible.
    """
    if gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    z = np.asarray(z, dtype=np.float64)
    if np.any(z <= 0):
        raise DomainError("burg proximal map requires strictly positive input")
    if reg.kind in ("zero", "nonneg"):
        return z.copy()
    return z / (1.0 + gamma * reg.lam * z)


def bregman_simplex_projection(z) -> np.ndarray:
    """Projection onto the probability simplex in the shannon geometry.

    With the shannon reference function the projection is plain
    normalization z / ||z||_1, far cheaper than its Euclidean counterpart.
    """
    z = np.asarray(z, dtype=np.float64)
    if np.any(z <= 0):
        raise DomainError("simplex projection requires strictly positive input")
    return z / z.sum()
