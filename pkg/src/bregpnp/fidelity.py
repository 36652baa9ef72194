"""Data-fidelity terms: Poisson negative log-likelihood and Gaussian least squares.

The Poisson value drops the count-factorial constant: it does not depend on
the optimization variable and would overflow for large counts, so objective
traces are reported up to that additive constant.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ShapeMismatchError, UnsupportedPairError
from .geometry import ReferenceFunction
from .images import LinearOperator

__all__ = [
    "PoissonFidelity",
    "GaussianFidelity",
    "relative_smoothness",
    "smoothness_pair_supported",
    "operator_sq_norm",
]


def _frozen_measurements(y, op: LinearOperator) -> np.ndarray:
    arr = np.asarray(y, dtype=np.float64).copy()
    if arr.shape != op.out_shape:
        raise ShapeMismatchError(
            f"measurements have shape {arr.shape}, operator expects {op.out_shape}"
        )
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class PoissonFidelity:
    """Poisson negative log-likelihood 1'Ax - y'log(Ax), constant dropped.

    ``eps_pos`` clamps the argument of the log and of the division so the
    term stays finite even when the forward model output touches zero.
    """

    y: np.ndarray
    op: LinearOperator
    eps_pos: float = 1e-8

    kind = "poisson"

    def __post_init__(self):
        arr = _frozen_measurements(self.y, self.op)
        if arr.min(initial=0.0) < 0.0:
            raise DomainError("poisson measurements are counts and must be >= 0")
        if self.eps_pos <= 0:
            raise ValueError("eps_pos must be positive")
        object.__setattr__(self, "y", arr)

    def value(self, x) -> float:
        ax = self.op.forward(x)
        safe = np.maximum(ax, self.eps_pos)
        return float(ax.sum()) - float((self.y * np.log(safe)).sum())

    def grad(self, x) -> np.ndarray:
        ax = self.op.forward(x)
        safe = np.maximum(ax, self.eps_pos)
        return self.op.adjoint(1.0 - self.y / safe)


@dataclass(frozen=True, eq=False)
class GaussianFidelity:
    """Least-squares term 1/2 ||Ax - y||^2."""

    y: np.ndarray
    op: LinearOperator

    kind = "gaussian"

    def __post_init__(self):
        object.__setattr__(self, "y", _frozen_measurements(self.y, self.op))

    def value(self, x) -> float:
        r = self.op.forward(x) - self.y
        return 0.5 * float((r * r).sum())

    def grad(self, x) -> np.ndarray:
        return self.op.adjoint(self.op.forward(x) - self.y)


def operator_sq_norm(op: LinearOperator, iters: int = 50, tol: float = 1e-8,
                     seed: int = 0) -> float:
    """Largest eigenvalue of A'A (the squared spectral norm) by power iteration."""
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(op.in_shape)
    norm = float(np.linalg.norm(v))
    if norm == 0.0:
        raise RuntimeError("degenerate power-iteration start")
    v /= norm
    lam_prev = 0.0
    lam = 0.0
    for _ in range(iters):
        w = op.adjoint(op.forward(v))
        lam = float((v * w).sum())
        norm = float(np.linalg.norm(w))
        if norm == 0.0:
            return 0.0
        v = w / norm
        if abs(lam - lam_prev) <= tol * max(abs(lam), 1e-300):
            break
        lam_prev = lam
    return lam


def smoothness_pair_supported(fidelity, h: ReferenceFunction) -> bool:
    kind = getattr(fidelity, "kind", None)
    return (kind, h.kind) in (("poisson", "burg"), ("gaussian", "quadratic"))


def relative_smoothness(fidelity, h: ReferenceFunction) -> float:
    """Constant L making L*h - f convex (f is then L-smooth relative to h).

    Supported pairs: (poisson, burg) where the total count works, and
    (gaussian, quadratic) where the squared spectral norm of A works.
    """
    kind = getattr(fidelity, "kind", None)
    if kind == "poisson" and h.kind == "burg":
        return float(fidelity.y.sum())
    if kind == "gaussian" and h.kind == "quadratic":
        return operator_sq_norm(fidelity.op)
    raise UnsupportedPairError(
        f"no relative-smoothness constant for fidelity={kind!r} with "
        f"reference={h.kind!r}"
    )
