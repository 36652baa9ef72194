"""Iterative restoration algorithms and their convergence machinery.

Six algorithms share one engine. Each iteration is a forward step (an
explicit gradient step, generalized to a mirror step under a non-quadratic
reference function) followed by a backward map (a proximal map, a denoiser,
or nothing):

=========  ===========================  =========================
algorithm  forward step on              backward map
=========  ===========================  =========================
pgm        grad f                       euclidean proximal map
bpgm       grad f                       proximal map of h
pnp-pgm    grad f                       denoiser
pnp-bpgm   grad f                       denoiser
red-sd     grad f + tau*(x - D(x))      none
red-bsd    grad f + tau*(x - D(x))      none
=========  ===========================  =========================

With the quadratic reference function the Bregman variants reproduce their
Euclidean counterparts bit for bit, because the mirror step collapses to the
identical ``x - gamma*v`` expression.

Under the burg geometry the mirror step has the elementwise closed form
``x / (1 + gamma * x * v)``, whose denominator can turn nonpositive when the
gradient is strongly negative. The safeguard halves gamma for the offending
iteration only; with safeguarding disabled the step raises instead.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DomainError,
    SafeguardExhaustedError,
    StepError,
)
from .fidelity import smoothness_pair_supported
from .geometry import (
    ZERO,
    ReferenceFunction,
    Regularizer,
    bpo_burg,
    bpo_euclidean,
    quadratic,
)
from .images import psnr

__all__ = [
    "ALGORITHMS",
    "SolverConfig",
    "RunReport",
    "TheoremCertificate",
    "mirror_step",
    "burg_backtrack",
    "red_objective",
    "theorem_gate",
    "default_x0",
    "solve",
    "pgm",
    "bpgm",
    "pnp_pgm",
    "pnp_bpgm",
    "red_sd",
    "red_bsd",
]

ALGORITHMS = ("pgm", "bpgm", "pnp-pgm", "pnp-bpgm", "red-sd", "red-bsd")

_MIRROR_FAMILY = ("bpgm", "pnp-bpgm", "red-bsd")
_DENOISER_FAMILY = ("pnp-pgm", "pnp-bpgm", "red-sd", "red-bsd")
_RED_FAMILY = ("red-sd", "red-bsd")

EPS_POS = 1e-8


def mirror_step(h: ReferenceFunction, x, grad, gamma: float) -> np.ndarray:
    """One unsafeguarded mirror step: grad_conj(grad_h(x) - gamma*grad).

    For the quadratic reference this is exactly the gradient step
    ``x - gamma*grad``. For burg the dual point must stay negative; if any
    coordinate escapes, a StepError reports how many did.
    """
    if gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    x = np.asarray(x, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    w = h.grad(x) - gamma * grad
    if h.kind == "burg":
        bad = int(np.count_nonzero(w >= 0))
        if bad:
            raise StepError(
                f"mirror step left the dual domain on {bad} coordinate(s); "
                "enable the safeguard or reduce gamma"
            )
    return h.grad_conj(w)


def _burg_fast_step(x, grad, gamma, eps_pos=EPS_POS):
    """Closed-form burg mirror step x / (1 + gamma*x*grad); None if infeasible."""
    denom = 1.0 + gamma * x * grad
    if np.all(denom > eps_pos):
        return x / denom
    return None


def burg_backtrack(x, grad, gamma: float, max_halvings: int = 30,
                   eps_pos: float = EPS_POS):
    """Safeguarded burg mirror step.

    Halves gamma until every denominator 1 + gamma*x*grad clears eps_pos,
    then returns the step result together with the gamma actually used. The
    caller's base gamma is untouched; the halving is local to this step.
    """
    if gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    x = np.asarray(x, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    gamma_used = gamma
    for _ in range(max_halvings + 1):
        z = _burg_fast_step(x, grad, gamma_used, eps_pos)
        if z is not None:
            return z, gamma_used
        gamma_used *= 0.5
    raise SafeguardExhaustedError(
        f"step-size halving exhausted after {max_halvings} halvings "
        f"(gamma {gamma} -> {gamma_used})"
    )


def red_objective(fidelity, denoiser, tau: float, x) -> float:
    """Monitoring objective f(x) + tau * x'(x - D(x)).

    Only a true objective when the denoiser is locally homogeneous with a
    symmetric Jacobian (exact for the shipped affine denoisers); otherwise
    treat it as a surrogate trace.
    """
    x = np.asarray(x, dtype=np.float64)
    return fidelity.value(x) + tau * float((x * (x - denoiser(x))).sum())


@dataclass(frozen=True)
class TheoremCertificate:
    """Sufficient-condition check for fixed-point convergence of pnp-bpgm.

    ``m_bound`` is the largest admissible denoiser Lipschitz constant
    (``math.inf`` when the constraint is vacuous) and ``gamma_interval`` the
    admissible open step-size range, possibly empty.
    """

    mu_h: float
    L_h: float
    mu_f: float
    L_f: float
    M: float
    m_bound: float
    gamma_interval: tuple
    satisfied: bool

    @property
    def interval_empty(self) -> bool:
        lo, hi = self.gamma_interval
        return not lo < hi

    @property
    def gamma_midpoint(self) -> float:
        lo, hi = self.gamma_interval
        if not lo < hi:
            raise ValueError("gamma interval is empty")
        return 0.5 * (lo + hi)

    def to_dict(self) -> dict:
        return {
            "mu_h": self.mu_h,
            "L_h": self.L_h,
            "mu_f": self.mu_f,
            "L_f": self.L_f,
            "M": self.M,
            "m_bound": None if math.isinf(self.m_bound) else self.m_bound,
            "gamma_interval": list(self.gamma_interval),
            "satisfied": self.satisfied,
        }


def theorem_gate(mu_h: float, L_h: float, mu_f: float, L_f: float,
                 M: float) -> TheoremCertificate:
    """Evaluate the convergence certificate for given geometry constants.

    The denoiser bound is mu_h*(mu_f + L_f) / (L_h*L_f - mu_h*mu_f) when the
    denominator is positive and unbounded otherwise; the admissible step
    sizes form the open interval

        ( (mu_h/mu_f)*(L_h/mu_h - 1/M),  (mu_h/L_f)*(1 + 1/M) )

    with the lower end clipped at zero. ``satisfied`` requires M under the
    bound and a nonempty interval.
    """
    for name, val in (("mu_h", mu_h), ("L_h", L_h), ("mu_f", mu_f),
                      ("L_f", L_f), ("M", M)):
        if not val > 0:
            raise ValueError(f"{name} must be positive, got {val}")
    if mu_h > L_h or mu_f > L_f:
        raise ValueError("need mu_h <= L_h and mu_f <= L_f")
    denominator = L_h * L_f - mu_h * mu_f
    m_bound = math.inf if denominator <= 0 else mu_h * (mu_f + L_f) / denominator
    lower = max(0.0, (mu_h / mu_f) * (L_h / mu_h - 1.0 / M))
    upper = (mu_h / L_f) * (1.0 + 1.0 / M)
    satisfied = M < m_bound and lower < upper
    return TheoremCertificate(
        mu_h=mu_h, L_h=L_h, mu_f=mu_f, L_f=L_f, M=M,
        m_bound=m_bound, gamma_interval=(lower, upper), satisfied=satisfied,
    )


@dataclass
class SolverConfig:
    """Everything a solver run needs.

    ``regularizer`` feeds pgm/bpgm, ``denoiser`` feeds the pnp and red
    variants. ``ground_truth`` and ``peak`` are optional and only enable the
    per-iteration PSNR trace. ``max_iters`` may be zero, in which case the
    run returns x0 untouched.
    """

    algorithm: str
    fidelity: object
    x0: np.ndarray
    h: ReferenceFunction = field(default_factory=quadratic)
    regularizer: Regularizer = ZERO
    denoiser: object = None
    gamma: float = 0.5
    tau: float = 1e-3
    max_iters: int = 100
    tol: float = 1e-8
    safeguard: bool = True
    eps_pos: float = EPS_POS
    max_halvings: int = 30
    ground_truth: object = None
    peak: object = None

    def validate(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(
                f"unknown algorithm {self.algorithm!r}; expected one of {ALGORITHMS}"
            )
        if self.gamma <= 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if self.max_iters < 0:
            raise ValueError("max_iters must be >= 0")
        if self.tol < 0:
            raise ValueError("tol must be >= 0")
        if self.algorithm in _DENOISER_FAMILY and not callable(self.denoiser):
            raise ValueError(f"{self.algorithm} needs a callable denoiser")
        if self.algorithm in _RED_FAMILY and self.tau < 0:
            raise ValueError(f"{self.algorithm} needs tau >= 0, got {self.tau}")
        if self.algorithm not in _MIRROR_FAMILY and self.h.kind != "quadratic":
            raise ValueError(
                f"{self.algorithm} is Euclidean; configure h='quadratic' "
                f"(got {self.h.kind!r}) or pick its Bregman variant"
            )
        if self.algorithm == "bpgm" and not smoothness_pair_supported(
            self.fidelity, self.h
        ):
            raise ValueError(
                "bpgm needs a (fidelity, reference) pair with a known "
                f"relative-smoothness constant; got "
                f"({getattr(self.fidelity, 'kind', '?')}, {self.h.kind})"
            )
        x0 = np.asarray(self.x0, dtype=np.float64)
        if x0.shape != self.fidelity.op.in_shape:
            raise ValueError(
                f"x0 shape {x0.shape} does not match operator input "
                f"{self.fidelity.op.in_shape}"
            )
        if self.ground_truth is not None:
            gt = np.asarray(self.ground_truth, dtype=np.float64)
            if gt.shape != x0.shape:
                raise ValueError("ground truth shape must match x0")
            if self.peak is None or not self.peak > 0:
                raise ValueError("PSNR tracking needs a positive peak")


@dataclass
class RunReport:
    """Per-run record: final state plus per-iteration traces."""

    final: np.ndarray
    residuals: np.ndarray
    objective: np.ndarray
    psnr_trace: object
    iterations_used: int
    backtracks: int
    algorithm: str

    def to_dict(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "iterations_used": self.iterations_used,
            "backtracks": self.backtracks,
            "final_shape": list(np.shape(self.final)),
            "final": np.asarray(self.final).reshape(-1).tolist(),
            "residuals": np.asarray(self.residuals).tolist(),
            "objective": np.asarray(self.objective).tolist(),
            "psnr_trace": None
            if self.psnr_trace is None
            else np.asarray(self.psnr_trace).tolist(),
        }

    def to_json(self, indent=None) -> str:
        return json.dumps(self.to_dict(), indent=indent)


def default_x0(fidelity, peak: float, rng, clamp=None) -> np.ndarray:
    """Standard initialization: measurements plus a faint white perturbation.

    When the measurement and signal domains differ in shape, the adjoint maps
    the measurements back first. ``clamp`` floors the result, which the
    entropy geometries need to start strictly positive.
    """
    op = fidelity.op
    x = np.array(fidelity.y, dtype=np.float64)
    if op.in_shape != op.out_shape:
        x = op.adjoint(x)
    x = x + rng.normal(0.0, 1e-3 * peak, size=x.shape)
    if clamp is not None:
        x = np.maximum(x, clamp)
    return x


def _objective_value(cfg: SolverConfig, x) -> float:
    base = cfg.fidelity.value(x)
    if cfg.algorithm in ("pgm", "bpgm"):
        return base + cfg.regularizer.value(x)
    if cfg.algorithm in _RED_FAMILY:
        return base + cfg.tau * float((x * (x - cfg.denoiser(x))).sum())
    return base


def solve(cfg: SolverConfig) -> RunReport:
    """Run the configured algorithm and record its traces.

    Stops after ``max_iters`` iterations or once the relative fixed-point
    residual ||x+ - x|| / max(||x||, 1e-12) drops below ``tol``.
    """
    cfg.validate()
    algo = cfg.algorithm
    h = cfg.h
    fid = cfg.fidelity
    is_mirror = algo in _MIRROR_FAMILY
    is_red = algo in _RED_FAMILY
    is_pnp = algo in ("pnp-pgm", "pnp-bpgm")
    entropic = is_mirror and h.kind in ("burg", "shannon")

    x = np.array(cfg.x0, dtype=np.float64)
    if entropic and np.any(x <= 0):
        raise DomainError(
            f"{h.kind} geometry needs a strictly positive initial state"
        )
    track_psnr = cfg.ground_truth is not None
    gt = None if not track_psnr else np.asarray(cfg.ground_truth, dtype=np.float64)

    residuals = []
    objective = []
    psnr_trace = [] if track_psnr else None
    backtracks = 0
    iterations = 0

    for _ in range(cfg.max_iters):
        v = fid.grad(x)
        if is_red:
            v = v + cfg.tau * (x - cfg.denoiser(x))

        if not is_mirror or h.kind == "quadratic":
            u = x - cfg.gamma * v
        elif h.kind == "burg":
            if cfg.safeguard:
                u, gamma_used = burg_backtrack(
                    x, v, cfg.gamma, cfg.max_halvings, cfg.eps_pos
                )
                if gamma_used < cfg.gamma:
                    backtracks += int(round(math.log2(cfg.gamma / gamma_used)))
            else:
                u = _burg_fast_step(x, v, cfg.gamma, eps_pos=0.0)
                if u is None:
                    bad = int(np.count_nonzero(1.0 + cfg.gamma * x * v <= 0.0))
                    raise StepError(
                        f"mirror step left the dual domain on {bad} coordinate(s) "
                        "with the safeguard disabled"
                    )
        else:  # shannon
            u = mirror_step(h, x, v, cfg.gamma)

        if algo in ("pgm", "bpgm"):
            if algo == "bpgm" and h.kind == "burg":
                x_new = bpo_burg(u, cfg.regularizer, cfg.gamma)
            else:
                x_new = bpo_euclidean(u, cfg.regularizer, cfg.gamma)
        elif is_pnp:
            x_new = cfg.denoiser(u)
            if entropic and cfg.safeguard:
                x_new = np.maximum(x_new, cfg.eps_pos)
        else:  # red family: the step is the update
            x_new = u

        res = float(np.linalg.norm(x_new - x)) / max(
            float(np.linalg.norm(x)), 1e-12
        )
        residuals.append(res)
        objective.append(_objective_value(cfg, x_new))
        if track_psnr:
            psnr_trace.append(psnr(gt, x_new, cfg.peak))

        x = x_new
        iterations += 1
        if res < cfg.tol:
            break

    return RunReport(
        final=x,
        residuals=np.asarray(residuals),
        objective=np.asarray(objective),
        psnr_trace=None if psnr_trace is None else np.asarray(psnr_trace),
        iterations_used=iterations,
        backtracks=backtracks,
        algorithm=algo,
    )


def _named(cfg: SolverConfig, expected: str) -> RunReport:
    if cfg.algorithm != expected:
        raise ValueError(
            f"config requests {cfg.algorithm!r}, but this entry point runs "
            f"{expected!r}"
        )
    return solve(cfg)


def pgm(cfg: SolverConfig) -> RunReport:
    """Proximal gradient method (Euclidean)."""
    return _named(cfg, "pgm")


def bpgm(cfg: SolverConfig) -> RunReport:
    """Proximal gradient method in the geometry of the reference function."""
    return _named(cfg, "bpgm")


def pnp_pgm(cfg: SolverConfig) -> RunReport:
    """Plug-and-play variant of pgm: the proximal map becomes a denoiser."""
    return _named(cfg, "pnp-pgm")


def pnp_bpgm(cfg: SolverConfig) -> RunReport:
    """Plug-and-play variant of bpgm: denoiser after the mirror step."""
    return _named(cfg, "pnp-bpgm")


def red_sd(cfg: SolverConfig) -> RunReport:
    """Steepest descent on f plus the denoiser-residual regularizer."""
    return _named(cfg, "red-sd")


def red_bsd(cfg: SolverConfig) -> RunReport:
    """Mirror-descent variant of red-sd under the reference function."""
    return _named(cfg, "red-bsd")
