"""Variational inequalities over fixed-point sets and zeros of monotone operators.

``VipProblem`` solves ``<(A - gamma Phi) q, x - q> >= 0`` for all ``x`` in ``Fix(T)``
with the hybrid scheme driven by ``g = A - gamma Phi``.  ``resolvent_curve``
follows ``J_lam x`` as ``lam`` grows toward the projection of ``x`` onto the zeros.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import GammaTooLarge, MuOutOfRange, ValidationError
from .geometry import EUCLIDEAN, ConvexSet, as_point
from .moduli import StepSchedule
from .operators import Contraction, Mapping, MonotoneOp, gaussian_sampler
from .schemes import Trace, hybrid_iterate

PAIR_SLACK = 1e-9


def vip_constants(L: float, eta: float, rho: float, gamma: float) -> tuple[float, float]:
    """Lipschitz constant ``R = L + gamma rho`` and monotonicity ``delta = eta - gamma rho`` of
    ``A - gamma Phi``."""
    if not (eta > 0 and L >= eta):
        raise ValueError(f"need L >= eta > 0, got L={L}, eta={eta}")
    if not 0 <= rho < 1:
        raise ValueError(f"rho must lie in [0, 1), got {rho}")
    if not gamma > 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    if rho > 0 and gamma >= eta / rho:
        raise GammaTooLarge(f"gamma={gamma} must be < eta/rho = {eta / rho}")
    return L + gamma * rho, eta - gamma * rho


def vip_contraction_factor(R: float, delta: float, mu: float) -> float:
    """``sqrt(1 - mu (2 delta - mu R^2))``, the contraction constant of ``I - mu (A - gamma Phi)``."""
    if not (R > 0 and delta > 0):
        raise ValueError("R and delta must be positive")
    if not 0 < mu < 2 * delta / R ** 2:
        raise MuOutOfRange(f"mu={mu} must lie in (0, 2 delta / R^2) = (0, {2 * delta / R ** 2})")
    radicand = 1.0 - mu * (2.0 * delta - mu * R * R)
    return math.sqrt(max(radicand, 0.0))


class DriveMap(Mapping):
    """``g = A - gamma Phi``."""

    kind = "vip_drive"

    def __init__(self, A: Callable, Phi: Contraction, gamma: float, dim: int):
        super().__init__(dim, EUCLIDEAN)
        self.A, self.Phi, self.gamma = A, Phi, float(gamma)

    def __call__(self, x):
        return self.A(x) - self.gamma * self.Phi(x)


@dataclass
class VipProblem:
    A: Callable
    L: float
    eta: float
    Phi: Contraction
    gamma: float
    mu: float
    T: Mapping
    trials: int = 1000
    seed: int = 0
    R: float = field(init=False)
    delta: float = field(init=False)
    factor: float = field(init=False)

    def __post_init__(self):
        if not self.T.norm.is_euclidean:
            raise ValidationError("variational inequality problems live in a Hilbert space (p=2)")
        self.R, self.delta = vip_constants(self.L, self.eta, self.Phi.rho, self.gamma)
        self.factor = vip_contraction_factor(self.R, self.delta, self.mu)
        rng = np.random.default_rng(self.seed)
        sample = gaussian_sampler(self.T.dim)
        x, y = sample(rng, self.trials), sample(rng, self.trials)
        dx = x - y
        dA = self.A(x) - self.A(y)
        sq = np.einsum("ij,ij->i", dx, dx)
        if np.any(np.einsum("ij,ij->i", dA, dx) < self.eta * sq - PAIR_SLACK):
            raise ValidationError(f"A is not {self.eta}-strongly monotone on sampled pairs", "eta")
        if np.any(EUCLIDEAN(dA) > self.L * np.sqrt(sq) + PAIR_SLACK):
            raise ValidationError(f"A is not {self.L}-Lipschitz on sampled pairs", "L")

    @property
    def drive(self) -> DriveMap:
        return DriveMap(self.A, self.Phi, self.gamma, self.T.dim)


def vip_solve(problem: VipProblem, schedule: StepSchedule, x0, N: int,
              stride: int = 1) -> tuple[Trace, np.ndarray]:
    """Run ``x_{n+1} = T x_n - a_n (A - gamma Phi) T x_n``; the final iterate estimates q."""
    trace = hybrid_iterate(problem.T, problem.drive, problem.mu, schedule, x0, N, stride)
    trace.metadata.update({"scheme": "vip", "gamma": problem.gamma, "R": problem.R,
                           "delta": problem.delta, "contraction_factor": problem.factor})
    return trace, trace.final.copy()


# -- zeros of monotone operators ---------------------------------------------


@dataclass
class ZeroProblem:
    A: MonotoneOp
    x: np.ndarray
    zero_set_oracle: Callable[[np.ndarray], np.ndarray] | None = None

    def __post_init__(self):
        self.x = as_point(self.x, self.A.dim)
        if self.zero_set_oracle is None and hasattr(self.A, "zero_set_projector"):
            self.zero_set_oracle = self.A.zero_set_projector()


@dataclass
class ResolventCurve:
    lambdas: list[float]
    points: list[np.ndarray]
    limit: np.ndarray | None = None
    distances: list[float] | None = None


def resolvent_curve(problem: ZeroProblem, lambdas: Sequence[float]) -> ResolventCurve:
    """``J_lam x`` for each ``lam``; distances to ``P_Z x`` when a zero-set oracle exists."""
    lams = [float(v) for v in lambdas]
    if not lams or any(v <= 0 for v in lams):
        raise ValueError("lambdas must be nonempty and positive")
    if any(b < a for a, b in zip(lams, lams[1:])):
        raise ValueError("lambdas must be ascending")
    pts = [problem.A.resolvent(lam)(problem.x) for lam in lams]
    curve = ResolventCurve(lams, pts)
    if problem.zero_set_oracle is not None:
        curve.limit = problem.zero_set_oracle(problem.x)
        curve.distances = [EUCLIDEAN(p - curve.limit) for p in pts]
    return curve


# -- variational-inequality residual ----------------------------------------


def viscosity_drive(Phi: Callable) -> Callable:
    """``(Phi - I)``: the residual is 0 at the explicit/implicit scheme's limit."""
    return lambda x: Phi(x) - np.asarray(x, dtype=float)


def hybrid_drive(g: Callable) -> Callable:
    """``-g``: the residual is 0 at the hybrid scheme's limit."""
    return lambda x: -g(x)


def check_vi_residual(q, drive: Callable, feasible, samples: int = 1000,
                      rng: np.random.Generator | None = None) -> float:
    """``max(0, sup_{x in F} <drive(q), x - q>)``.

    ``feasible`` is a :class:`ConvexSet` (exact via its support function when one
    exists), or a sampler ``(rng, n) -> points of F``.
    """
    q = as_point(q)
    v = np.asarray(drive(q), dtype=float)
    if isinstance(feasible, ConvexSet):
        try:
            return max(0.0, feasible.support(v) - float(v @ q))
        except NotImplementedError:
            feasible = feasible.sample
    rng = np.random.default_rng(0) if rng is None else rng
    pts = feasible(rng, samples)
    return max(0.0, float(np.max((pts - q) @ v)))
