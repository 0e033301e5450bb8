"""Iteration engines producing instrumented traces.

* explicit viscosity scheme ``x_{n+1} = T(a_n Phi(x_n) + (1 - a_n) x_n)``
* implicit curve ``x_t = T(t Phi(x_t) + (1 - t) x_t)`` solved by successive substitution
* hybrid steepest descent ``x_{n+1} = T x_n - a_n g(T x_n)``
* Mann and Halpern baselines

The Python loop only advances the recursion; residual columns are computed per
chunk with vectorised mapping evaluations, which keeps 10^6-step runs cheap.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .errors import (DimensionMismatch, InnerBudgetExceeded, NonFiniteIterate, OutOfRange,
                     ScheduleOutOfRange)
from .geometry import NormSpec, as_point
from .moduli import BoundaryStepWarning, StepSchedule
from .operators import Contraction, Mapping

CHUNK = 1 << 16
SLACK = 1e-9


@dataclass
class Trace:
    """History of one run.

    ``fix_residuals[n] = ||x_n - T x_n||`` and ``anchor_residuals[n] = ||Phi(x_n) - x_n||``
    cover every index ``0..N``; ``step_residuals[n] = ||x_{n+1} - x_n||`` and ``alphas``
    cover ``0..N-1``.  Points are stored every ``stride`` indices plus the final one.
    """

    points: np.ndarray
    step_residuals: np.ndarray
    fix_residuals: np.ndarray
    alphas: np.ndarray
    norm: NormSpec
    metadata: dict = field(default_factory=dict)
    anchor_residuals: np.ndarray | None = None
    stride: int = 1

    @property
    def N(self) -> int:
        return int(self.step_residuals.shape[0])

    @property
    def dim(self) -> int:
        return int(self.points.shape[1])

    @property
    def point_indices(self) -> np.ndarray:
        idx = np.arange(0, self.N + 1, self.stride)
        if idx[-1] != self.N:
            idx = np.append(idx, self.N)
        return idx

    @property
    def final(self) -> np.ndarray:
        return self.points[-1]

    def point(self, n: int) -> np.ndarray:
        if n == self.N:
            return self.points[-1]
        if n % self.stride:
            raise KeyError(f"point {n} was thinned out (stride {self.stride})")
        return self.points[n // self.stride]

    def first_crossing(self, eps: float) -> int | None:
        """First index with ``fix_residual < eps``."""
        hits = np.flatnonzero(self.fix_residuals < eps)
        return int(hits[0]) if hits.size else None

    def settled_index(self, eps: float) -> int | None:
        """Smallest index after which every recorded ``fix_residual`` stays below ``eps``."""
        bad = np.flatnonzero(self.fix_residuals >= eps)
        if not bad.size:
            return 0
        last = int(bad[-1])
        return last + 1 if last < self.N else None

    def check_invariants(self, slack: float = SLACK) -> list[int]:
        """Indices where ``||x_n - Tx_n|| <= ||x_{n+1} - x_n|| + a_n ||Phi(x_n) - x_n||`` fails."""
        if self.points.shape[0] != len(self.point_indices):
            raise ValueError("inconsistent trace lengths")
        if self.anchor_residuals is None:
            return []
        rhs = self.step_residuals + self.alphas * self.anchor_residuals[:-1]
        return np.flatnonzero(self.fix_residuals[:-1] > rhs + slack).tolist()


class _Recorder:
    """Accumulates points in chunks and derives the residual columns per chunk."""

    def __init__(self, x0, N, T, norm, stride, anchor=None):
        self.N, self.T, self.norm, self.stride, self.anchor = N, T, norm, stride, anchor
        d = x0.shape[0]
        size = min(CHUNK, N) + 1
        self.buf = np.empty((size, d))
        self.txbuf = np.empty((size, d))
        self.have_tx = False
        self.buf[0] = x0
        self.base = 0
        self.step = np.empty(N)
        self.fix = np.empty(N + 1)
        self.anc = np.empty(N + 1) if anchor is not None else None
        self.kept = []

    def flush(self, j):
        """Process ``buf[0..j]`` holding points ``base..base+j``."""
        block = self.buf[: j + 1]
        if not np.all(np.isfinite(block)):
            bad = int(np.flatnonzero(~np.all(np.isfinite(block), axis=1))[0])
            raise NonFiniteIterate(f"iterate {self.base + bad} is not finite", self.base + bad)
        b = self.base
        self.step[b:b + j] = self.norm(np.diff(block, axis=0))
        head = block[:j]
        tx = self.txbuf[:j] if self.have_tx else self.T(head)
        self.fix[b:b + j] = self.norm(head - tx)
        if self.anc is not None:
            self.anc[b:b + j] = self.norm(self.anchor(head) - head)
        offset = (-b) % self.stride
        self.kept.append(head[offset::self.stride].copy())
        self.buf[0] = block[j]
        self.base += j

    def finish(self, norm_meta):
        last = self.buf[0]
        self.fix[self.N] = self.norm(last - self.T(last))
        if self.anc is not None:
            self.anc[self.N] = self.norm(self.anchor(last) - last)
        self.kept.append(last[None, :].copy())
        return np.concatenate(self.kept, axis=0)


def _run(step: Callable, x0: np.ndarray, N: int, T: Mapping, alphas: np.ndarray,
         stride: int, metadata: dict, anchor: Callable | None = None, uses_tx: bool = False) -> Trace:
    if N < 1:
        raise ValueError("need at least one iteration")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    rec = _Recorder(x0, N, T, T.norm, stride, anchor)
    rec.have_tx = uses_tx
    buf, txbuf = rec.buf, rec.txbuf
    cap = buf.shape[0] - 1
    x = x0
    j = 0
    for n in range(N):
        x, tx = step(n, x)
        if uses_tx:
            txbuf[j] = tx
        j += 1
        buf[j] = x
        if j == cap:
            rec.flush(j)
            j = 0
    if j:
        rec.flush(j)
    points = rec.finish(T.norm)
    return Trace(points=points, step_residuals=rec.step, fix_residuals=rec.fix,
                 alphas=np.asarray(alphas, dtype=float)[:N].copy(), norm=T.norm,
                 metadata=metadata, anchor_residuals=rec.anc, stride=stride)


def _prepare(T: Mapping, x0, *others) -> np.ndarray:
    x0 = as_point(x0, T.dim)
    for m in others:
        if m is not None and getattr(m, "dim", T.dim) != T.dim:
            raise DimensionMismatch(f"mapping dimensions differ: {T.dim} vs {m.dim}")
    return x0


def _alphas(schedule: StepSchedule, N: int) -> np.ndarray:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", BoundaryStepWarning)
        return schedule.alphas(N)


def explicit_iterate(T: Mapping, Phi: Contraction, schedule: StepSchedule, x0, N: int,
                     stride: int = 1) -> Trace:
    """Run ``x_{n+1} = T(a_n Phi(x_n) + (1 - a_n) x_n)`` for ``N`` steps."""
    x0 = _prepare(T, x0, Phi)
    if Phi.norm != T.norm:
        raise ValueError("T and Phi must be declared under the same norm")
    al = _alphas(schedule, N)
    al_list = al.tolist()

    def step(n, x):
        a = al_list[n]
        return T(a * Phi(x) + (1.0 - a) * x), None

    meta = {"scheme": "explicit", "schedule": schedule.schedule_id, "rho": Phi.rho}
    return _run(step, x0, N, T, al, stride, meta, anchor=Phi)


def hybrid_iterate(T: Mapping, g: Callable, mu: float, schedule: StepSchedule, x0, N: int,
                   stride: int = 1) -> Trace:
    """Run ``x_{n+1} = T x_n - a_n g(T x_n)``; requires ``a_n / mu`` in (0, 1)."""
    x0 = _prepare(T, x0, g if isinstance(g, Mapping) else None)
    mu = float(mu)
    if not mu > 0:
        raise ValueError(f"mu must be positive, got {mu}")
    al = _alphas(schedule, N)
    induced = al / mu
    bad = np.flatnonzero((induced <= 0) | (induced >= 1))
    # a_0 / mu == 1 is tolerated exactly as alpha_0 = 1 is for the harmonic schedule
    bad = bad[~((bad == 0) & (induced[0] == 1.0))]
    if bad.size:
        i = int(bad[0])
        raise ScheduleOutOfRange(f"alpha_{i}/mu = {induced[i]!r} is outside (0, 1)")
    al_list = al.tolist()

    def step(n, x):
        tx = T(x)
        return tx - al_list[n] * g(tx), tx

    meta = {"scheme": "hybrid", "schedule": schedule.schedule_id, "mu": mu,
            "induced_schedule": f"alpha_n/{mu:g}"}
    return _run(step, x0, N, T, al, stride, meta, uses_tx=True)


def mann_iterate(T: Mapping, t_schedule: StepSchedule | float, x0, N: int,
                 stride: int = 1) -> Trace:
    """Krasnoselskii-Mann ``x_{n+1} = (1 - t_n) x_n + t_n T x_n``."""
    x0 = _prepare(T, x0)
    if isinstance(t_schedule, StepSchedule):
        ts = _alphas(t_schedule, N)
        sid = t_schedule.schedule_id
    else:
        if not 0 < t_schedule < 1:
            raise OutOfRange(f"Mann parameter must lie in (0, 1), got {t_schedule}")
        ts = np.full(N, float(t_schedule))
        sid = f"constant({t_schedule:g})"
    t_list = ts.tolist()

    def step(n, x):
        tx = T(x)
        t = t_list[n]
        return (1.0 - t) * x + t * tx, tx

    return _run(step, x0, N, T, ts, stride, {"scheme": "mann", "schedule": sid}, uses_tx=True)


def halpern_iterate(T: Mapping, u, schedule: StepSchedule, x0, N: int, stride: int = 1) -> Trace:
    """Halpern ``x_{n+1} = a_n u + (1 - a_n) T x_n``."""
    x0 = _prepare(T, x0)
    u = as_point(u, T.dim)
    al = _alphas(schedule, N)
    al_list = al.tolist()

    def step(n, x):
        tx = T(x)
        a = al_list[n]
        return a * u + (1.0 - a) * tx, tx

    meta = {"scheme": "halpern", "schedule": schedule.schedule_id, "anchor": u.tolist()}
    return _run(step, x0, N, T, al, stride, meta, uses_tx=True)


# -- implicit curve ---------------------------------------------------------


class ImplicitResult(NamedTuple):
    point: np.ndarray
    iterations: int
    error_bound: float
    increments: np.ndarray


def implicit_solve(T: Mapping, Phi: Contraction, t: float, x_init, tolerance: float = 1e-10,
                   max_inner: int = 10_000_000) -> ImplicitResult:
    """Approximate the fixed point ``x_t`` of ``T_t = T(t Phi + (1 - t) I)``.

    ``T_t`` contracts with factor ``c = 1 - t(1 - rho)``.  The number of substitution
    steps ``k`` is fixed in advance so that ``c^k ||z_1 - z_0|| / (1 - c) <= tolerance``;
    the returned bound is the better of that a-priori estimate and the a-posteriori
    estimate ``c ||z_k - z_{k-1}|| / (1 - c)``.

    ``t = 1`` is accepted (``c = rho`` is still a contraction factor).
    """
    if not 0.0 < t <= 1.0:
        raise ValueError(f"t must lie in (0, 1], got {t}")
    if not tolerance > 0:
        raise ValueError("tolerance must be positive")
    z = _prepare(T, x_init, Phi)
    norm = T.norm
    c = 1.0 - t * (1.0 - Phi.rho)

    def Tt(v):
        return T(t * Phi(v) + (1.0 - t) * v)

    z1 = Tt(z)
    d = norm(z1 - z)
    if d == 0.0:
        return ImplicitResult(z, 0, 0.0, np.zeros(0))
    if c == 0.0:
        return ImplicitResult(z1, 1, 0.0, np.array([d]))
    k = max(1, math.ceil(math.log(tolerance * (1.0 - c) / d) / math.log(c)))
    if k > max_inner:
        raise InnerBudgetExceeded(
            f"a-priori stopping rule needs {k} substitutions, budget is {max_inner}")
    incr = np.empty(k)
    incr[0] = d
    prev, z = z, z1
    for i in range(1, k):
        prev, z = z, Tt(z)
        incr[i] = norm(z - prev)
    if not np.all(np.isfinite(z)):
        raise NonFiniteIterate("implicit solve produced a non-finite point")
    a_priori = c ** k * d / (1.0 - c)
    a_posteriori = c * incr[-1] / (1.0 - c)
    return ImplicitResult(z, k, min(a_priori, a_posteriori), incr)


def implicit_curve(T: Mapping, Phi: Contraction, ts: Sequence[float], tolerance: float = 1e-10,
                   x_init=None, max_inner: int = 10_000_000) -> list[ImplicitResult]:
    """Solve along ``ts`` in descending order, warm-starting each solve.

    Results come back in the order of ``ts``.
    """
    if len(ts) == 0:
        raise ValueError("need at least one t")
    z = np.zeros(T.dim) if x_init is None else as_point(x_init, T.dim)
    order = sorted(range(len(ts)), key=lambda i: -ts[i])
    out: list[ImplicitResult | None] = [None] * len(ts)
    for i in order:
        res = implicit_solve(T, Phi, ts[i], z, tolerance, max_inner)
        out[i] = res
        z = res.point
    return out


# -- inequality audit along explicit traces ---------------------------------


@dataclass
class InequalityReport:
    checked_steps: int
    phi_bound_violations: list[int]
    fix_bound_violations: list[int]
    step_recursion_violations: list[int]
    boundedness_violations: list[int]
    boundedness_radius: float | None = None

    @property
    def ok(self) -> bool:
        return not (self.phi_bound_violations or self.fix_bound_violations
                    or self.step_recursion_violations or self.boundedness_violations)


def audit_explicit_trace(trace: Trace, rho: float, Phi: Callable | None = None,
                         fixed_point=None, slack: float = SLACK) -> InequalityReport:
    """Check the per-step inequalities an explicit trace must satisfy.

    (1a) ``||Phi(x_n) - x_n|| <= (1+rho)||x_n - x_0|| + ||Phi(x_0) - x_0||``
    (1b) ``||x_n - Tx_n|| <= ||x_{n+1} - x_n|| + a_n ||Phi(x_n) - x_n||``
    (2)  ``||x_{n+1} - x_n|| <= (1 - (1-rho) a_n)||x_n - x_{n-1}|| + |a_n - a_{n-1}| ||Phi(x_{n-1}) - x_{n-1}||``
    (3)  ``||x_n - p|| <= max(||x_0 - p||, ||Phi(p) - p|| / (1 - rho))`` for a fixed point ``p``
    """
    if trace.anchor_residuals is None:
        raise ValueError("trace has no anchor residuals (not an explicit trace)")
    if trace.stride != 1:
        raise ValueError("auditing needs every point (stride 1)")
    norm = trace.norm
    pts = trace.points
    anc = trace.anchor_residuals
    al = trace.alphas
    st = trace.step_residuals

    dist0 = norm(pts - pts[0])
    v1a = np.flatnonzero(anc > (1 + rho) * dist0 + anc[0] + slack).tolist()
    v1b = trace.check_invariants(slack)
    rhs2 = (1 - (1 - rho) * al[1:]) * st[:-1] + np.abs(al[1:] - al[:-1]) * anc[:-2]
    v2 = (np.flatnonzero(st[1:] > rhs2 + slack) + 1).tolist()
    v3: list[int] = []
    radius = None
    if fixed_point is not None:
        if Phi is None:
            raise ValueError("the boundedness check needs Phi")
        p = as_point(fixed_point, trace.dim)
        radius = max(norm(pts[0] - p), norm(Phi(p) - p) / (1 - rho))
        v3 = np.flatnonzero(norm(pts - p) > radius + slack).tolist()
    return InequalityReport(trace.N, v1a, v1b, v2, v3, radius)
