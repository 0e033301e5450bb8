"""Points, p-norms and closed convex sets exposed as projection oracles.

Points are plain 1-d ``float64`` numpy arrays; every function that takes a
point also accepts a stack of points of shape ``(k, d)`` and works along the
last axis.  Projections are Euclidean metric projections.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DimensionMismatch, EmptySet, NonConvergence, NonFinitePoint

UNBOUNDED = math.inf

DYKSTRA_TOL = 1e-12
DYKSTRA_MAX_SWEEPS = 10_000


def as_point(x, dim: int | None = None) -> np.ndarray:
    """Coerce ``x`` to a finite 1-d float array, optionally of length ``dim``."""
    arr = np.array(x, dtype=float, ndmin=1)
    if arr.ndim != 1:
        raise DimensionMismatch(f"expected a 1-d point, got shape {arr.shape}")
    if arr.size == 0:
        raise DimensionMismatch("points must have dimension >= 1")
    if not np.all(np.isfinite(arr)):
        raise NonFinitePoint(f"point has non-finite coordinates: {arr}")
    if dim is not None and arr.shape[0] != dim:
        raise DimensionMismatch(f"expected dimension {dim}, got {arr.shape[0]}")
    return arr


def check_dim(x: np.ndarray, dim: int) -> None:
    if x.shape[-1] != dim:
        raise DimensionMismatch(f"expected dimension {dim}, got {x.shape[-1]}")


_SAFE_LO, _SAFE_HI = 1e-280, 1e280
STALL_SWEEPS = 50


@dataclass(frozen=True)
class NormSpec:
    """A p-norm on R^d, ``p`` a real >= 1 or ``math.inf``."""

    p: float = 2.0

    def __post_init__(self):
        p = self.p
        if isinstance(p, str):
            if p.lower() not in ("inf", "infinity"):
                raise ValueError(f"unknown norm {p!r}")
            object.__setattr__(self, "p", math.inf)
        elif not (p >= 1):
            raise ValueError(f"p-norm requires p >= 1, got {p}")
        else:
            object.__setattr__(self, "p", float(p))

    @property
    def is_euclidean(self) -> bool:
        return self.p == 2.0

    def __call__(self, x) -> float | np.ndarray:
        x = np.asarray(x, dtype=float)
        p = self.p
        if p == 2.0:
            if x.ndim == 1:
                with np.errstate(over="ignore", under="ignore"):
                    s = float(x @ x)
                return math.sqrt(s) if _SAFE_LO < s < _SAFE_HI else math.hypot(*x.tolist())
            with np.errstate(over="ignore", under="ignore"):
                s = np.einsum("...i,...i->...", x, x)
            out = np.sqrt(s)
            bad = ~((s > _SAFE_LO) & (s < _SAFE_HI))
            if np.any(bad):
                out[bad] = self._scaled(x[bad])
            return out
        if p == math.inf:
            return np.max(np.abs(x), axis=-1) if x.ndim > 1 else float(np.max(np.abs(x)))
        if p == 1.0:
            return np.sum(np.abs(x), axis=-1) if x.ndim > 1 else float(np.sum(np.abs(x)))
        out = self._scaled(x)
        return out if x.ndim > 1 else float(out)

    def _scaled(self, x: np.ndarray) -> np.ndarray:
        # dividing by the largest entry keeps tiny and huge vectors away from under/overflow
        m = np.max(np.abs(x), axis=-1)
        safe = np.where(m > 0, m, 1.0)
        r = np.abs(x) / safe[..., None] if x.ndim > 1 else np.abs(x) / safe
        return m * np.sum(r ** self.p, axis=-1) ** (1.0 / self.p)

    def label(self) -> str:
        return "inf" if self.p == math.inf else f"{self.p:g}"


EUCLIDEAN = NormSpec(2.0)


def norm(spec: NormSpec, x) -> float:
    return spec(as_point(x))


class ConvexSet:
    """Nonempty closed convex subset of R^d with a Euclidean projection."""

    dim: int

    def project(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def contains(self, x, tol: float = 1e-12) -> bool | np.ndarray:
        x = np.asarray(x, dtype=float)
        gap = EUCLIDEAN(x - self.project(x))
        return gap <= tol

    def diameter(self, spec: NormSpec = EUCLIDEAN) -> float:
        raise NotImplementedError

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray] | None:
        return None

    def support(self, v: np.ndarray) -> float:
        """``max <v, x>`` over the set (``inf`` if unbounded in direction v)."""
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, n: int, scale: float = 10.0) -> np.ndarray:
        # projecting a wide Gaussian cloud lands on the set; subclasses override
        # with uniform samplers where one is cheap
        center = self._anchor()
        pts = center + scale * rng.standard_normal((n, self.dim))
        return self.project(pts)

    def _anchor(self) -> np.ndarray:
        return np.zeros(self.dim)


class Box(ConvexSet):
    def __init__(self, lo: Sequence[float], hi: Sequence[float]):
        lo = np.array(lo, dtype=float, ndmin=1)
        hi = np.array(hi, dtype=float, ndmin=1)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise DimensionMismatch("box bounds must be 1-d and of equal length")
        if np.any(np.isnan(lo)) or np.any(np.isnan(hi)):
            raise ValueError("box bounds must not be NaN")
        if np.any(lo > hi):
            raise EmptySet(f"box with lo > hi at coordinates {np.flatnonzero(lo > hi).tolist()}")
        self.lo, self.hi = lo, hi
        self.dim = lo.shape[0]
        self._bounded = bool(np.all(np.isfinite(lo)) and np.all(np.isfinite(hi)))

    def __repr__(self):
        return f"Box(lo={self.lo.tolist()}, hi={self.hi.tolist()})"

    def project(self, x):
        return np.minimum(np.maximum(x, self.lo), self.hi)

    def diameter(self, spec=EUCLIDEAN):
        if not self._bounded:
            return UNBOUNDED
        return float(spec(self.hi - self.lo))

    def bounding_box(self):
        return self.lo, self.hi

    def support(self, v):
        v = np.asarray(v, dtype=float)
        with np.errstate(invalid="ignore"):
            pick = np.where(v > 0, self.hi, np.where(v < 0, self.lo, 0.0))
        return float(np.sum(v * pick))

    def sample(self, rng, n, scale=10.0):
        if not self._bounded:
            return super().sample(rng, n, scale)
        return self.lo + (self.hi - self.lo) * rng.random((n, self.dim))

    def _anchor(self):
        lo = np.where(np.isfinite(self.lo), self.lo, 0.0)
        hi = np.where(np.isfinite(self.hi), self.hi, lo)
        return 0.5 * (lo + hi)


class Ball(ConvexSet):
    """Closed Euclidean ball."""

    def __init__(self, center: Sequence[float], radius: float):
        self.center = as_point(center)
        self.radius = float(radius)
        if not math.isfinite(self.radius):
            raise ValueError("ball radius must be finite")
        if self.radius < 0:
            raise EmptySet(f"ball radius {radius} is negative")
        self.dim = self.center.shape[0]

    def __repr__(self):
        return f"Ball(center={self.center.tolist()}, radius={self.radius})"

    def project(self, x):
        x = np.asarray(x, dtype=float)
        delta = x - self.center
        dist = EUCLIDEAN(delta)
        if np.ndim(dist) == 0:
            if dist <= self.radius:
                return x.copy()
            return self.center + delta * (self.radius / dist)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            factor = np.where(dist > self.radius, self.radius / dist, 1.0)
        return self.center + delta * factor[..., None]

    def diameter(self, spec=EUCLIDEAN):
        # ||v||_p <= d^(1/p - 1/2) ||v||_2 for p < 2, attained on a diagonal
        if spec.p < 2:
            return 2 * self.radius * self.dim ** (1 / spec.p - 0.5)
        return 2 * self.radius

    def bounding_box(self):
        return self.center - self.radius, self.center + self.radius

    def support(self, v):
        v = np.asarray(v, dtype=float)
        return float(v @ self.center + self.radius * EUCLIDEAN(v))

    def sample(self, rng, n, scale=10.0):
        direction = rng.standard_normal((n, self.dim))
        direction /= EUCLIDEAN(direction)[:, None]
        r = self.radius * rng.random(n) ** (1.0 / self.dim)
        return self.center + direction * r[:, None]

    def _anchor(self):
        return self.center


class Halfspace(ConvexSet):
    """``{x : <a, x> <= b}``."""

    def __init__(self, a: Sequence[float], b: float):
        self.a = as_point(a)
        self.b = float(b)
        self.dim = self.a.shape[0]
        self._aa = float(self.a @ self.a)
        if self._aa == 0.0 and self.b < 0:
            raise EmptySet("halfspace with a = 0 and b < 0 is empty")

    def __repr__(self):
        return f"Halfspace(a={self.a.tolist()}, b={self.b})"

    def project(self, x):
        x = np.asarray(x, dtype=float)
        if self._aa == 0.0:
            return x.copy()
        excess = np.maximum(0.0, x @ self.a - self.b)
        return x - np.multiply.outer(excess, self.a) / self._aa

    def diameter(self, spec=EUCLIDEAN):
        return UNBOUNDED

    def support(self, v):
        v = np.asarray(v, dtype=float)
        if self._aa == 0.0:
            return 0.0 if not np.any(v) else math.inf
        s = float(v @ self.a) / self._aa
        if s >= 0 and EUCLIDEAN(v - s * self.a) <= 1e-12 * max(1.0, EUCLIDEAN(v)):
            return s * self.b
        return math.inf

    def _anchor(self):
        if self._aa == 0.0:
            return np.zeros(self.dim)
        return self.a * (self.b / self._aa)


class Affine(ConvexSet):
    """``{x : A x = b}``."""

    def __init__(self, A, b):
        A = np.array(A, dtype=float, ndmin=2)
        b = np.array(b, dtype=float, ndmin=1)
        if A.ndim != 2 or b.shape != (A.shape[0],):
            raise DimensionMismatch("affine set needs A of shape (m, d) and b of shape (m,)")
        self.A, self.b = A, b
        self.dim = A.shape[1]
        self._pinv = np.linalg.pinv(A)
        self._particular = self._pinv @ b
        if EUCLIDEAN(A @ self._particular - b) > 1e-10 * (1.0 + EUCLIDEAN(b)):
            raise EmptySet("inconsistent affine constraints")
        self._rank = int(np.linalg.matrix_rank(A))

    def __repr__(self):
        return f"Affine(A={self.A.tolist()}, b={self.b.tolist()})"

    def project(self, x):
        x = np.asarray(x, dtype=float)
        resid = x @ self.A.T - self.b
        return x - resid @ self._pinv.T

    def diameter(self, spec=EUCLIDEAN):
        return 0.0 if self._rank == self.dim else UNBOUNDED

    def support(self, v):
        v = np.asarray(v, dtype=float)
        row_part = (v @ self._pinv) @ self.A
        if EUCLIDEAN(v - row_part) <= 1e-12 * max(1.0, EUCLIDEAN(v)):
            return float(v @ self._particular)
        return math.inf

    def _anchor(self):
        return self._particular


class Intersection(ConvexSet):
    """Intersection of convex sets, projected with Dykstra's algorithm."""

    def __init__(self, sets: Sequence[ConvexSet], tol: float = DYKSTRA_TOL,
                 max_sweeps: int = DYKSTRA_MAX_SWEEPS):
        if not sets:
            raise ValueError("intersection of zero sets")
        dims = {s.dim for s in sets}
        if len(dims) != 1:
            raise DimensionMismatch(f"intersection of sets with dimensions {sorted(dims)}")
        self.sets = list(sets)
        self.dim = dims.pop()
        self.tol = tol
        self.max_sweeps = max_sweeps
        box = self.bounding_box()
        if box is not None and np.any(box[0] > box[1]):
            raise EmptySet("bounding boxes of the components do not overlap")

    def __repr__(self):
        return f"Intersection({self.sets!r})"

    def project(self, x):
        x = np.array(x, dtype=float)
        single = x.ndim == 1
        cur = x[None, :] if single else x.reshape(-1, self.dim).copy()
        incr = [np.zeros_like(cur) for _ in self.sets]
        scale = 1.0 + np.max(np.abs(cur))
        stalled = 0
        for _ in range(self.max_sweeps):
            prev = cur
            max_incr_change = 0.0
            for i, s in enumerate(self.sets):
                y = s.project(cur + incr[i])
                new_incr = cur + incr[i] - y
                max_incr_change = max(max_incr_change, float(np.max(np.abs(new_incr - incr[i]))))
                incr[i] = new_incr
                cur = y
            moved = float(np.max(np.abs(cur - prev)))
            if moved > self.tol * scale:
                stalled = 0
                continue
            gaps = max(float(np.max(EUCLIDEAN(cur - s.project(cur)))) for s in self.sets)
            if max_incr_change <= self.tol * scale and gaps <= 1e-9 * scale:
                break
            # the iterate has stopped moving but the increments keep drifting by the
            # gap between the sets: no common point
            stalled = stalled + 1 if gaps > 1e-9 * scale else 0
            if stalled >= STALL_SWEEPS:
                raise EmptySet(f"Dykstra settled outside the intersection (gap {gaps:.3e})")
        else:
            raise NonConvergence(
                f"Dykstra projection did not converge in {self.max_sweeps} sweeps")
        return cur[0] if single else cur.reshape(x.shape)

    def bounding_box(self):
        boxes = [s.bounding_box() for s in self.sets]
        boxes = [b for b in boxes if b is not None]
        if not boxes:
            return None
        lo = np.max([b[0] for b in boxes], axis=0)
        hi = np.min([b[1] for b in boxes], axis=0)
        return lo, hi

    def diameter(self, spec=EUCLIDEAN):
        """Upper bound: the smaller of the component diameters and the bounding-box diagonal."""
        best = min(s.diameter(spec) for s in self.sets)
        box = self.bounding_box()
        if box is not None and np.all(np.isfinite(box[0])) and np.all(np.isfinite(box[1])):
            best = min(best, float(spec(box[1] - box[0])))
        return best

    def support(self, v):
        raise NotImplementedError("no closed-form support function for intersections")

    def _anchor(self):
        box = self.bounding_box()
        if box is not None and np.all(np.isfinite(box[0])) and np.all(np.isfinite(box[1])):
            return 0.5 * (box[0] + box[1])
        return self.sets[0]._anchor()


def project(cset: ConvexSet, x) -> np.ndarray:
    return cset.project(as_point(x, cset.dim))


def diameter(cset: ConvexSet, spec: NormSpec = EUCLIDEAN) -> float:
    return cset.diameter(spec)
