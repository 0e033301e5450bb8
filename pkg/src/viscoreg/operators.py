"""Evaluation oracles: nonexpansive mappings, contractions and monotone operators.

Every mapping is a callable acting on a point of shape ``(d,)`` or on a stack of
points of shape ``(k, d)``.  Built-in kinds are gated at construction: their
declared Lipschitz constant is checked exactly where a closed form exists
(matrix norms) and empirically on random pairs otherwise.
"""
from __future__ import annotations

import math
import warnings
from typing import Callable, Sequence

import numpy as np

from .errors import DimensionMismatch, NotNonexpansive, SingularSystem
from .geometry import EUCLIDEAN, Box, ConvexSet, NormSpec, as_point, check_dim

LIPSCHITZ_SLACK = 1e-9
GATE_TRIALS = 1000
GATE_SEED = 20080123


def induced_norm(Q: np.ndarray, spec: NormSpec) -> float:
    """Operator norm of ``Q`` induced by ``spec`` (an upper bound for p not in {1, 2, inf})."""
    Q = np.asarray(Q, dtype=float)
    if spec.p == 1.0:
        return float(np.max(np.sum(np.abs(Q), axis=0)))
    if spec.p == math.inf:
        return float(np.max(np.sum(np.abs(Q), axis=1)))
    if spec.p == 2.0:
        return float(np.linalg.norm(Q, 2))
    # Riesz-Thorin interpolation between the 1- and inf-norms
    n1 = induced_norm(Q, NormSpec(1.0))
    ninf = induced_norm(Q, NormSpec(math.inf))
    return n1 ** (1 / spec.p) * ninf ** (1 - 1 / spec.p)


def gaussian_sampler(dim: int, scale: float = 10.0):
    def sample(rng, n):
        return scale * rng.standard_normal((n, dim))
    return sample


def cube_sampler(dim: int, half_width: float = 1.0):
    def sample(rng, n):
        return half_width * (2 * rng.random((n, dim)) - 1)
    return sample


def annulus_sampler(dim: int, r_in: float, r_out: float):
    def sample(rng, n):
        u = rng.standard_normal((n, dim))
        u /= EUCLIDEAN(u)[:, None]
        return u * rng.uniform(r_in, r_out, n)[:, None]
    return sample


def estimate_lipschitz(fn: Callable, sampler, trials: int, spec: NormSpec = EUCLIDEAN,
                       rng: np.random.Generator | None = None, dim: int | None = None) -> float:
    """Largest ratio ``||f(x) - f(y)|| / ||x - y||`` over ``trials`` random pairs.

    ``sampler`` is a callable ``(rng, n) -> (n, d)`` array, a :class:`ConvexSet`, or
    ``None`` (Gaussian cloud, needs ``dim``).  The result is a lower bound on the
    true Lipschitz constant.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(0) if rng is None else rng
    if sampler is None:
        if dim is None:
            dim = getattr(fn, "dim", None)
        sampler = gaussian_sampler(dim)
    elif isinstance(sampler, ConvexSet):
        sampler = sampler.sample
    x = sampler(rng, trials)
    y = sampler(rng, trials)
    den = spec(x - y)
    keep = den > 0
    if not np.any(keep):
        return 0.0
    num = spec(fn(x[keep]) - fn(y[keep]))
    return float(np.max(num / den[keep]))


class Mapping:
    """A single-valued map on R^d claimed Lipschitz with constant ``lipschitz``."""

    kind = "mapping"
    lipschitz = 1.0

    def __init__(self, dim: int, norm: NormSpec = EUCLIDEAN):
        self.dim = int(dim)
        self.norm = norm

    def __call__(self, x):
        raise NotImplementedError

    def describe(self) -> dict:
        return {"kind": self.kind}

    def __repr__(self):
        return f"{type(self).__name__}({self.describe()})"

    def _gate(self, trials: int = GATE_TRIALS, strict: bool = True):
        rng = np.random.default_rng(GATE_SEED)
        est = estimate_lipschitz(self, gaussian_sampler(self.dim), trials, self.norm, rng)
        if est > self.lipschitz + LIPSCHITZ_SLACK:
            msg = (f"{self.kind} map has empirical Lipschitz constant {est:.12g} > "
                   f"{self.lipschitz:.12g} in the {self.norm.label()}-norm")
            if strict:
                raise NotNonexpansive(msg)
            warnings.warn(msg, stacklevel=3)


class Identity(Mapping):
    kind = "identity"

    def __call__(self, x):
        return np.array(x, dtype=float, copy=True)


class Constant(Mapping):
    kind = "constant"
    lipschitz = 0.0

    def __init__(self, point, norm: NormSpec = EUCLIDEAN):
        self.point = as_point(point)
        super().__init__(self.point.shape[0], norm)

    def __call__(self, x):
        x = np.asarray(x)
        return np.broadcast_to(self.point, x.shape).copy()

    def describe(self):
        return {"kind": self.kind, "point": self.point.tolist()}


class Projection(Mapping):
    """Metric projection onto a convex set."""

    kind = "projection"

    def __init__(self, cset: ConvexSet, norm: NormSpec = EUCLIDEAN):
        if not norm.is_euclidean and not isinstance(cset, Box):
            raise NotNonexpansive(
                "metric projection is certified nonexpansive only in the Euclidean norm "
                "(boxes excepted: clamping is coordinatewise 1-Lipschitz)")
        super().__init__(cset.dim, norm)
        self.set = cset
        self._gate()

    def __call__(self, x):
        return self.set.project(x)

    def describe(self):
        return {"kind": self.kind, "set": repr(self.set)}


class Affine(Mapping):
    """``x -> scale * Q x + offset``; Lipschitz constant is the exact induced norm."""

    kind = "affine"

    def __init__(self, matrix=None, offset=None, scale: float = 1.0, dim: int | None = None,
                 norm: NormSpec = EUCLIDEAN):
        if matrix is None:
            if dim is None:
                dim = len(offset)
            matrix = np.eye(dim)
        Q = float(scale) * np.array(matrix, dtype=float, ndmin=2)
        if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
            raise DimensionMismatch(f"matrix must be square, got shape {Q.shape}")
        if not np.all(np.isfinite(Q)):
            raise ValueError("matrix entries must be finite")
        d = Q.shape[0]
        b = np.zeros(d) if offset is None else as_point(offset, d)
        super().__init__(d, norm)
        self.matrix = Q
        self.offset = b
        self.lipschitz = induced_norm(Q, norm)
        diag = Q[0, 0]
        self._scalar = diag if np.array_equal(Q, diag * np.eye(d)) else None
        self._has_offset = bool(np.any(b))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = self._scalar * x if self._scalar is not None else x @ self.matrix.T
        return out + self.offset if self._has_offset else out

    def describe(self):
        return {"kind": self.kind, "matrix": self.matrix.tolist(), "offset": self.offset.tolist()}


class MatrixMap(Affine):
    """Linear map ``x -> Q x`` whose induced norm must not exceed 1."""

    kind = "matrix"

    def __init__(self, matrix, norm: NormSpec = EUCLIDEAN):
        super().__init__(matrix, None, 1.0, norm=norm)
        if self.lipschitz > 1.0 + 1e-10:
            raise NotNonexpansive(
                f"matrix has induced {norm.label()}-norm {self.lipschitz:.12g} > 1")
        self.lipschitz = 1.0

    def describe(self):
        return {"kind": self.kind, "matrix": self.matrix.tolist()}


def _soft(x, k):
    return np.sign(x) * np.maximum(np.abs(x) - k, 0.0)


# scalar 1-Lipschitz functions usable coordinatewise
SCALAR_CATALOG: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "identity": lambda x: x,
    "neg": np.negative,
    "zero": np.zeros_like,
    "abs": np.abs,
    "relu": lambda x: np.maximum(x, 0.0),
    "sin": np.sin,
    "cos": np.cos,
    "tanh": np.tanh,
    "atan": np.arctan,
    "clip01": lambda x: np.clip(x, 0.0, 1.0),
    "clip11": lambda x: np.clip(x, -1.0, 1.0),
    "soft1": lambda x: _soft(x, 1.0),
}


class Coordinatewise(Mapping):
    """``x -> (f_1(x_1), ..., f_d(x_d))`` with each ``f_i`` 1-Lipschitz (any p-norm)."""

    kind = "coordinatewise"

    def __init__(self, functions: Sequence[str], norm: NormSpec = EUCLIDEAN):
        unknown = [f for f in functions if f not in SCALAR_CATALOG]
        if unknown:
            raise ValueError(f"unknown scalar functions {unknown}; catalog: {sorted(SCALAR_CATALOG)}")
        super().__init__(len(functions), norm)
        self.functions = list(functions)
        self._fns = [SCALAR_CATALOG[f] for f in functions]
        self._gate()

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.empty_like(x)
        for i, f in enumerate(self._fns):
            out[..., i] = f(x[..., i])
        return out

    def describe(self):
        return {"kind": self.kind, "functions": self.functions}


def _common(maps: Sequence[Mapping]) -> tuple[int, NormSpec]:
    if not maps:
        raise ValueError("need at least one mapping")
    dims = {m.dim for m in maps}
    if len(dims) != 1:
        raise DimensionMismatch(f"mappings of different dimensions {sorted(dims)}")
    norms = {m.norm for m in maps}
    if len(norms) != 1:
        raise ValueError("mappings declared under different norms")
    return dims.pop(), norms.pop()


class Composition(Mapping):
    """``Composition([f, g, h])(x) == f(g(h(x)))``."""

    kind = "composition"

    def __init__(self, maps: Sequence[Mapping]):
        dim, norm = _common(maps)
        super().__init__(dim, norm)
        self.maps = list(maps)
        self.lipschitz = float(np.prod([m.lipschitz for m in maps]))

    def __call__(self, x):
        for m in reversed(self.maps):
            x = m(x)
        return x

    def describe(self):
        return {"kind": self.kind, "maps": [m.describe() for m in self.maps]}


class ConvexCombination(Mapping):
    kind = "convex_combination"

    def __init__(self, weights: Sequence[float], maps: Sequence[Mapping]):
        dim, norm = _common(maps)
        w = np.asarray(weights, dtype=float)
        if w.shape != (len(maps),) or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("convex combination weights must be nonnegative and sum to 1")
        super().__init__(dim, norm)
        self.weights = w
        self.maps = list(maps)
        self.lipschitz = float(sum(wi * m.lipschitz for wi, m in zip(w, maps)))

    def __call__(self, x):
        out = self.weights[0] * self.maps[0](x)
        for wi, m in zip(self.weights[1:], self.maps[1:]):
            out = out + wi * m(x)
        return out

    def describe(self):
        return {"kind": self.kind, "weights": self.weights.tolist(),
                "maps": [m.describe() for m in self.maps]}


class Custom(Mapping):
    """User-supplied evaluator; the Lipschitz check is advisory (warns, never raises)."""

    kind = "custom"

    def __init__(self, fn: Callable, dim: int, norm: NormSpec = EUCLIDEAN,
                 lipschitz: float = 1.0, check: bool = True):
        super().__init__(dim, norm)
        self.fn = fn
        self.lipschitz = float(lipschitz)
        if check:
            self._gate(strict=False)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            return np.asarray(self.fn(x), dtype=float)
        return np.stack([np.asarray(self.fn(row), dtype=float) for row in x])


class Contraction(Mapping):
    """A ``rho``-contraction wrapped around any evaluator."""

    kind = "contraction"

    def __init__(self, base, rho: float, dim: int | None = None, norm: NormSpec | None = None,
                 strict: bool | None = None):
        rho = float(rho)
        if not 0.0 <= rho < 1.0:
            raise ValueError(f"contraction constant must lie in [0, 1), got {rho}")
        if isinstance(base, Mapping):
            dim = base.dim if dim is None else dim
            norm = base.norm if norm is None else norm
            if base.norm != norm:
                raise ValueError("contraction declared under a different norm than its base")
            if isinstance(base, Affine) and base.lipschitz > rho + 1e-12:
                raise NotNonexpansive(
                    f"affine map has exact Lipschitz constant {base.lipschitz:.12g} > rho={rho}")
        elif dim is None:
            raise ValueError("dim is required for a bare callable")
        super().__init__(dim, norm or EUCLIDEAN)
        self.base = base
        self.rho = rho
        self.lipschitz = rho
        if strict is None:
            strict = not isinstance(base, Custom) and isinstance(base, Mapping)
        self._gate(strict=strict)

    def __call__(self, x):
        return self.base(x)

    def describe(self):
        inner = self.base.describe() if isinstance(self.base, Mapping) else {"kind": "callable"}
        return {"kind": self.kind, "rho": self.rho, "base": inner}

    @classmethod
    def affine(cls, rho: float, matrix=None, offset=None, scale: float = 1.0,
               dim: int | None = None, norm: NormSpec = EUCLIDEAN) -> "Contraction":
        return cls(Affine(matrix, offset, scale, dim, norm), rho)

    @classmethod
    def constant(cls, point, norm: NormSpec = EUCLIDEAN) -> "Contraction":
        return cls(Constant(point, norm), 0.0)


def apply(m: Mapping, x) -> np.ndarray:
    return m(as_point(x, m.dim))


def fixed_point_residual(m: Mapping, x, spec: NormSpec | None = None) -> float:
    x = as_point(x, m.dim)
    return (spec or m.norm)(x - m(x))


# -- monotone operators -----------------------------------------------------


class MonotoneOp:
    """Maximal monotone operator on R^d, exposed through its resolvents."""

    kind = "monotone"
    dim: int

    def resolvent(self, lam: float, norm: NormSpec = EUCLIDEAN) -> "Resolvent":
        return Resolvent(self, lam, norm)

    def _resolve(self, lam: float):
        """Return a callable evaluating ``(I + lam A)^{-1}``."""
        raise NotImplementedError

    def describe(self) -> dict:
        return {"kind": self.kind}


class LinearPSD(MonotoneOp):
    """``A x = M x`` with ``M + M^T`` positive semidefinite."""

    kind = "linear_psd"

    def __init__(self, matrix):
        M = np.array(matrix, dtype=float, ndmin=2)
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise DimensionMismatch(f"matrix must be square, got shape {M.shape}")
        sym = 0.5 * (M + M.T)
        lo = float(np.min(np.linalg.eigvalsh(sym)))
        if lo < -1e-12 * max(1.0, float(np.max(np.abs(M)))):
            raise ValueError(f"matrix is not monotone: symmetric part has eigenvalue {lo:.3e}")
        self.matrix = M
        self.dim = M.shape[0]

    def __call__(self, x):
        return np.asarray(x, dtype=float) @ self.matrix.T

    def _resolve(self, lam):
        system = np.eye(self.dim) + lam * self.matrix
        try:
            inv_t = np.linalg.inv(system).T
        except np.linalg.LinAlgError as exc:
            raise SingularSystem(f"I + {lam} M is singular") from exc
        if not np.all(np.isfinite(inv_t)):
            raise SingularSystem(f"I + {lam} M is numerically singular")
        return lambda x: np.asarray(x, dtype=float) @ inv_t

    def null_basis(self, rtol: float = 1e-10) -> np.ndarray:
        """Orthonormal basis (columns) of the zero set ``null(M)``."""
        _, s, vt = np.linalg.svd(self.matrix)
        rank = int(np.sum(s > rtol * max(1.0, s[0] if s.size else 0.0)))
        return vt[rank:].T

    def zero_set_projector(self) -> Callable[[np.ndarray], np.ndarray]:
        basis = self.null_basis()
        proj = basis @ basis.T
        return lambda x: np.asarray(x, dtype=float) @ proj.T

    def describe(self):
        return {"kind": self.kind, "matrix": self.matrix.tolist()}


# proximal maps prox_{lam * w * f}; each is a resolvent of a subdifferential
PROX_CATALOG: dict[str, Callable[[np.ndarray, float], np.ndarray]] = {
    "zero": lambda x, k: x,
    "abs": lambda x, k: _soft(x, k),  # f = |x|
    "square": lambda x, k: x / (1.0 + k),  # f = x^2 / 2
    "nonneg": lambda x, k: np.maximum(x, 0.0),  # indicator of [0, inf)
    "box01": lambda x, k: np.clip(x, 0.0, 1.0),  # indicator of [0, 1]
}


class SubgradientSeparable(MonotoneOp):
    """Subdifferential of ``sum_i w_i f_i(x_i)`` for catalog pieces ``f_i``."""

    kind = "subgradient_separable"

    def __init__(self, pieces: Sequence[str], weights: Sequence[float] | None = None):
        unknown = [p for p in pieces if p not in PROX_CATALOG]
        if unknown:
            raise ValueError(f"unknown convex pieces {unknown}; catalog: {sorted(PROX_CATALOG)}")
        self.pieces = list(pieces)
        self.weights = np.ones(len(pieces)) if weights is None else np.asarray(weights, float)
        if self.weights.shape != (len(pieces),) or np.any(self.weights < 0):
            raise ValueError("weights must be nonnegative, one per piece")
        self.dim = len(pieces)

    def _resolve(self, lam):
        fns = [PROX_CATALOG[p] for p in self.pieces]
        ks = lam * self.weights

        def prox(x):
            x = np.asarray(x, dtype=float)
            out = np.empty_like(x)
            for i, (f, k) in enumerate(zip(fns, ks)):
                out[..., i] = f(x[..., i], k)
            return out
        return prox

    def describe(self):
        return {"kind": self.kind, "pieces": self.pieces, "weights": self.weights.tolist()}


class NormalCone(MonotoneOp):
    """Normal cone of a convex set; every resolvent is the projection onto the set."""

    kind = "normal_cone"

    def __init__(self, cset: ConvexSet):
        self.set = cset
        self.dim = cset.dim

    def _resolve(self, lam):
        return self.set.project

    def describe(self):
        return {"kind": self.kind, "set": repr(self.set)}


class Resolvent(Mapping):
    """``J_lam = (I + lam A)^{-1}``: firmly nonexpansive in the Euclidean norm."""

    kind = "resolvent"

    def __init__(self, op: MonotoneOp, lam: float, norm: NormSpec = EUCLIDEAN):
        lam = float(lam)
        if not lam > 0:
            raise ValueError(f"resolvent parameter must be positive, got {lam}")
        coordinatewise = isinstance(op, SubgradientSeparable) or (
            isinstance(op, NormalCone) and isinstance(op.set, Box))
        if not norm.is_euclidean and not coordinatewise:
            raise NotNonexpansive("resolvents are certified nonexpansive only in the Euclidean norm")
        super().__init__(op.dim, norm)
        self.op = op
        self.lam = lam
        self._fn = op._resolve(lam)
        self._gate()

    def __call__(self, x):
        return self._fn(x)

    def describe(self):
        return {"kind": self.kind, "lambda": self.lam, "operator": self.op.describe()}


def resolvent(op: MonotoneOp, lam: float, norm: NormSpec = EUCLIDEAN) -> Resolvent:
    return op.resolvent(lam, norm)


def validate_point_for(m: Mapping, x) -> np.ndarray:
    x = as_point(x)
    check_dim(x, m.dim)
    return x
