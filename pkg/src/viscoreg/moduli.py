"""Step-size schedules together with their quantitative moduli.

A schedule carries three moduli:

* ``rate_of_convergence(eps)``: an index ``N`` with ``alpha_n < eps`` for all ``n >= N``;
* ``cauchy_modulus(eps)``: an index ``N`` with ``|t_{N+k} - t_N| < eps`` for all ``k``, where
  ``t_n`` are the partial sums of ``|alpha_{i+1} - alpha_i|``;
* ``divergence_modulus(n)``: an index ``K`` with ``alpha_0 + ... + alpha_K >= n``.

Moduli are never inferred from samples.  Closed forms are evaluated in exact
rational arithmetic (or high-precision ``mpmath`` where a fractional power is
involved) and rounded *up*, so every returned index is a valid modulus.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Real
from typing import Callable, Sequence

import mpmath
import numpy as np

from .errors import MissingModulus, NotDecreasing, OutOfRange


class BoundaryStepWarning(UserWarning):
    """``alpha_0 == 1`` sits on the boundary of the open interval (0, 1)."""


def _positive_fraction(eps: Real, what: str = "epsilon") -> Fraction:
    q = Fraction(eps)
    if q <= 0:
        raise ValueError(f"{what} must be positive, got {eps}")
    return q


def _ceil_mp(expr: Callable[[], mpmath.mpf]) -> int:
    """Ceiling of a high-precision real, evaluated with ample guard digits."""
    with mpmath.workdps(50):
        v = expr()
        digits = int(mpmath.log10(abs(v) + 1)) + 1 if v != 0 else 1
    with mpmath.workdps(digits + 40):
        v = expr()
        return int(mpmath.ceil(v))


class StepSchedule:
    """Base class; subclasses define ``alpha``/``alphas`` and the three moduli."""

    name = "schedule"
    decreasing = False

    def alpha(self, n: int) -> float:
        raise NotImplementedError

    def alphas(self, count: int) -> np.ndarray:
        """``alpha_0, ..., alpha_{count-1}`` as a float array."""
        return np.array([self.alpha(n) for n in range(count)], dtype=float)

    def rate_of_convergence(self, eps: Real) -> int:
        raise MissingModulus(f"{self.name}: no rate of convergence")

    def cauchy_modulus(self, eps: Real) -> int:
        raise MissingModulus(f"{self.name}: no Cauchy modulus for the difference series")

    def divergence_modulus(self, n: int) -> int:
        raise MissingModulus(f"{self.name}: no rate of divergence")

    def describe(self) -> dict:
        return {"family": self.name}

    @property
    def schedule_id(self) -> str:
        parts = [f"{k}={v}" for k, v in self.describe().items() if k != "family"]
        return self.name + (f"({','.join(parts)})" if parts else "")

    def check_decreasing(self, prefix: int = 10_000) -> None:
        """Raise :class:`NotDecreasing` with a witness if the prefix ever increases."""
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", BoundaryStepWarning)
            a = self.alphas(prefix)
        up = np.flatnonzero(np.diff(a) > 0)
        if up.size:
            i = int(up[0])
            raise NotDecreasing(
                f"{self.schedule_id}: alpha_{i + 1} = {a[i + 1]!r} > alpha_{i} = {a[i]!r}",
                witness=i + 1)


class PowerSchedule(StepSchedule):
    """``alpha_n = c / (n+1)^a`` with ``0 < c <= 1`` and ``0 < a <= 1``."""

    name = "power"
    decreasing = True

    def __init__(self, c: float = 1.0, a: float = 1.0):
        if not (0 < c <= 1):
            raise OutOfRange(f"power schedule needs 0 < c <= 1, got c={c}")
        if not (0 < a <= 1):
            raise OutOfRange(f"power schedule needs 0 < a <= 1, got a={a}")
        self.c = float(c)
        self.a = float(a)

    def describe(self):
        return {"family": self.name, "c": self.c, "a": self.a}

    def alpha(self, n: int) -> float:
        if n < 0:
            raise OutOfRange(f"index must be >= 0, got {n}")
        value = self.c / (n + 1) ** self.a
        if n == 0 and value == 1.0:
            warnings.warn(f"{self.schedule_id}: alpha_0 = 1 lies on the boundary of (0, 1)",
                          BoundaryStepWarning, stacklevel=2)
        elif not (0.0 < value < 1.0):
            raise OutOfRange(f"{self.schedule_id}: alpha_{n} = {value!r} outside (0, 1)")
        return value

    def alphas(self, count: int) -> np.ndarray:
        idx = np.arange(1, count + 1, dtype=float)
        out = self.c / idx if self.a == 1.0 else self.c / idx ** self.a
        if count and out[0] == 1.0:
            warnings.warn(f"{self.schedule_id}: alpha_0 = 1 lies on the boundary of (0, 1)",
                          BoundaryStepWarning, stacklevel=2)
        if count and out[-1] <= 0.0:
            raise OutOfRange(f"{self.schedule_id}: alpha underflows to 0 before index {count}")
        return out

    def rate_of_convergence(self, eps: Real) -> int:
        # c/(N+1)^a < eps  <=  N + 1 > (c/eps)^(1/a); N = ceil((c/eps)^(1/a)) leaves a
        # margin of one index (this is where the harmonic closed form ceil(1/eps) - 1 gains +1)
        q = _positive_fraction(eps)
        if self.a == 1.0:
            v = Fraction(self.c) / q
            return max(0, math.ceil(v))
        c, a = Fraction(self.c), Fraction(self.a)
        return max(0, _ceil_mp(lambda: (mpmath.mpf(c.numerator) / c.denominator * q.denominator
                                        / q.numerator) ** (mpmath.mpf(a.denominator) / a.numerator)))

    def cauchy_modulus(self, eps: Real) -> int:
        # decreasing: t_{N+k} - t_N = alpha_{N+1} - alpha_{N+k+1} < alpha_{N+1}
        return self.rate_of_convergence(eps)

    def divergence_modulus(self, n: int) -> int:
        n = int(n)
        if n < 0:
            raise ValueError(f"divergence modulus takes n >= 0, got {n}")
        if n == 0:
            return 0
        c = Fraction(self.c)
        if self.a == 1.0:
            # c * H_{4^m} >= c * ln(4^m + 1) > c * m * ln 4 >= n once m >= n / c
            m = math.ceil(Fraction(n) / c)
            return 4 ** m - 1
        # sum_{i<=K} c (i+1)^-a >= c ((K+2)^(1-a) - 1) / (1-a)
        one_minus_a = 1 - Fraction(self.a)
        base = Fraction(n) * one_minus_a / c + 1

        def expr():
            b = mpmath.mpf(base.numerator) / base.denominator
            return b ** (mpmath.mpf(one_minus_a.denominator) / one_minus_a.numerator)

        return max(0, _ceil_mp(expr) - 2)


class HarmonicSchedule(PowerSchedule):
    """``alpha_n = 1/(n+1)``; moduli ``ceil(1/eps)`` and ``4^n - 1``."""

    name = "harmonic"

    def __init__(self):
        super().__init__(1.0, 1.0)

    def describe(self):
        return {"family": self.name}


def _lookup(table: Sequence[tuple[float, int]] | None, eps: Real, what: str) -> int:
    # a modulus valid at eps' stays valid for every eps >= eps'
    if not table:
        raise MissingModulus(f"table schedule has no {what}")
    q = Fraction(eps)
    best = None
    for e, idx in table:
        if Fraction(e) <= q and (best is None or Fraction(e) > best[0]):
            best = (Fraction(e), int(idx))
    if best is None:
        smallest = min(e for e, _ in table)
        raise MissingModulus(f"{what} is tabulated only for eps >= {smallest}, asked {eps}")
    return best[1]


class TableSchedule(StepSchedule):
    """Finite user table of step sizes with explicitly supplied moduli.

    ``rate`` and ``cauchy`` are lists of ``(eps, index)`` pairs; ``divergence`` lists
    ``K_0, K_1, ...`` for ``n = 0, 1, ...``.
    """

    name = "table"

    def __init__(self, values: Sequence[float], rate=None, cauchy=None, divergence=None):
        vals = np.asarray(values, dtype=float)
        if vals.ndim != 1 or vals.size == 0:
            raise ValueError("table schedule needs a nonempty list of step sizes")
        if not (0.0 < vals[0] <= 1.0) or np.any((vals[1:] <= 0.0) | (vals[1:] >= 1.0)):
            bad = int(np.flatnonzero((vals <= 0) | (vals >= 1))[0])
            raise OutOfRange(f"table step alpha_{bad} = {vals[bad]!r} outside (0, 1)")
        self.values = vals
        self.rate = [(float(e), int(i)) for e, i in (rate or [])]
        self.cauchy = [(float(e), int(i)) for e, i in (cauchy or [])]
        self.divergence = [int(k) for k in (divergence or [])]
        self.decreasing = bool(np.all(np.diff(vals) <= 0))

    def describe(self):
        return {"family": self.name, "length": int(self.values.size)}

    def alpha(self, n):
        if not 0 <= n < self.values.size:
            raise OutOfRange(f"table schedule has {self.values.size} entries, asked index {n}")
        return float(self.values[n])

    def alphas(self, count):
        if count > self.values.size:
            raise OutOfRange(f"table schedule has {self.values.size} entries, asked {count}")
        return self.values[:count].copy()

    def rate_of_convergence(self, eps):
        return _lookup(self.rate, eps, "rate of convergence")

    def cauchy_modulus(self, eps):
        if self.cauchy:
            return _lookup(self.cauchy, eps, "Cauchy modulus")
        if self.decreasing:
            return self.rate_of_convergence(eps)
        raise MissingModulus("table schedule is not decreasing and supplies no Cauchy modulus")

    def divergence_modulus(self, n):
        if not 0 <= n < len(self.divergence):
            raise MissingModulus(f"rate of divergence tabulated for n < {len(self.divergence)}")
        return self.divergence[n]

    def check_decreasing(self, prefix=10_000):
        super().check_decreasing(min(prefix, self.values.size))


@dataclass
class ModuliTriple:
    """Bare moduli without an underlying sequence (used for formula evaluation)."""

    phi: Callable[[Real], int]
    beta: Callable[[Real], int] | None = None
    theta: Callable[[int], int] | None = None
    decreasing: bool = True
    name: str = "moduli"

    @property
    def schedule_id(self):
        return self.name

    def rate_of_convergence(self, eps):
        return int(self.phi(eps))

    def cauchy_modulus(self, eps):
        if self.beta is None:
            raise MissingModulus("no Cauchy modulus supplied")
        return int(self.beta(eps))

    def divergence_modulus(self, n):
        if self.theta is None:
            raise MissingModulus("no rate of divergence supplied")
        return int(self.theta(n))

    def check_decreasing(self, prefix=0):
        if not self.decreasing:
            raise NotDecreasing(f"{self.name} is not declared decreasing")


def make_schedule(family: str, **params) -> StepSchedule:
    family = family.lower()
    if family == "harmonic":
        if params:
            raise ValueError(f"harmonic schedule takes no parameters, got {sorted(params)}")
        return HarmonicSchedule()
    if family == "power":
        return PowerSchedule(**params)
    if family == "table":
        return TableSchedule(**params)
    raise ValueError(f"unknown schedule family {family!r}")


# -- validation -------------------------------------------------------------


@dataclass
class ModulusCheck:
    kind: str  # "range", "rate", "cauchy" or "divergence"
    argument: float | int | None
    modulus: int | None
    status: str  # "pass", "fail", "warning" or "skipped"
    witness: int | None = None
    detail: str = ""

    def to_dict(self):
        return {"kind": self.kind, "argument": self.argument, "modulus": self.modulus,
                "status": self.status, "witness": self.witness, "detail": self.detail}


@dataclass
class ValidationReport:
    schedule_id: str
    budget: int
    checks: list[ModulusCheck] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not any(c.status == "fail" for c in self.checks)

    @property
    def violations(self) -> list[ModulusCheck]:
        return [c for c in self.checks if c.status == "fail"]

    def to_dict(self):
        return {"schedule": self.schedule_id, "budget": self.budget, "ok": self.ok,
                "checks": [c.to_dict() for c in self.checks]}


def validate_moduli(schedule: StepSchedule, budget: int, eps_grid: Sequence[float],
                    divergence_ns: Sequence[int] = range(9)) -> ValidationReport:
    """Check each modulus against its definition by direct scanning up to ``budget``."""
    if budget < 1:
        raise ValueError("budget must be >= 1")
    if isinstance(schedule, TableSchedule):
        budget = min(budget, schedule.values.size - 1)
    report = ValidationReport(schedule.schedule_id, budget)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", BoundaryStepWarning)
        a = schedule.alphas(budget + 1)

    if a[0] == 1.0:
        report.checks.append(ModulusCheck("range", 0, None, "warning", 0,
                                          "alpha_0 = 1 on the boundary of (0, 1)"))
    bad = np.flatnonzero((a[1:] <= 0.0) | (a[1:] >= 1.0))
    if bad.size:
        report.checks.append(ModulusCheck("range", None, None, "fail", int(bad[0]) + 1,
                                          "step size outside (0, 1)"))
    else:
        report.checks.append(ModulusCheck("range", None, None, "pass"))

    diffs = np.abs(np.diff(a))
    partial = np.cumsum(a)
    for eps in eps_grid:
        n0 = schedule.rate_of_convergence(eps)
        if n0 > budget:
            report.checks.append(ModulusCheck("rate", eps, n0, "skipped",
                                              detail="skipped: modulus exceeds budget"))
        else:
            hits = np.flatnonzero(a[n0:] >= eps)
            if hits.size:
                report.checks.append(ModulusCheck("rate", eps, n0, "fail", n0 + int(hits[0]),
                                                  f"alpha >= {eps} after the modulus"))
            else:
                report.checks.append(ModulusCheck("rate", eps, n0, "pass"))

        try:
            n1 = schedule.cauchy_modulus(eps)
        except MissingModulus as exc:
            report.checks.append(ModulusCheck("cauchy", eps, None, "skipped", detail=str(exc)))
            continue
        if n1 + 1 > budget:
            report.checks.append(ModulusCheck("cauchy", eps, n1, "skipped",
                                              detail="skipped: modulus exceeds budget"))
            continue
        # t_{n1+k} - t_{n1} = sum_{i=n1+1}^{n1+k} |alpha_{i+1} - alpha_i|
        tail = np.cumsum(diffs[n1 + 1:])
        hits = np.flatnonzero(tail >= eps)
        if hits.size:
            report.checks.append(ModulusCheck("cauchy", eps, n1, "fail", n1 + int(hits[0]) + 1,
                                              "tail of the difference series >= eps"))
        else:
            report.checks.append(ModulusCheck("cauchy", eps, n1, "pass"))

    for n in divergence_ns:
        try:
            k = schedule.divergence_modulus(n)
        except MissingModulus as exc:
            report.checks.append(ModulusCheck("divergence", n, None, "skipped", detail=str(exc)))
            continue
        if k > budget:
            report.checks.append(ModulusCheck("divergence", n, k, "skipped",
                                              detail="skipped: modulus exceeds budget"))
        elif partial[k] >= n:
            report.checks.append(ModulusCheck("divergence", n, k, "pass"))
        else:
            report.checks.append(ModulusCheck("divergence", n, k, "fail", k,
                                              f"partial sum {partial[k]:.6g} < {n}"))
    return report
