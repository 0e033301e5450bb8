"""Rates of asymptotic regularity for the explicit viscosity scheme.

All bounds are evaluated in exact arithmetic: real inputs are converted to
``Fraction`` (the exact binary value of the float), step-size moduli return
Python integers, and ``theta`` compositions such as ``4^n - 1`` are big
integers.  Logarithm ceilings go through high-precision ``mpmath`` and are
checked against ``exp`` so they are never undersized.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Real
from typing import Callable

import mpmath
import numpy as np

from .errors import EpsilonOutOfRange, TraceTooShort, Underdetermined, ValidationError
from .geometry import ConvexSet, NormSpec, as_point
from .schemes import SLACK, Trace

LN_2_62 = 62 * math.log(2)


DECIMAL_DIGITS_MAX = 4000


def int_text(n: int) -> str:
    """Exact text for a big integer: decimal up to 4000 digits, hexadecimal beyond.

    Python caps decimal conversion of huge integers; hexadecimal has no such cap.
    """
    if n.bit_length() * 0.30103 < DECIMAL_DIGITS_MAX:
        return str(n)
    return hex(n)


def _mp(q: Fraction) -> mpmath.mpf:
    return mpmath.mpf(q.numerator) / q.denominator


def ceil_ln(x: Real) -> int:
    """``ceil(ln x)`` for ``x > 0``; near-integer logarithms round up after an ``exp`` check."""
    q = Fraction(x)
    if q <= 0:
        raise ValueError(f"logarithm of non-positive value {x}")
    with mpmath.workdps(60):
        v = mpmath.log(_mp(q))
        nearest = int(mpmath.nint(v))
        k = nearest if abs(v - nearest) < mpmath.mpf(10) ** -40 else int(mpmath.ceil(v))
    with mpmath.workdps(100):
        while mpmath.exp(k) < _mp(q):
            k += 1
    return k


def _log_term(x: Fraction) -> int:
    # ceil(ln x) enters the bounds as a count of contraction rounds; clamp at 0
    return max(0, ceil_ln(x))


def _check_eps(eps: Real) -> Fraction:
    q = Fraction(eps)
    if not 0 < q < 2:
        raise EpsilonOutOfRange(f"epsilon must lie in (0,2), got {eps}")
    return q


def quant_liu_bound(gamma: Callable[[Real], int], delta: Callable[[int], int], D: Real,
                    epsilon: Real) -> int:
    """``delta(gamma(eps/2) + 1 + ceil(ln(2D/eps)))``.

    If ``a_{n+1} <= (1 - l_{n+1}) a_n + b_n`` with ``delta`` a rate of divergence of
    ``sum l_n``, ``gamma`` a Cauchy modulus of ``sum b_n`` and ``D >= a_n``, then
    ``a_n < eps`` for every ``n`` at or beyond the returned index.
    """
    eps = _check_eps(epsilon)
    D = Fraction(D)
    if D <= 0:
        raise ValueError("D must be positive")
    return int(delta(int(gamma(eps / 2)) + 1 + _log_term(2 * D / eps)))


@dataclass(frozen=True)
class RateInputs:
    rho: float
    M: float
    D: float
    epsilon: float
    schedule_id: str = ""
    dC: float | None = None
    variant: str = "general"  # "general" uses (1+rho)D + M, "decreasing" uses (2+rho)dC

    def __post_init__(self):
        _check_eps(self.epsilon)
        if not 0 <= self.rho < 1:
            raise ValueError(f"rho must lie in [0, 1), got {self.rho}")
        if not self.D > 0:
            raise ValueError(f"D must be positive, got {self.D}")
        if not self.M >= 0:
            raise ValueError(f"M must be nonnegative, got {self.M}")
        if self.variant not in ("general", "decreasing"):
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.variant == "decreasing" and (self.dC is None or not self.dC > 0):
            raise ValueError("the decreasing variant needs a positive diameter dC")

    @property
    def P(self) -> Fraction:
        rho = Fraction(self.rho)
        if self.variant == "decreasing":
            return (2 + rho) * Fraction(self.dC)
        return (1 + rho) * Fraction(self.D) + Fraction(self.M)

    def to_dict(self):
        P = self.P
        return {"rho": self.rho, "M": self.M, "D": self.D, "dC": self.dC,
                "epsilon": self.epsilon, "schedule_id": self.schedule_id,
                "variant": self.variant, "P": f"{P.numerator}/{P.denominator}"}

    @classmethod
    def from_dict(cls, d):
        inputs = cls(rho=d["rho"], M=d["M"], D=d["D"], epsilon=d["epsilon"],
                     schedule_id=d.get("schedule_id", ""), dC=d.get("dC"),
                     variant=d.get("variant", "general"))
        if "P" in d:
            num, den = (int(s) for s in d["P"].split("/"))
            if Fraction(num, den) != inputs.P:
                raise ValidationError("stored P does not match its recomputation", "P")
        return inputs


@dataclass
class Verdict:
    status: str  # "pass", "fail", "unverifiable-at-budget" or "underdetermined"
    epsilon: float
    certified_index: int | None = None
    checked: int = 0
    witness: int | None = None
    witness_residual: float | None = None
    first_crossing: int | None = None
    settled_index: int | None = None
    detail: str = ""

    def to_dict(self):
        return {k: getattr(self, k) for k in (
            "status", "epsilon", "certified_index", "checked", "witness", "witness_residual",
            "first_crossing", "settled_index", "detail")}


@dataclass
class RateCertificate:
    kind: str  # quant_liu_h, psi_general, psi_decreasing or theta_harmonic
    value: int | None
    inputs: RateInputs
    ln_value: float | None = None
    parts: dict = field(default_factory=dict)
    verification: Verdict | None = None

    def __post_init__(self):
        if self.value is not None and self.value < 1:
            raise ValueError("certificate values are >= 1")

    @property
    def epsilon(self) -> float:
        return self.inputs.epsilon

    def log_value(self) -> float:
        return self.ln_value if self.ln_value is not None else math.log(self.value)

    def to_dict(self):
        text = None if self.value is None else int_text(self.value)
        out = {"kind": self.kind, "inputs": self.inputs.to_dict(),
               "value_decimal": text if text is None or not text.startswith("0x") else None,
               "value_hex": text if text is not None and text.startswith("0x") else None,
               "ln_value": self.log_value(), "parts": self.parts,
               "verdict": None if self.verification is None else self.verification.to_dict()}
        return out


def _psi(moduli, rho: float, D: Fraction, P: Fraction, eps: Fraction, use_beta: bool):
    k = math.ceil(1 / (1 - Fraction(rho)))
    small = eps / (4 * P)
    beta = moduli.cauchy_modulus(small) if use_beta else moduli.rate_of_convergence(small)
    inner = k * (int(beta) + 2 + _log_term(4 * D / eps))
    h1 = 1 + int(moduli.divergence_modulus(inner))
    h2 = 1 + int(moduli.rate_of_convergence(eps / (2 * P)))
    return max(h1, h2), {"k": k, "inner": int_text(inner), "h1": int_text(h1),
                         "h2": int_text(h2)}


def psi_general(inputs: RateInputs, moduli) -> RateCertificate:
    """Index past which ``||x_n - T x_n|| < eps`` for the explicit scheme.

    ``max(1 + theta(k (beta(eps/4P) + 2 + ceil(ln(4D/eps)))), 1 + phi(eps/2P))`` with
    ``k = ceil(1/(1-rho))`` and ``P = (1+rho) D + M``.  ``moduli`` is a schedule (or
    :class:`~viscoreg.moduli.ModuliTriple`) providing phi, beta and theta.
    """
    if inputs.variant != "general":
        raise ValueError("psi_general takes general-variant inputs")
    eps = Fraction(inputs.epsilon)
    value, parts = _psi(moduli, inputs.rho, Fraction(inputs.D), inputs.P, eps, True)
    return RateCertificate("psi_general", value, inputs, parts=parts)


def psi_decreasing(moduli, rho: float, dC: float, epsilon: float,
                   prefix: int = 10_000) -> RateCertificate:
    """Bound for a decreasing schedule on a bounded set: phi replaces beta, ``P = (2+rho) dC``."""
    inputs = RateInputs(rho=rho, M=dC, D=dC, epsilon=epsilon, dC=dC, variant="decreasing",
                        schedule_id=getattr(moduli, "schedule_id", ""))
    moduli.check_decreasing(prefix)
    value, parts = _psi(moduli, rho, Fraction(dC), inputs.P, Fraction(epsilon), False)
    return RateCertificate("psi_decreasing", value, inputs, parts=parts)


def theta_harmonic(rho: float, dC: float, epsilon: float) -> RateCertificate:
    """``exp(4/(1-rho) (16 dC/eps + 2))`` for ``alpha_n = 1/(n+1)``, kept in log form."""
    eps = _check_eps(epsilon)
    inputs = RateInputs(rho=rho, M=dC, D=dC, epsilon=epsilon, dC=dC, variant="decreasing",
                        schedule_id="harmonic")
    ln_exact = Fraction(4) / (1 - Fraction(rho)) * (16 * Fraction(dC) / eps + 2)
    ln_value = float(ln_exact)
    value = None
    if ln_value <= LN_2_62:
        with mpmath.workdps(60):
            value = int(mpmath.ceil(mpmath.exp(_mp(ln_exact))))
    return RateCertificate("theta_harmonic", value, inputs, ln_value=ln_value,
                           parts={"ln_exact": f"{ln_exact.numerator}/{ln_exact.denominator}"})


def recompute(cert: RateCertificate, moduli=None) -> RateCertificate:
    """Rebuild a certificate from its stored inputs (bit-identical when nothing changed)."""
    i = cert.inputs
    if cert.kind == "psi_general":
        return psi_general(i, moduli)
    if cert.kind == "psi_decreasing":
        return psi_decreasing(moduli, i.rho, i.dC, i.epsilon)
    if cert.kind == "theta_harmonic":
        return theta_harmonic(i.rho, i.dC, i.epsilon)
    raise ValueError(f"cannot recompute {cert.kind}")


# -- bounds on M and D --------------------------------------------------------


@dataclass(frozen=True)
class Bounds:
    M: float
    D: float
    route: str  # "diameter", "fixed-point" or "diameter+fixed-point"
    dC: float | None = None


def derive_bounds(Phi, x0, rho: float | None = None, *, domain: ConvexSet | None = None,
                  fixed_point=None, T=None, norm: NormSpec | None = None) -> Bounds:
    """``M = ||Phi(x0) - x0||`` and a bound ``D`` on ``||x_n - x_m||``.

    With a bounded ``domain`` C that the iterates x_1, x_2, ... stay in, ``D = d_C + dist(x0, C)``.
    With a known fixed point ``p`` of T, the trajectory stays within
    ``r = max(||x0 - p||, ||Phi(p) - p|| / (1 - rho))`` of ``p`` and ``D = 2r``.
    When both routes apply the smaller bound is kept.
    """
    norm = norm or Phi.norm
    rho = Phi.rho if rho is None else rho
    x0 = as_point(x0, Phi.dim)
    M = float(norm(Phi(x0) - x0))
    candidates = []
    dC = None
    if domain is not None:
        dC = domain.diameter(norm)
        if math.isfinite(dC):
            dist = float(norm(x0 - domain.project(x0)))
            candidates.append(("diameter", dC + dist))
    if fixed_point is not None:
        p = as_point(fixed_point, Phi.dim)
        if T is not None:
            gap = float(norm(T(p) - p))
            if gap > 1e-9:
                raise ValidationError(f"declared fixed point is moved by T (||Tp - p|| = {gap:.3e})",
                                      "fixed_point")
        r = max(float(norm(x0 - p)), float(norm(Phi(p) - p)) / (1 - rho))
        candidates.append(("fixed-point", 2 * r))
    if not candidates:
        raise Underdetermined("no bounded domain and no known fixed point: cannot bound D")
    route, D = min(candidates, key=lambda c: c[1])
    if D == 0.0:
        # a trajectory pinned at a single point; any positive D is an upper bound
        D = math.ulp(1.0)
    return Bounds(M=M, D=D, route=route, dC=dC if dC is not None and math.isfinite(dC) else None)


# -- empirical verification ---------------------------------------------------


def verify_certificate(trace: Trace, cert: RateCertificate, budget: int,
                       slack: float = SLACK) -> Verdict:
    """Check ``fix_residual[n] < eps`` for every recorded ``n`` at or beyond the bound.

    Certificates beyond ``budget`` are reported as ``unverifiable-at-budget`` together
    with the observed crossing indices.
    """
    eps = cert.epsilon
    value = cert.value
    end = trace.N
    need = budget if value is None else min(value, budget)
    if end < need:
        raise TraceTooShort(f"trace ends at {end}, verification needs index {need}")
    verdict = Verdict("pass", eps, value, first_crossing=trace.first_crossing(eps),
                      settled_index=trace.settled_index(eps))
    if value is None or value > budget:
        verdict.status = "unverifiable-at-budget"
        verdict.detail = f"certified index exceeds budget {budget}"
    else:
        tail = trace.fix_residuals[value:]
        verdict.checked = int(tail.size)
        bad = np.flatnonzero(tail >= eps + slack)
        if bad.size:
            verdict.status = "fail"
            verdict.witness = value + int(bad[0])
            verdict.witness_residual = float(tail[bad[0]])
    cert.verification = verdict
    return verdict


def log_spaced_indices(start: int, end: int, count: int = 100) -> np.ndarray:
    """``start`` together with up to ``count`` log-spaced indices in ``(start, end]``."""
    if end <= start:
        return np.array([start])
    later = np.unique(np.geomspace(start + 1, end, count).round().astype(np.int64))
    return np.concatenate([[start], later[(later > start) & (later <= end)]])


def theta_dominance(rhos, dcs, epsilons) -> list[dict]:
    """Compare ``ln Psi`` (harmonic moduli) against ``ln Theta`` on a grid."""
    from .moduli import HarmonicSchedule

    h = HarmonicSchedule()
    rows = []
    for rho in rhos:
        for dC in dcs:
            for eps in epsilons:
                psi = psi_decreasing(h, rho, dC, eps, prefix=16)
                th = theta_harmonic(rho, dC, eps)
                ln_psi = math.log(psi.value)
                rows.append({"rho": rho, "dC": dC, "epsilon": eps, "ln_psi": ln_psi,
                             "ln_theta": th.ln_value, "holds": ln_psi < th.ln_value})
    return rows
