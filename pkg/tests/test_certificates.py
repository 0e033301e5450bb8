import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from viscoreg.certificates import (RateInputs, ceil_ln, derive_bounds, int_text,
                                   log_spaced_indices, psi_decreasing, psi_general,
                                   quant_liu_bound, recompute, theta_dominance, theta_harmonic,
                                   verify_certificate)
from viscoreg.errors import (EpsilonOutOfRange, MissingModulus, NotDecreasing, TraceTooShort,
                             Underdetermined, ValidationError)
from viscoreg.geometry import Ball, Box, diameter
from viscoreg.moduli import HarmonicSchedule, ModuliTriple, PowerSchedule, TableSchedule
from viscoreg.operators import Contraction, Identity, Projection
from viscoreg.schemes import explicit_iterate

H = HarmonicSchedule()
TOY = ModuliTriple(phi=lambda e: 0, beta=lambda e: 0, theta=lambda n: n, name="toy")


def test_ceil_ln_is_conservative_near_integers():
    assert ceil_ln(math.e) == 1
    assert ceil_ln(4) == 2
    assert ceil_ln(math.exp(3)) >= 3
    assert ceil_ln(1) == 0
    assert ceil_ln(0.5) == 0  # clamped: the term counts steps


def test_quant_liu_examples():
    assert quant_liu_bound(lambda e: 0, lambda n: n, 1, 1) == 2
    assert quant_liu_bound(lambda e: 0, lambda n: n, 1, 2 - 1e-9) == 2
    with pytest.raises(EpsilonOutOfRange):
        quant_liu_bound(lambda e: 0, lambda n: n, 1, 2)


def test_psi_general_harmonic_is_exactly_four_to_the_28():
    cert = psi_general(RateInputs(rho=0.5, M=1, D=1, epsilon=1), H)
    assert cert.value == 4 ** 28
    assert isinstance(cert.value, int)


def test_psi_general_toy_is_five():
    assert psi_general(RateInputs(rho=0, M=1, D=1, epsilon=1), TOY).value == 5


def test_psi_general_rejects_epsilon_two():
    with pytest.raises(EpsilonOutOfRange):
        RateInputs(rho=0.5, M=1, D=1, epsilon=2)


def test_psi_general_needs_all_moduli():
    no_theta = TableSchedule([0.5] * 4, rate=[(0, 1)], cauchy=[(0, 1)])
    with pytest.raises(MissingModulus):
        psi_general(RateInputs(rho=0.5, M=1, D=1, epsilon=1), no_theta)


def test_psi_decreasing_examples():
    assert psi_decreasing(H, 0.5, 1, 1).value == 4 ** 28
    with pytest.raises(NotDecreasing):
        psi_decreasing(TableSchedule([0.1, 0.2, 0.3], rate=[(0, 0)]), 0.5, 1, 1)
    dC = diameter(Ball([0.0, 0.0], 1.0))
    toy = ModuliTriple(phi=H.rate_of_convergence, beta=None, theta=lambda n: n, name="toy")
    assert psi_decreasing(toy, 0.0, dC, 1).value == 22


def test_theta_harmonic_examples():
    c = theta_harmonic(0.5, 1, 1)
    assert c.value is None
    assert c.ln_value == pytest.approx(144, rel=1e-12)
    c = theta_harmonic(0, 1, 2 - 1e-12)
    assert c.ln_value == pytest.approx(40, rel=1e-12)
    assert c.value == pytest.approx(2.3538526683702e17, rel=1e-9)
    c = theta_harmonic(1 - 1e-6, 1, 1)
    assert math.isfinite(c.ln_value) and c.ln_value == pytest.approx(4e6 * 18, rel=1e-6)


def test_derive_bounds_examples():
    b = derive_bounds(Contraction.affine(0.5, scale=0.5, dim=1), [0.3], domain=Box([0.0], [1.0]))
    assert b.D == 1 and b.M == pytest.approx(0.15)
    b = derive_bounds(Contraction.affine(0.5, scale=0.5, dim=1), [1.0], fixed_point=[0.0],
                      T=Identity(1))
    assert (b.M, b.D) == (0.5, 2.0)
    with pytest.raises(Underdetermined):
        derive_bounds(Contraction.affine(0.5, scale=0.5, dim=1), [1.0])


def test_derive_bounds_rejects_false_fixed_point():
    with pytest.raises(ValidationError):
        derive_bounds(Contraction.affine(0.5, scale=0.5, dim=1), [1.0], fixed_point=[2.0],
                      T=Projection(Box([0.0], [1.0])))


def _toy_trace(N=1000):
    return explicit_iterate(Projection(Box([0.0], [1.0])), Contraction.constant([0.0]),
                            TableSchedule([0.5] * N), [1.0], N)


def test_verify_toy_passes():
    cert = psi_general(RateInputs(rho=0, M=1, D=1, epsilon=1), TOY)
    v = verify_certificate(_toy_trace(), cert, 10 ** 6)
    assert v.status == "pass" and v.checked == 1000 - 5 + 1


def test_verify_large_certificate_is_unverifiable():
    tr = explicit_iterate(Projection(Box([0.0], [1.0])), Contraction.affine(0.5, scale=0.5,
                          offset=[0.5]), H, [5.0], 2000)
    cert = psi_general(RateInputs(rho=0.5, M=1, D=1, epsilon=1), H)
    v = verify_certificate(tr, cert, 2000)
    assert v.status == "unverifiable-at-budget"
    assert v.first_crossing is not None and v.first_crossing < cert.value


def test_verify_detects_injected_spike():
    tr = _toy_trace()
    tr.fix_residuals[700] = 3.0
    cert = psi_general(RateInputs(rho=0, M=1, D=1, epsilon=1), TOY)
    v = verify_certificate(tr, cert, 10 ** 6)
    assert v.status == "fail" and v.witness == 700


def test_verify_trace_too_short():
    cert = psi_general(RateInputs(rho=0, M=1, D=1, epsilon=1), TOY)
    with pytest.raises(TraceTooShort):
        verify_certificate(_toy_trace(3), cert, 10 ** 6)


def test_inputs_round_trip_and_tamper_check():
    i = RateInputs(rho=0.5, M=0.125, D=1.0, epsilon=0.5, schedule_id="harmonic")
    d = i.to_dict()
    assert RateInputs.from_dict(d) == i
    d["P"] = "3/2"
    with pytest.raises(ValidationError):
        RateInputs.from_dict(d)


def test_recompute_is_bit_identical():
    cert = psi_general(RateInputs(rho=0.3, M=0.7, D=1.3, epsilon=0.2), PowerSchedule(0.05, 0.5))
    again = recompute(cert, PowerSchedule(0.05, 0.5))
    assert again.value == cert.value and again.to_dict() == cert.to_dict()


def test_huge_certificates_serialise_exactly():
    cert = psi_decreasing(H, 0.9, 5, 0.01, prefix=16)
    d = cert.to_dict()
    assert d["value_decimal"] is None and int(d["value_hex"], 16) == cert.value
    assert int_text(10 ** 20) == "100000000000000000000"


def test_log_spaced_indices():
    idx = log_spaced_indices(5, 10 ** 6)
    assert idx[0] == 5 and idx[-1] == 10 ** 6 and len(idx) <= 101
    assert np.all(np.diff(idx) > 0)


def test_theta_dominates_psi_on_grid():
    rows = theta_dominance([0, 0.5, 0.9], [0.5, 1, 2], [1.9, 1, 0.1])
    assert all(r["holds"] for r in rows)


SCHEDULES = [H, PowerSchedule(0.5, 1), PowerSchedule(0.045, 0.5), PowerSchedule(0.3, 0.75)]


@settings(max_examples=60, deadline=None)
@given(sched=st.sampled_from(SCHEDULES), rho=st.floats(0, 0.9), M=st.floats(0, 3),
       D=st.floats(0.01, 3), eps=st.floats(0.01, 1.99), bump=st.floats(1.0, 2.0))
def test_psi_monotone(sched, rho, M, D, eps, bump):
    base = psi_general(RateInputs(rho=rho, M=M, D=D, epsilon=eps), sched).value
    smaller_eps = psi_general(RateInputs(rho=rho, M=M, D=D, epsilon=eps / bump), sched).value
    more_d = psi_general(RateInputs(rho=rho, M=M, D=D * bump, epsilon=eps), sched).value
    more_m = psi_general(RateInputs(rho=rho, M=M * bump + 0.1, D=D, epsilon=eps), sched).value
    more_rho = psi_general(RateInputs(rho=min(0.95, rho + 0.05 * bump), M=M, D=D, epsilon=eps),
                           sched).value
    assert smaller_eps >= base and more_d >= base and more_m >= base and more_rho >= base
