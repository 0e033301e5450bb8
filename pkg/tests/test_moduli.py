import warnings
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from viscoreg.errors import MissingModulus, NotDecreasing, OutOfRange
from viscoreg.moduli import (BoundaryStepWarning, HarmonicSchedule, PowerSchedule, TableSchedule,
                             make_schedule, validate_moduli)

H = HarmonicSchedule()


def test_alpha_examples():
    with pytest.warns(BoundaryStepWarning):
        assert H.alpha(0) == 1.0
    assert H.alpha(9) == pytest.approx(0.1)
    assert PowerSchedule(0.5, 1).alpha(4) == pytest.approx(0.1)


def test_rate_of_convergence_examples():
    assert H.rate_of_convergence(0.1) == 10
    assert H.rate_of_convergence(0.3) == 4
    assert PowerSchedule(0.5, 1).rate_of_convergence(0.05) == 10


def test_cauchy_modulus_examples():
    assert H.cauchy_modulus(0.1) == 10
    assert H.cauchy_modulus(1.0) == 1
    assert PowerSchedule(0.5, 1).cauchy_modulus(0.25) == 2


def test_divergence_modulus_examples():
    assert H.divergence_modulus(2) == 15
    assert H.divergence_modulus(0) == 0
    assert PowerSchedule(0.5, 1).divergence_modulus(3) == 4 ** 6 - 1


def test_divergence_modulus_is_a_big_integer():
    assert H.divergence_modulus(40) == 4 ** 40 - 1


def test_validate_harmonic_all_pass():
    rep = validate_moduli(H, 10 ** 5, [0.5, 0.1, 0.01])
    assert rep.ok
    assert not rep.violations
    assert {c.kind for c in rep.checks} == {"range", "rate", "cauchy", "divergence"}


def test_validate_reports_wrong_table_modulus():
    t = TableSchedule([0.5] * 50, rate=[(0.1, 3)], cauchy=[(0.1, 3)], divergence=[0, 2, 4])
    rep = validate_moduli(t, 49, [0.1], divergence_ns=range(3))
    bad = rep.violations
    assert bad and bad[0].kind == "rate" and bad[0].witness == 3


def test_validate_skips_moduli_beyond_budget():
    rep = validate_moduli(H, 10, [1e-6], divergence_ns=[])
    skipped = [c for c in rep.checks if c.status == "skipped"]
    assert skipped and all(c.detail == "skipped: modulus exceeds budget" for c in skipped)


def test_decreasing_check():
    with pytest.raises(NotDecreasing):
        TableSchedule([0.1, 0.2, 0.3]).check_decreasing()
    H.check_decreasing(1000)


def test_table_rejects_out_of_range_steps():
    with pytest.raises(OutOfRange):
        TableSchedule([0.5, 1.0])


def test_missing_moduli():
    t = TableSchedule([0.5, 0.6])
    with pytest.raises(MissingModulus):
        t.rate_of_convergence(0.1)
    with pytest.raises(MissingModulus):
        t.cauchy_modulus(0.1)


def test_make_schedule():
    assert isinstance(make_schedule("harmonic"), HarmonicSchedule)
    assert make_schedule("power", c=0.5, a=0.5).alpha(3) == pytest.approx(0.25)
    with pytest.raises(ValueError):
        make_schedule("geometric", r=0.5)


def test_schedule_ids_are_stable():
    assert H.schedule_id == HarmonicSchedule().schedule_id
    assert PowerSchedule(0.5, 1).schedule_id != H.schedule_id


@settings(max_examples=60, deadline=None)
@given(c=st.floats(0.01, 1.0), a=st.sampled_from([0.3, 0.5, 0.75, 1.0]),
       eps=st.floats(1e-3, 1.0))
def test_power_rate_of_convergence_by_scan(c, a, eps):
    s = PowerSchedule(c, a)
    n0 = s.rate_of_convergence(eps)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", BoundaryStepWarning)
        if n0 > 0:
            # an exact threshold: conservatism is allowed but not by more than one step
            assert s.alpha(n0) < eps
        prefix = s.alphas(min(n0 + 5000, 200_000))
    assert np.all(prefix[n0:] < eps)


@settings(max_examples=40, deadline=None)
@given(c=st.floats(0.05, 1.0), a=st.sampled_from([0.25, 0.5, 0.75, 1.0]), n=st.integers(0, 6))
def test_power_divergence_modulus_by_partial_sums(c, a, n):
    s = PowerSchedule(c, a)
    k = s.divergence_modulus(n)
    if k > 2_000_000:
        return
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", BoundaryStepWarning)
        assert s.alphas(k + 1).sum() >= n - 1e-9


@pytest.mark.parametrize("sched", [H, PowerSchedule(0.5, 1), PowerSchedule(0.3, 0.5),
                                   PowerSchedule(0.9, 0.75)], ids=lambda s: s.schedule_id)
def test_validate_families_on_grid(sched):
    rep = validate_moduli(sched, 10 ** 6, [1, 0.5, 0.1, 0.01])
    assert rep.ok, rep.violations


def test_moduli_use_exact_arithmetic():
    # 1/eps computed on the float 0.1 is just above 10; the rational value is 10
    assert H.rate_of_convergence(Fraction(1, 10)) == 10
