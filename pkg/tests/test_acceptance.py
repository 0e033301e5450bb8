"""Acceptance gate: one test per criterion, at the stated tolerances.

The terminal summary prints one PASS/FAIL line per criterion.
"""
import math
import time

import numpy as np
import pytest

from viscoreg.applications import (VipProblem, ZeroProblem, check_vi_residual, hybrid_drive,
                                   resolvent_curve, vip_constants, vip_contraction_factor)
from viscoreg.certificates import (RateInputs, log_spaced_indices, psi_general, quant_liu_bound,
                                   theta_harmonic)
from viscoreg.geometry import EUCLIDEAN, Ball, Box
from viscoreg.moduli import HarmonicSchedule, PowerSchedule, validate_moduli
from viscoreg.operators import (Affine, Contraction, LinearPSD, Projection, estimate_lipschitz,
                                gaussian_sampler)
from viscoreg.runner import run_scenario
from viscoreg.scenario import bundled_names, load_document
from viscoreg.schemes import explicit_iterate, hybrid_iterate, implicit_solve

SLACK = 1e-9


@pytest.fixture(scope="module")
def soundness_runs():
    names = [n for n in bundled_names() if n.startswith("soundness/")]
    started = time.perf_counter()
    runs = {n: run_scenario(n) for n in names}
    return runs, time.perf_counter() - started


def test_criterion_1_certificate_soundness(soundness_runs):
    runs, elapsed = soundness_runs
    assert len(runs) >= 12
    norms, kinds, phis = set(), set(), set()
    for name, rep in runs.items():
        doc = load_document(name)
        norms.add(str(doc.space.norm))
        kinds.add(doc.mapping.kind)
        phis.add("affine" if doc.contraction.offset else "linear")
        tr = rep.execution.trace
        assert sorted(c["epsilon"] for c in rep.certificates) == [0.2, 0.5, 1.0]
        for c in rep.certificates:
            psi = int(c["value_decimal"])
            assert psi <= 10 ** 6, name
            assert c["verdict"]["status"] == "pass", (name, c["verdict"])
            idx = log_spaced_indices(psi, tr.N, 100)
            assert len(idx) == 101, name  # psi itself plus 100 later indices
            assert np.all(tr.fix_residuals[idx] < c["epsilon"] + SLACK), name
    assert {"projection", "matrix", "resolvent"} <= kinds
    assert phis == {"affine", "linear"}
    assert len(norms) == 3
    assert elapsed < 60, f"suite took {elapsed:.1f} s"


def test_criterion_2_exact_arithmetic():
    psi = psi_general(RateInputs(rho=0.5, M=1, D=1, epsilon=1), HarmonicSchedule())
    assert psi.value == 4 ** 28 and type(psi.value) is int
    theta = theta_harmonic(0.5, 1, 1)
    assert abs(theta.ln_value - 144) <= 1e-12 * 144
    assert quant_liu_bound(lambda e: 0, lambda n: n, 1, 1) == 2


def test_criterion_3_inequalities(soundness_runs):
    runs, _ = soundness_runs
    checked = 0
    for name, rep in runs.items():
        audit = rep.summary["inequality_audit"]
        assert audit["ok"], (name, audit)
        assert rep.summary["invariant_violations"] == 0
        if load_document(name).fixed_point is not None:
            assert audit["boundedness_radius"] is not None
        checked += audit["checked_steps"]
    assert checked >= 10 ** 5


def test_criterion_4_limit_identification():
    started = time.perf_counter()
    rep = run_scenario("proj-interval-explicit")
    elapsed = time.perf_counter() - started
    q = 2 / 3
    assert abs(rep.summary["final_point"][0] - q) <= 1e-3
    assert rep.summary["iterations"] == 10 ** 6
    assert rep.data["vi_residual"] <= 1e-6
    assert elapsed < 10, f"took {elapsed:.1f} s"


def test_criterion_5_implicit_resolvent_equivalence():
    M = np.diag([0.0, 1.0, 3.0])
    R = np.array([[0.6, 0.0, 0.8], [0.0, 1.0, 0.0], [-0.8, 0.0, 0.6]])
    M = R @ M @ R.T  # one zero eigenvalue, not axis aligned
    A = LinearPSD(M)
    x = np.array([1.0, -2.0, 0.5])
    T = A.resolvent(1.0)
    Phi = Contraction.constant(x)
    for lam in (1.0, 10.0, 100.0, 1e4):
        z = implicit_solve(T, Phi, 1 / lam, x, tolerance=1e-12).point
        exact = np.linalg.solve(np.eye(3) + lam * M, x)
        assert EUCLIDEAN(z - exact) <= 1e-8, lam
    curve = resolvent_curve(ZeroProblem(A, x), [1.0, 10.0, 100.0, 1e4])
    null = np.linalg.svd(M)[2][-1]
    assert EUCLIDEAN(curve.points[-1] - (null @ x) * null) <= 1e-3


def test_criterion_6_hybrid_explicit_equivalence():
    T = Projection(Ball([0.0, 0.0, 0.0], 1.0))
    Phi = Contraction.affine(0.7, [[0.0, 0.7, 0.0], [-0.7, 0.0, 0.0], [0.0, 0.0, 0.7]],
                             [0.5, 1.0, -0.3])
    x0 = np.array([3.0, -1.0, 2.0])
    for sched in (HarmonicSchedule(), PowerSchedule(0.9, 0.5)):
        hyb = hybrid_iterate(T, lambda v: v - Phi(v), 1.0, sched, x0, 1000)
        exp = explicit_iterate(T, Phi, sched, T(x0), 1000)
        assert EUCLIDEAN(T(hyb.points) - exp.points).max() <= 1e-10


def test_criterion_7_vip_constants():
    R, delta = vip_constants(2, 1, 0.5, 1)
    c = vip_contraction_factor(R, delta, 0.1)
    assert (R, delta) == (2.5, 0.5)
    assert c == math.sqrt(0.9625)
    Phi = Contraction.affine(0.5, [[0.0, -0.5], [0.5, 0.0]], [0.3, 0.1])
    A = Affine([[1.5, 0.5], [0.5, 1.5]], [-1.0, 0.0])  # eigenvalues 1 and 2: eta = 1, L = 2
    prob = VipProblem(A, 2.0, 1.0, Phi, 1.0, 0.1, Projection(Box([0, 0], [1, 1])))
    g = prob.drive
    rng = np.random.default_rng(20080123)
    est_g = estimate_lipschitz(g, gaussian_sampler(2), 10 ** 4, rng=rng)
    est_c = estimate_lipschitz(lambda v: v - 0.1 * g(v), gaussian_sampler(2), 10 ** 4, rng=rng,
                               dim=2)
    assert est_g <= R + 1e-6
    assert est_c <= c + 1e-6


def test_criterion_8_vip_end_to_end():
    rep = run_scenario("vip-1d")
    assert rep.summary["iterations"] <= 10 ** 5
    assert abs(rep.summary["final_point"][0] - 1.0) <= 1e-3
    assert rep.data["vi_residual"] <= 1e-6
    q = np.array(rep.summary["final_point"])
    g = Affine([[1.0]], [-2.0])
    assert check_vi_residual(q, hybrid_drive(g), Box([0.0], [1.0])) <= 1e-6


@pytest.mark.parametrize("sched", [HarmonicSchedule(), PowerSchedule(0.5, 1),
                                   PowerSchedule(0.045, 0.5), PowerSchedule(0.9, 0.75)],
                         ids=lambda s: s.schedule_id)
def test_criterion_9_moduli_validation(sched):
    rep = validate_moduli(sched, 10 ** 6, [1, 0.5, 0.1, 0.01], divergence_ns=range(9))
    assert rep.ok, [c.to_dict() for c in rep.violations]
    for c in rep.checks:
        if c.kind == "divergence" and c.modulus is not None and c.modulus <= 10 ** 6:
            assert c.status == "pass"
    div = [c for c in rep.checks if c.kind == "divergence"]
    assert len(div) == 9 and any(c.status == "pass" for c in div)
