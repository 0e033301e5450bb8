import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from viscoreg.errors import NotNonexpansive
from viscoreg.geometry import EUCLIDEAN, Ball, Box, NormSpec
from viscoreg.operators import (Affine, Composition, Constant, Contraction, ConvexCombination,
                                Coordinatewise, Custom, Identity, LinearPSD, MatrixMap, NormalCone,
                                Projection, SubgradientSeparable, annulus_sampler, apply,
                                cube_sampler, estimate_lipschitz, fixed_point_residual,
                                gaussian_sampler, induced_norm, resolvent)

ROT90 = [[0.0, -1.0], [1.0, 0.0]]


def test_apply_examples():
    np.testing.assert_array_equal(apply(Identity(2), [1, 2]), [1, 2])
    np.testing.assert_allclose(apply(Projection(Ball([0, 0], 1)), [0, 2]), [0, 1])
    np.testing.assert_allclose(apply(MatrixMap(ROT90), [1, 0]), [0, 1])


def test_resolvent_examples():
    np.testing.assert_allclose(resolvent(LinearPSD(np.diag([1.0, 0.0])), 1.0)(np.array([2.0, 3.0])),
                               [1, 3])
    J = resolvent(NormalCone(Box([0, 0], [1, 1])), 7.0)
    np.testing.assert_allclose(J(np.array([2.0, -1.0])), [1, 0])
    M = np.array([[2.0, 1.0], [1.0, 3.0]])
    x = np.array([0.3, -1.2])
    np.testing.assert_allclose(resolvent(LinearPSD(M), 1e-12)(x), x, atol=1e-9)


def test_estimate_lipschitz_examples():
    rng = np.random.default_rng(0)
    assert estimate_lipschitz(Identity(3), gaussian_sampler(3), 100, rng=rng) == pytest.approx(1.0)
    half = Affine(np.eye(3), None, 0.5)
    assert estimate_lipschitz(half, cube_sampler(3), 1000, rng=rng) == pytest.approx(0.5)
    est = estimate_lipschitz(Projection(Ball([0, 0, 0], 1)), annulus_sampler(3, 0.5, 2.0), 1000,
                             rng=rng)
    assert est <= 1 + 1e-9


def test_fixed_point_residual_examples():
    assert fixed_point_residual(Identity(2), [1.0, 5.0]) == 0
    assert fixed_point_residual(Projection(Ball([0, 0], 1)), [0, 2]) == pytest.approx(1.0)
    c = Constant([1.0, 1.0])
    assert fixed_point_residual(c, [4.0, 5.0], NormSpec(1)) == pytest.approx(7.0)


@pytest.mark.parametrize("p, expected", [(1, 4.0), (2, None), (math.inf, 3.0)])
def test_induced_norms(p, expected):
    Q = np.array([[1.0, -2.0], [1.0, 2.0]])
    val = induced_norm(Q, NormSpec(p))
    if expected is None:
        expected = np.linalg.svd(Q, compute_uv=False)[0]
    assert val == pytest.approx(expected)


def test_matrix_gate_rejects_expansive_matrix():
    with pytest.raises(NotNonexpansive):
        MatrixMap([[1.2, 0.0], [0.0, 0.5]])
    # row sums bound the max norm, column sums the l1 norm
    MatrixMap([[1.0, 0.0], [1.0, 0.0]], NormSpec("inf"))
    with pytest.raises(NotNonexpansive):
        MatrixMap([[1.0, 0.0], [1.0, 0.0]], NormSpec(1))


def test_projection_outside_euclidean_needs_box():
    with pytest.raises(NotNonexpansive):
        Projection(Ball([0, 0], 1), NormSpec(1))
    Projection(Box([0, 0], [1, 1]), NormSpec(1))


def test_contraction_gates():
    Contraction.affine(0.5, scale=0.5, dim=2)
    with pytest.raises(NotNonexpansive):
        Contraction.affine(0.4, scale=0.5, dim=2)
    with pytest.raises(ValueError):
        Contraction.affine(1.0, scale=1.0, dim=2)
    with pytest.raises(NotNonexpansive):
        Contraction(Coordinatewise(["sin", "sin"]), 0.5)


def test_custom_mapping_only_warns():
    with pytest.warns(UserWarning):
        Custom(lambda x: 2 * np.asarray(x), 2)


def test_composition_and_combination():
    P = Projection(Box([0, 0], [1, 1]))
    R = MatrixMap(ROT90)
    C = Composition([P, R])
    np.testing.assert_allclose(C(np.array([1.0, 0.5])), [0.0, 1.0])
    A = ConvexCombination([0.25, 0.75], [Identity(2), R])
    np.testing.assert_allclose(A(np.array([1.0, 0.0])), [0.25, 0.75])


def test_coordinatewise_catalog_and_unknown_name():
    m = Coordinatewise(["tanh", "clip01", "abs"])
    np.testing.assert_allclose(m(np.array([0.0, 2.0, -3.0])), [0.0, 1.0, 3.0])
    with pytest.raises(ValueError):
        Coordinatewise(["exp"])


def test_linear_psd_rejects_indefinite():
    with pytest.raises(ValueError):
        LinearPSD(np.diag([1.0, -0.1]))


def test_separable_prox():
    J = SubgradientSeparable(["abs", "square", "nonneg"]).resolvent(0.5)
    np.testing.assert_allclose(J(np.array([2.0, 3.0, -1.0])), [1.5, 2.0, 0.0])


vec3 = arrays(np.float64, 3, elements=st.floats(-50, 50))
PSD = np.array([[2.0, 1.0, 0.0], [1.0, 1.0, 0.0], [0.0, 0.0, 0.0]])
NONSYM = np.array([[1.0, 2.0, 0.0], [-2.0, 1.0, 0.0], [0.0, 0.0, 0.0]])


@pytest.mark.parametrize("op", [LinearPSD(PSD), LinearPSD(NONSYM),
                                SubgradientSeparable(["abs", "box01", "square"]),
                                NormalCone(Ball([0, 0, 0], 1.0))],
                         ids=["psd", "skew-plus-psd", "separable", "normal-cone"])
@pytest.mark.parametrize("lam", [0.1, 1.0, 25.0])
@settings(max_examples=40, deadline=None)
@given(x=vec3, y=vec3)
def test_resolvents_are_firmly_nonexpansive(op, lam, x, y):
    J = op.resolvent(lam)
    jx, jy = J(x), J(y)
    lhs = EUCLIDEAN(jx - jy) ** 2
    assert lhs <= float((jx - jy) @ (x - y)) + 1e-8 * (1 + EUCLIDEAN(x - y) ** 2)


@settings(max_examples=40, deadline=None)
@given(x=vec3, lam=st.floats(0.01, 1e4))
def test_null_space_points_are_fixed(x, lam):
    A = LinearPSD(PSD)
    z = A.zero_set_projector()(x)
    np.testing.assert_allclose(A.resolvent(lam)(z), z, atol=1e-9 * (1 + np.abs(x).max()))


@settings(max_examples=40, deadline=None)
@given(x=vec3, lam=st.floats(0.01, 100.0))
def test_psd_resolvent_solves_linear_system(x, lam):
    z = LinearPSD(NONSYM).resolvent(lam)(x)
    np.testing.assert_allclose(z + lam * NONSYM @ z, x, atol=1e-8 * (1 + np.abs(x).max()))


def test_batched_evaluation_matches_rowwise():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(10, 3))
    for m in [Projection(Ball([0, 0, 0], 1)), MatrixMap(np.eye(3)[[1, 2, 0]]),
              LinearPSD(PSD).resolvent(2.0), Coordinatewise(["sin", "relu", "atan"])]:
        np.testing.assert_allclose(m(x), np.stack([m(r) for r in x]), atol=1e-12)
