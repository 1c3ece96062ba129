import numpy as np
import pytest

from lkdelay.errors import SingularMatrixError
from lkdelay.lkoperator import (
    BoundaryData,
    KernelOperator,
    PolyFunction,
    QuadratureAgreementWarning,
    SampledFunction,
    SeparableKernelOperator,
    StateFunction,
    apply_inverse,
    apply_operator,
    composition_residual,
    inner_product,
    invariance_residual,
    inverse_invariance_residual,
    invert_separable,
    lk_value,
    z_norm,
)
from lkdelay.lkoperator.sampling import random_invariant_separable, random_separable, random_state
from lkdelay.polyalg import Interval, PolyMat1, PolyMat2


def const_state(psi, phi, r):
    phi = np.atleast_1d(np.asarray(phi, dtype=float))
    return StateFunction(np.atleast_1d(psi), PolyFunction(PolyMat1(phi[None, :, None], r)))


def scalar_worked(r=1.0):
    iv = Interval(r)
    return SeparableKernelOperator([[1.0]], [[1.0]], [[1.0]], PolyMat1.constant([[1.0]], iv), 0)


def test_identity_operator_is_identity():
    op = KernelOperator.identity(2, 1, 1.0)
    z = random_state(2, 1, 1.0, np.random.default_rng(0))
    out = apply_operator(op, z)
    assert z_norm(out - z) < 1e-14


def test_apply_operator_hand_examples():
    iv = Interval(1.0)
    op = KernelOperator([[1.0]], PolyMat1.constant([[1.0]], iv), PolyMat2.zeros(1, 1, iv), PolyMat1.identity(1, iv))
    out = apply_operator(op, const_state(1.0, 1.0, 1.0))
    assert abs(out.psi[0] - 2.0) < 1e-14
    np.testing.assert_allclose(out.phi(np.array([-0.9, -0.2, 0.0])), [[2.0]] * 3, atol=1e-14)

    out = apply_operator(scalar_worked(), const_state(1.0, 1.0, 1.0))
    assert abs(out.psi[0] - 2.0) < 1e-14
    np.testing.assert_allclose(out.phi(np.array([-1.0, -0.5])), [[3.0]] * 2, atol=1e-14)


def test_inner_product_examples():
    assert inner_product(const_state(1.0, 0.0, 2.0), const_state(1.0, 0.0, 2.0)) == pytest.approx(2.0)
    assert inner_product(const_state(1.0, 1.0, 1.0), const_state(1.0, 1.0, 1.0)) == pytest.approx(2.0)
    z1 = StateFunction(np.zeros(1), PolyFunction(PolyMat1([[[0.0]], [[1.0]]], 1.0)))
    z2 = const_state(0.0, 1.0, 1.0)
    assert inner_product(z1, z2) == pytest.approx(-0.5, abs=1e-15)


def test_lk_value_examples():
    iv = Interval(1.0)
    assert lk_value(KernelOperator.identity(1, 1, iv), const_state(1.0, 1.0, 1.0)) == pytest.approx(2.0)
    z = random_state(2, 2, iv, np.random.default_rng(1))
    assert lk_value(KernelOperator.zero(2, 2, iv), z) == 0.0
    op = KernelOperator([[1.0]], PolyMat1.constant([[1.0]], iv), PolyMat2.zeros(1, 1, iv), PolyMat1.identity(1, iv))
    assert lk_value(op, const_state(1.0, 1.0, 1.0)) == pytest.approx(4.0)


def test_lk_value_matches_inner_product_and_self_adjointness():
    rng = np.random.default_rng(2)
    for _ in range(10):
        op = random_separable(3, 2, 2, 1.3, rng, constant_S=False)
        z1, z2 = random_state(3, 2, 1.3, rng), random_state(3, 2, 1.3, rng)
        v = lk_value(op, z1)
        assert abs(v - inner_product(z1, apply_operator(op, z1))) <= 1e-10 * max(1.0, abs(v))
        a = inner_product(z1, apply_operator(op, z2))
        b = inner_product(apply_operator(op, z1), z2)
        assert abs(a - b) <= 1e-10 * max(1.0, abs(a))


def test_linearity():
    rng = np.random.default_rng(3)
    op = random_separable(2, 1, 1, 1.0, rng)
    z1, z2 = random_state(2, 1, 1.0, rng), random_state(2, 1, 1.0, rng)
    lhs = apply_operator(op, z1 * 2.0 + z2 * -3.0)
    rhs = apply_operator(op, z1) * 2.0 + apply_operator(op, z2) * -3.0
    assert z_norm(lhs - rhs) < 1e-12


def test_sampled_state_uses_interpolation():
    iv = Interval(1.0)
    f = SampledFunction.uniform(lambda s: np.stack([s, 1 + 0 * s], axis=1), iv, points=11)
    z = StateFunction(np.ones(1), f)
    op = KernelOperator.identity(1, 2, iv)
    assert z_norm(apply_operator(op, z) - z) < 1e-13


def test_invariance_residual_examples():
    iv = Interval(1.0)
    bd = BoundaryData(np.zeros((1, 2)), np.zeros((1, 1)))
    Q = PolyMat1([np.zeros((2, 1)), np.array([[1.0], [2.0]])], iv)
    Rc = np.zeros((2, 2, 1, 1))
    Rc[1, 1] = 0.7
    op = KernelOperator(np.eye(2), Q, PolyMat2(Rc, iv), PolyMat1.identity(1, iv))
    assert invariance_residual(op, bd) == (0.0, 0.0, 0.0)

    Q0 = np.array([[1.0], [2.0]])
    op = KernelOperator(np.eye(2), PolyMat1.constant(Q0, iv), PolyMat2.zeros(1, 1, iv), PolyMat1.identity(1, iv))
    e = invariance_residual(op, bd)
    assert e[0] == pytest.approx(np.linalg.norm(Q0))
    assert e[1:] == (0.0, 0.0)


def test_scalar_inverse_closed_form():
    inv = invert_separable(scalar_worked())
    for val, ref in ((inv.K, 1.0), (inv.T, 1.0), (inv.Hhat, -1.0), (inv.Phat, 2.0), (inv.Gammahat, 0.0)):
        assert abs(float(np.asarray(val).ravel()[0]) - ref) <= 1e-12


def test_scalar_inverse_undoes_forward_example():
    op = scalar_worked()
    inv = invert_separable(op)
    back = apply_inverse(inv, apply_operator(op, const_state(1.0, 1.0, 1.0)))
    assert abs(back.psi[0] - 1.0) < 1e-13
    np.testing.assert_allclose(back.phi(np.array([-1.0, -0.3, 0.0])), [[1.0]] * 3, atol=1e-13)


def test_inverse_with_trivial_coupling():
    iv = Interval(0.8)
    P = np.array([[2.0, 0.5], [0.5, 1.0]])
    op = SeparableKernelOperator(P, np.zeros((2, 2)), np.zeros((2, 2)), PolyMat1.identity(1, iv), 1)
    inv = invert_separable(op)
    np.testing.assert_allclose(inv.Phat, np.linalg.inv(P), atol=1e-14)
    assert np.abs(inv.Hhat).max() == 0.0
    assert np.abs(inv.Gammahat).max() == 0.0


def test_inverse_of_identity_is_identity():
    iv = Interval(1.0)
    op = SeparableKernelOperator(np.eye(2), np.zeros((2, 1)), np.zeros((1, 1)), PolyMat1.identity(1, iv), 0)
    inv = invert_separable(op)
    z = random_state(2, 1, iv, np.random.default_rng(0))
    assert z_norm(apply_inverse(inv, z) - z) < 1e-14
    assert composition_residual(op, inv, samples=5) < 1e-14


@pytest.mark.parametrize("constant_S, tol", [(True, 1e-9), (False, 1e-7)])
def test_composition_residual_random(constant_S, tol):
    rng = np.random.default_rng(7)
    op = random_separable(3, 2, 2, 1.0, rng, constant_S=constant_S)
    inv = invert_separable(op)
    assert composition_residual(op, inv, samples=20) <= tol


def test_composition_anti_test():
    rng = np.random.default_rng(8)
    op = random_separable(2, 1, 1, 1.0, rng)
    other = random_separable(2, 1, 1, 1.0, rng)
    assert composition_residual(op, invert_separable(other), samples=10) > 0.1


def test_double_inverse_returns_operator():
    rng = np.random.default_rng(9)
    op = random_separable(2, 2, 1, 1.0, rng, constant_S=True)
    back = invert_separable(invert_separable(op).as_separable())
    np.testing.assert_allclose(back.Phat, op.P, atol=1e-8)
    hat2 = back.as_separable()
    np.testing.assert_allclose(hat2.H, op.H, atol=1e-8)
    np.testing.assert_allclose(hat2.Gamma, op.Gamma, atol=1e-8)
    np.testing.assert_allclose(hat2.S.coeffs, op.S.coeffs, atol=1e-8)


def test_singular_P_is_reported():
    iv = Interval(1.0)
    op = SeparableKernelOperator(np.zeros((1, 1)), [[1.0]], [[0.0]], PolyMat1.identity(1, iv), 0)
    with pytest.raises(SingularMatrixError) as info:
        invert_separable(op)
    assert info.value.which == "P"


def test_singular_S_at_node_is_reported():
    iv = Interval(1.0)
    S = PolyMat1([[[0.0]], [[1.0]]], iv)  # S(s) = s vanishes only at 0, not at Gauss nodes
    op = SeparableKernelOperator([[1.0]], [[0.0]], [[0.0]], S, 0)
    # 1/s is not integrable, so the node-refinement check flags it
    with pytest.warns(QuadratureAgreementWarning):
        inv = invert_separable(op)
    with pytest.raises(SingularMatrixError):
        inv.S_inv(np.array([0.0]))


def test_inverse_invariance_examples():
    rng = np.random.default_rng(10)
    bd = BoundaryData(np.zeros((1, 2)), np.zeros((1, 1)))
    op = random_invariant_separable(bd, 1, 1.0, rng)
    assert max(invariance_residual(op, bd)) <= 1e-9
    assert inverse_invariance_residual(invert_separable(op), bd) <= 1e-8

    iv = Interval(1.0)
    ident = SeparableKernelOperator(np.eye(2), np.zeros((2, 1)), np.zeros((1, 1)), PolyMat1.identity(1, iv), 0)
    bd2 = BoundaryData(np.array([[0.3, -1.0]]), np.array([[0.4]]))
    assert inverse_invariance_residual(invert_separable(ident), bd2) < 1e-14


def test_inverse_invariance_anti_test():
    rng = np.random.default_rng(11)
    bd = BoundaryData(np.array([[1.0, 0.5]]), np.array([[0.2]]))
    op = random_separable(2, 1, 1, 1.0, rng)
    assert max(invariance_residual(op, bd)) > 1e-3
    assert inverse_invariance_residual(invert_separable(op), bd) > 1e-6


def test_operator_json_round_trip():
    rng = np.random.default_rng(12)
    op = random_separable(2, 2, 2, 1.6, rng, constant_S=False)
    back = SeparableKernelOperator.from_json(op.to_json())
    np.testing.assert_array_equal(back.P, op.P)
    np.testing.assert_array_equal(back.H, op.H)
    np.testing.assert_array_equal(back.Gamma, op.Gamma)
    np.testing.assert_array_equal(back.S.coeffs, op.S.coeffs)
    with pytest.raises(ValueError, match="unknown"):
        SeparableKernelOperator.from_dict({**op.to_dict(), "extra": 1})


def test_state_csv_round_trip():
    z = random_state(2, 2, 1.0, np.random.default_rng(13))
    back = StateFunction.from_csv(z.to_csv(points=51), 1.0)
    np.testing.assert_allclose(back.psi, z.psi)
    grid = np.linspace(-1.0, 0.0, 51)
    np.testing.assert_allclose(back.phi(grid), z.phi(grid), atol=1e-15)
