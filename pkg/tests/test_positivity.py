import numpy as np
import pytest

from lkdelay.errors import DegreeTooLow
from lkdelay.lkoperator import KernelOperator
from lkdelay.polyalg import Interval, PolyMat1, PolyMat2
from lkdelay.positivity import (
    XiCertificate,
    gram_side,
    op_from_multiplier,
    sample_positivity,
    weighted_side,
    xi_certificate_from_solution,
    xi_constraints,
    xi_expand,
)
from lkdelay.sdp import SdpProblem, solve


def random_psd(side, rng, rank=None):
    G = rng.standard_normal((side, rank or side))
    return G @ G.T


def test_gram_sides():
    assert gram_side(0, 1) == 2
    assert gram_side(2, 3) == 2 * 3 * 3
    assert gram_side(2, 10, vec_dim=8) == 3 * 12
    assert weighted_side(2, 3) == 6


def test_identity_gram_scalar():
    cert = XiCertificate(np.eye(2), 0, 1, Interval(1.0))
    M, N = xi_expand(cert)
    np.testing.assert_allclose(M.coeffs, [[[1.0]]])
    np.testing.assert_allclose(N.coeffs, [[[[1.0]]]])
    op = op_from_multiplier(M, N, 0)
    assert sample_positivity(op, n_samples=10_000) >= 0.0


def test_zero_gram():
    M, N = xi_expand(XiCertificate(np.zeros((4, 4)), 1, 1, Interval(1.0)))
    assert M.is_zero() and N.is_zero()


def test_rank_one_square():
    g = np.zeros((4, 4))
    g[0, 0] = 1.0
    M, N = xi_expand(XiCertificate(g, 1, 1, Interval(1.0)))
    np.testing.assert_allclose(M.coeffs, [[[1.0]]])
    assert N.is_zero()


def test_gram_side_is_validated():
    with pytest.raises(ValueError):
        XiCertificate(np.eye(3), 1, 1, Interval(1.0))


def test_expand_is_affine():
    rng = np.random.default_rng(0)
    iv = Interval(1.2)
    side, wside = gram_side(2, 2), weighted_side(2, 2)
    g1, g2 = random_psd(side, rng), random_psd(side, rng)
    w1, w2 = random_psd(wside, rng), random_psd(wside, rng)
    a, b = 0.7, -1.3
    M1, N1 = xi_expand(XiCertificate(g1, 2, 2, iv, weighted_gram=w1))
    M2, N2 = xi_expand(XiCertificate(g2, 2, 2, iv, weighted_gram=w2))
    M, N = xi_expand(XiCertificate(a * g1 + b * g2, 2, 2, iv, weighted_gram=a * w1 + b * w2))
    np.testing.assert_allclose(M.coeffs, (M1 * a + M2 * b).coeffs, atol=1e-12)
    np.testing.assert_allclose(N.coeffs, (N1 * a + N2 * b).coeffs, atol=1e-12)


def test_soundness_sampling_small():
    rng = np.random.default_rng(1)
    worst = np.inf
    for trial in range(20):
        d, k = int(rng.integers(0, 3)), int(rng.integers(1, 3))
        r = float(rng.uniform(0.5, 2.0))
        iv = Interval(r)
        vec = int(rng.integers(0, k)) if k > 1 else 0
        g = random_psd(gram_side(d, k, vec), rng, rank=int(rng.integers(1, 4)))
        w = random_psd(weighted_side(d, k), rng) if d else None
        cert = XiCertificate(g, d, k, iv, vec_dim=vec, weighted_gram=w)
        M, N = xi_expand(cert)
        worst = min(worst, sample_positivity(op_from_multiplier(M, N, vec), n_samples=300, seed=trial))
    assert worst >= -1e-10


def test_sample_positivity_examples():
    iv = Interval(1.0)
    assert sample_positivity(KernelOperator.identity(2, 2, iv)) == pytest.approx(1.0, abs=1e-14)
    assert sample_positivity(KernelOperator.zero(2, 2, iv)) == 0.0
    neg = KernelOperator(
        np.zeros((1, 1)), PolyMat1.zeros(1, 1, iv), PolyMat2.zeros(1, 1, iv), PolyMat1.identity(1, iv) * -1.0
    )
    assert sample_positivity(neg) < 0.0


def _xi_problem(M, N, d, weighted=True, r=1.0):
    p = SdpProblem(Interval(r))
    h = xi_constraints(p, M, N, d, weighted=weighted)
    return p, h


@pytest.mark.parametrize(
    "coeffs, d, weighted, expected",
    [
        ([[[1.0]]], 0, True, "feasible"),
        ([[[0.0]], [[1.0]]], 1, True, "infeasible"),
        ([[[-1.0]]], 0, True, "infeasible"),
        ([[[1.0]], [[0.0]], [[1.0]]], 1, True, "feasible"),
        ([[[1.0]], [[0.0]], [[1.0]]], 1, False, "feasible"),
        ([[[1.01]], [[1.0]]], 1, True, "feasible"),
        ([[[1.01]], [[1.0]]], 1, False, "infeasible"),
    ],
)
def test_xi_constraint_feasibility(coeffs, d, weighted, expected):
    iv = Interval(1.0)
    p, h = _xi_problem(PolyMat1(coeffs, iv), None, d, weighted)
    sol = solve(p)
    assert sol.status == expected
    if expected == "feasible":
        cert = xi_certificate_from_solution(p, sol, h)
        M, N = xi_expand(cert)
        np.testing.assert_allclose(M.coeffs[: len(coeffs)], np.array(coeffs), atol=1e-6)
        assert N.max_abs_coeff() <= 1e-6


def test_xi_degree_too_low():
    iv = Interval(1.0)
    p = SdpProblem(iv)
    with pytest.raises(DegreeTooLow):
        xi_constraints(p, PolyMat1(np.ones((4, 1, 1)), iv), None, 1)
    c = np.zeros((3, 1, 1, 1))
    c[2, 0] = 1.0
    with pytest.raises(DegreeTooLow):
        xi_constraints(p, PolyMat1.identity(1, iv), PolyMat2(c, iv), 1, name="xi2")


def test_xi_with_vector_part_certifies_operator():
    # P = 2, Q = 0.3, S = 1, R = 0.2 is positive: check it is certified and
    # the recovered operator samples positive
    iv = Interval(1.0)
    r = iv.r
    M = PolyMat1(np.array([[[2.0 * r, 0.3 * r], [0.3 * r, 1.0]]]), iv)
    N = PolyMat2(np.array([[[[0.2]]]]), iv)
    p = SdpProblem(iv)
    h = xi_constraints(p, M, N, 1, vec_dim=1)
    sol = solve(p)
    assert sol.status == "feasible"
    cert = xi_certificate_from_solution(p, sol, h)
    Me, Ne = xi_expand(cert)
    op = op_from_multiplier(Me, Ne, 1)
    assert op.P[0, 0] == pytest.approx(2.0, abs=1e-6)
    assert sample_positivity(op, n_samples=500) >= -1e-8
