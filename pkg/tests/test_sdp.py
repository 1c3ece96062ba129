import numpy as np
import pytest

from lkdelay.polyalg import Interval, PolyMat1, PolyMat2
from lkdelay.sdp import (
    Affine,
    AffinePoly1,
    AffinePoly2,
    SdpProblem,
    extract,
    read_sdpa,
    solve,
    stack,
    verify,
    write_sdpa,
)

BACKENDS = ["clarabel", "cvxopt"]


def test_variable_counts():
    p = SdpProblem(1.0)
    assert p.sym_matrix(2, "P").count == 3
    assert p.poly_matrix(1, 1, 2, "q").count == 3
    # kernel symmetry R(s,t) = R(t,s)^T: 2x2 coefficients for (i,j) pairs
    # (0,0),(1,1) symmetric (3 each) and (0,1)=(1,0)^T free (4)
    assert p.poly_matrix(2, 2, 1, "R", vars=2, symmetric=True).count == 10
    assert p.poly_matrix(2, 2, 1, "R2", vars=2).count == 16
    assert p.declare_variable("matrix", 2, 3, "M").count == 6
    assert p.nvar == 3 + 3 + 10 + 16 + 6
    with pytest.raises(ValueError):
        p.declare_variable("tensor", 2)


def test_kernel_symmetry_is_structural():
    p = SdpProblem(1.0)
    R = p.poly_matrix(2, 2, 2, "R", vars=2, symmetric=True)
    x = np.random.default_rng(0).standard_normal(p.nvar)
    val = R.expr.value(x)
    np.testing.assert_allclose(val.coeffs, val.adjoint().coeffs, atol=1e-15)


@pytest.mark.parametrize("backend", BACKENDS)
def test_scalar_feasible_and_infeasible(backend):
    p = SdpProblem()
    x = p.scalar("x")
    p.add_psd(x.expr.reshape(1, 1))
    p.add_eq(x.expr, rhs=1.0)
    sol = solve(p, backend=backend)
    assert sol.status == "feasible"
    assert extract(p, sol, "x") == pytest.approx(1.0, abs=1e-7)

    q = SdpProblem()
    y = q.scalar("y")
    q.add_psd(y.expr.reshape(1, 1))
    q.add_eq(y.expr, rhs=-1.0)
    assert solve(q, backend=backend).status == "infeasible"


@pytest.mark.parametrize("backend", BACKENDS)
def test_unit_diagonal_min_off_diagonal(backend):
    p = SdpProblem()
    X = p.sym_matrix(3, "X")
    p.add_psd(X.expr)
    idx = np.arange(3)
    p.add_eq(X.expr[idx, idx], "diag", rhs=np.ones(3))
    off = X.expr[0, 1] + X.expr[0, 2] + X.expr[1, 2]
    p.minimize(off)
    sol = solve(p, backend=backend)
    assert sol.status == "feasible"
    assert sol.objective == pytest.approx(-1.5, abs=1e-6)
    val = extract(p, sol, X)
    assert np.array_equal(val, val.T)
    assert sol.psd_violation <= 1e-7 and sol.eq_residual <= 1e-7


def test_independent_verification_and_scaling():
    p = SdpProblem()
    X = p.sym_matrix(2, "X")
    p.add_psd(X.expr)
    p.add_eq(X.expr[0, 0] * 2.0, rhs=2.0)
    p.add_eq(X.expr[1, 1] * 2.0, rhs=4.0)
    p.maximize(X.expr[0, 1])
    sol = solve(p)
    assert sol.feasible
    eq, viol, mins = verify(p.conic_data(), sol.x)
    assert eq <= 1e-7 and viol <= 1e-7
    assert extract(p, sol, X)[0, 1] == pytest.approx(np.sqrt(2.0), abs=1e-6)


def test_inconsistent_constant_equality_is_infeasible():
    p = SdpProblem()
    p.scalar("x")
    p.add_eq(Affine(1.0), "bad")
    assert solve(p).status == "infeasible"


def test_round_trip_fixed_polynomial():
    iv = Interval(1.0)
    p = SdpProblem(iv)
    Q = p.poly_matrix(2, 1, 2, "Q")
    target = PolyMat1(np.arange(6, dtype=float).reshape(3, 2, 1), iv)
    p.add_eq((Q.expr - AffinePoly1.lift(target, iv)).coef, "fix")
    t = p.scalar("t")
    p.add_psd(t.expr.reshape(1, 1))
    sol = solve(p)
    out = extract(p, sol, Q)
    assert isinstance(out, PolyMat1) and out.degree == 2
    np.testing.assert_allclose(out.coeffs, target.coeffs, atol=1e-7)


def test_extract_kernel_returns_polymat2():
    p = SdpProblem(1.0)
    R = p.poly_matrix(1, 1, 1, "R", vars=2, symmetric=True)
    c = np.zeros((2, 2, 1, 1))
    c[0, 1] = c[1, 0] = 0.5
    p.add_eq((R.expr - AffinePoly2.lift(PolyMat2(c, 1.0), 1.0)).coef, "fix")
    t = p.scalar("t")
    p.add_psd(t.expr.reshape(1, 1))
    out = extract(p, solve(p), R)
    assert isinstance(out, PolyMat2)
    np.testing.assert_allclose(out.coeffs, c, atol=1e-8)


def test_extract_unknown_handle():
    p = SdpProblem()
    p.scalar("x")
    p.add_eq(p.variables["x"].expr, rhs=0.0)
    sol = solve(p)
    with pytest.raises(KeyError):
        extract(p, sol, "nope")


def test_affine_algebra():
    a = Affine(np.zeros((2, 2)), np.eye(4).reshape(4, 2, 2), 3)
    x = np.arange(10, dtype=float)
    np.testing.assert_array_equal(a.value(x), x[3:7].reshape(2, 2))
    M = np.array([[1.0, 2.0], [0.0, 1.0]])
    np.testing.assert_allclose((M @ a @ M.T).value(x), M @ x[3:7].reshape(2, 2) @ M.T)
    b = Affine(np.ones((2, 2)), np.ones((1, 2, 2)), 0)
    np.testing.assert_allclose((a - b).value(x), x[3:7].reshape(2, 2) - 1 - x[0])
    s = stack([a[0, 0], b[1, 1]])
    np.testing.assert_allclose(s.value(x), [x[3], 1 + x[0]])
    A, c = (a.T * 2.0).rows(10)
    np.testing.assert_allclose(A @ x + c, 2 * x[3:7].reshape(2, 2).T.ravel())


def test_affine_poly_calculus_matches_polymat():
    rng = np.random.default_rng(1)
    iv = Interval(1.3)
    p = SdpProblem(iv)
    Q = p.poly_matrix(2, 2, 3, "Q")
    R = p.poly_matrix(2, 2, 2, "R", vars=2)
    x = rng.standard_normal(p.nvar)
    Qv, Rv = Q.expr.value(x), R.expr.value(x)
    np.testing.assert_allclose(Q.expr.deriv().value(x).coeffs, Qv.deriv().coeffs)
    np.testing.assert_allclose(Q.expr.integral().value(x), Qv.integral())
    np.testing.assert_allclose(Q.expr(-0.4).value(x), Qv(-0.4))
    np.testing.assert_allclose(R.expr.at_s(-1.3).value(x).coeffs, Rv.at_s(-1.3).coeffs)
    np.testing.assert_allclose(R.expr.deriv_theta().value(x).coeffs, Rv.deriv_theta().coeffs)
    np.testing.assert_allclose(R.expr.adjoint().value(x).coeffs, Rv.adjoint().coeffs)


def test_sdpa_export_parses_back():
    p = SdpProblem()
    X = p.sym_matrix(2, "X")
    p.add_psd(X.expr)
    p.add_eq(X.expr[0, 0], rhs=1.0)
    p.minimize(X.expr[0, 1])
    text = write_sdpa(p)
    data = read_sdpa(text)
    assert data["c"].shape == (p.nvar,)
    assert list(data["struct"]) == [2, -2]
    assert text == write_sdpa(p)


def test_summary_records_blocks():
    p = SdpProblem()
    X = p.sym_matrix(3, "X")
    p.add_psd(X.expr, "X")
    s = p.summary()
    assert s["variables"] == 6
    assert s["psd_blocks"] == [3]


def test_sdpa_matrices_reproduce_blocks_at_solution():
    p = SdpProblem()
    X = p.sym_matrix(2, "X")
    p.add_psd(X.expr + np.eye(2) * 0.5)
    p.add_eq(X.expr[0, 0] + X.expr[1, 1], rhs=1.0)
    p.minimize(X.expr[0, 1])
    sol = solve(p)
    data = read_sdpa(write_sdpa(p))
    x = sol.x
    F = sum(x[i] * data["mats"][i + 1][0] for i in range(len(x))) - data["mats"][0][0]
    np.testing.assert_allclose(F, extract(p, sol, X) + 0.5 * np.eye(2), atol=1e-9)
    lp = sum(x[i] * data["mats"][i + 1][1] for i in range(len(x))) - data["mats"][0][1]
    assert np.abs(np.diag(lp)).max() <= 1e-7
