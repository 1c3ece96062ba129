"""State-feedback synthesis for coupled differential-difference systems.

For the plant

    x'(t) = A x(t) + B y(t - r) + F u(t),    y(t) = C x(t) + D y(t - r)

the synthesis SDP searches for an operator ``P`` (data ``P, Q, R, S``), dual
controller variables ``M0, M1, M2(s)`` and a margin ``eps`` with

* ``{T, R}`` positive, ``T(s) = [[P, r Q(s)], [r Q(s)^T, S(s)]] - eps I``;
* ``{-U, -V}`` positive, ``V(s, t) = dR/ds + dR/dt`` and ``U`` the 3 x 3
  block matrix over ``(psi_hat, phi_hat(-r), phi_hat(s))`` built in
  ``build_blocks``;
* the boundary equalities that make ``P`` map the generator's domain into
  itself.

The controller is ``K = M P^{-1}``:

    K0    = M0 Phat + r M1 Qhat(-r)^T + r int M2(s) Qhat(s)^T ds
    K1    = M1 Shat(-r)
    K2(s) = M0 Qhat(s) + M1 Rhat(-r, s) + M2(s) Shat(s) + int M2(t) Rhat(t, s) dt

with the hatted kernels from the closed-form inverse.

Note on the closed-loop block: the ``F M0`` term is symmetrized as
``F M0 + (F M0)^T``; the transposed term is sometimes written ``M0^T F``,
which is only dimensionally valid when ``F`` is square.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .ddesim import PlantModel, decay_ratio, simulate, spectral_radius
from .errors import BasisMismatch, Infeasible, ValidationFailed
from .lkoperator import (
    BoundaryData,
    KernelOperator,
    SeparableKernelOperator,
    invariance_residual,
    invert_separable,
)
from .lkoperator.inverse import InverseKernelOperator
from .polyalg import Interval, PolyMat1, PolyMat2, gauss_rule, monomial_basis
from .positivity import XiHandle, xi_constraints
from .sdp import Affine, AffinePoly1, AffinePoly2, SdpProblem, extract, solve

__all__ = [
    "SynthesisProblem",
    "SynthesisVars",
    "SynthesisCertificate",
    "ControllerGains",
    "SynthesisReport",
    "declare_variables",
    "build_blocks",
    "build_structural_equalities",
    "assemble",
    "synthesize",
    "gains_from_certificate",
    "DECAY_GATE",
]

log = logging.getLogger(__name__)

DECAY_GATE = 0.05
K2_SAMPLES = 401
_PROBLEM_KEYS = {"A", "B", "C", "D", "F", "r", "degree", "eps_min"}
_OPTIONAL_KEYS = {"constant_S", "weighted"}


def _mat(x, rows=None, cols=None) -> np.ndarray:
    a = np.atleast_2d(np.asarray(x, dtype=float))
    if rows is not None and cols is not None:
        a = a.reshape(rows, cols)
    return a


@dataclass(frozen=True)
class SynthesisProblem:
    """Plant data and synthesis options.

    ``eps_min`` is the smallest margin accepted as a certificate.
    ``constant_S`` restricts ``S`` to a constant matrix (polynomial gains);
    ``weighted`` adds interval-localizing multipliers to the positivity
    certificates.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    F: np.ndarray
    r: float
    degree: int = 2
    eps_min: float = 1e-6
    constant_S: bool = False
    weighted: bool = True

    def __post_init__(self):
        A = _mat(self.A)
        n = A.shape[0]
        if A.shape != (n, n):
            raise ValueError(f"A must be square, got {A.shape}")
        C = _mat(self.C)
        m = C.shape[0]
        if C.shape != (m, n):
            raise ValueError(f"C must be m x {n}, got {C.shape}")
        B = _mat(self.B)
        if B.shape != (n, m):
            raise ValueError(f"B must be {n} x {m}, got {B.shape}")
        D = _mat(self.D)
        if D.shape != (m, m):
            raise ValueError(f"D must be {m} x {m}, got {D.shape}")
        F = np.asarray(self.F, dtype=float)
        F = F.reshape(n, -1)
        for name, val in (("A", A), ("B", B), ("C", C), ("D", D), ("F", F)):
            object.__setattr__(self, name, val)
        object.__setattr__(self, "r", float(Interval(self.r).r))
        if int(self.degree) != self.degree or self.degree < 0:
            raise ValueError("degree must be a non-negative integer")
        object.__setattr__(self, "degree", int(self.degree))
        rho = spectral_radius(D)
        if rho >= 1.0:
            raise ValueError(f"spectral radius of D is {rho:.6g}; synthesis needs < 1")

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.C.shape[0]

    @property
    def p(self) -> int:
        return self.F.shape[1]

    @property
    def interval(self) -> Interval:
        return Interval(self.r)

    def plant(self) -> PlantModel:
        return PlantModel(self.A, self.B, self.C, self.D, self.r, F=self.F)

    def boundary(self) -> BoundaryData:
        return BoundaryData(self.C, self.D)

    def to_dict(self) -> dict:
        return {
            "A": self.A.tolist(),
            "B": self.B.tolist(),
            "C": self.C.tolist(),
            "D": self.D.tolist(),
            "F": self.F.tolist(),
            "r": self.r,
            "degree": self.degree,
            "eps_min": self.eps_min,
            "constant_S": self.constant_S,
            "weighted": self.weighted,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SynthesisProblem":
        unknown = set(data) - _PROBLEM_KEYS - _OPTIONAL_KEYS
        if unknown:
            raise ValueError(f"unknown synthesis problem keys: {sorted(unknown)}")
        missing = {"A", "B", "C", "F", "r"} - set(data)
        if missing:
            raise ValueError(f"missing synthesis problem keys: {sorted(missing)}")
        A = _mat(data["A"])
        C = _mat(data["C"])
        D = data.get("D", np.zeros((C.shape[0], C.shape[0])))
        return cls(
            A=A,
            B=data["B"],
            C=C,
            D=D,
            F=data["F"],
            r=data["r"],
            degree=data.get("degree", 2),
            eps_min=float(data.get("eps_min", 1e-6)),
            constant_S=bool(data.get("constant_S", False)),
            weighted=bool(data.get("weighted", True)),
        )

    @classmethod
    def from_json(cls, text: str) -> "SynthesisProblem":
        return cls.from_dict(json.loads(text))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


@dataclass
class SynthesisVars:
    """Variable handles of the synthesis SDP."""

    P: object
    Q: object
    S: object
    R: object
    M0: object
    M1: object
    M2: object
    eps: object


def declare_variables(prob: SynthesisProblem, sdp: SdpProblem) -> SynthesisVars:
    n, m, p, d = prob.n, prob.m, prob.p, prob.degree
    return SynthesisVars(
        P=sdp.sym_matrix(n, "P"),
        Q=sdp.poly_matrix(n, m, d, "Q"),
        S=sdp.poly_matrix(m, m, 0 if prob.constant_S else d, "S", symmetric=True),
        R=sdp.poly_matrix(m, m, d, "R", vars=2, symmetric=True),
        M0=sdp.matrix(p, n, "M0"),
        M1=sdp.matrix(p, m, "M1"),
        M2=sdp.poly_matrix(p, m, d, "M2"),
        eps=sdp.scalar("eps"),
    )


def _expr(v):
    return v.expr if hasattr(v, "expr") else v


def build_blocks(prob: SynthesisProblem, v: SynthesisVars):
    """``(T, U, V)`` as affine polynomial matrices.

    ``T`` is (n+m) square; ``U`` is (n+2m) square over
    ``(psi_hat, phi_hat(-r), phi_hat(s))``; ``V`` is m x m in (s, t).
    """
    A, B, C, D, F, r = prob.A, prob.B, prob.C, prob.D, prob.F, prob.r
    n, m = prob.n, prob.m
    iv = prob.interval
    P, Q, S, R = _expr(v.P), _expr(v.Q), _expr(v.S), _expr(v.R)
    M0, M1, M2, eps = _expr(v.M0), _expr(v.M1), _expr(v.M2), _expr(v.eps)
    S = AffinePoly1.lift(S, iv)
    Q = AffinePoly1.lift(Q, iv)
    M2 = AffinePoly1.lift(M2, iv)
    R = AffinePoly2.lift(R, iv)
    P = Affine(np.asarray(P, dtype=float)) if not isinstance(P, Affine) else P
    M0 = Affine(np.asarray(M0, dtype=float)) if not isinstance(M0, Affine) else M0
    M1 = Affine(np.asarray(M1, dtype=float)) if not isinstance(M1, Affine) else M1
    eps = Affine(np.asarray(eps, dtype=float)) if not isinstance(eps, Affine) else eps

    def eye_times(k):
        return Affine(np.zeros((k, k)), eps.lin[..., None, None] * np.eye(k), eps.offset) + eps.const * np.eye(k)

    T = AffinePoly1.block([[P, Q * r], [Q.T * r, S]], iv) - AffinePoly1.lift(eye_times(n + m), iv)

    S0, Sr = S(0.0), S(-r)
    Qr = Q(-r)
    FM0 = F @ M0
    gamma = A @ P + P @ A.T + (B @ Qr.T + Qr @ B.T) * r + (C.T @ S0 @ C) * (1.0 / r) + FM0 + FM0.T
    U11 = gamma + eye_times(n)
    U12 = B @ Sr + F @ M1 + (C.T @ S0 @ D) * (1.0 / r)
    U22 = (Sr - D.T @ S0 @ D) * (-1.0 / r)
    Ups = (Q.deriv() + B @ R.at_s(-r) + A @ Q + F @ M2) * r
    zero23 = np.zeros((m, m))
    U = AffinePoly1.block(
        [
            [U11, U12, Ups],
            [U12.T, U22, zero23],
            [Ups.T, zero23, S.deriv()],
        ],
        iv,
    )
    V = R.deriv_s() + R.deriv_theta()
    return T, U, V


def build_structural_equalities(prob: SynthesisProblem, v: SynthesisVars) -> list:
    """``[(name, expr)]``; each ``expr`` must vanish (polynomials coefficient-wise)."""
    C, D, r = prob.C, prob.D, prob.r
    iv = prob.interval
    P = _expr(v.P)
    Q = AffinePoly1.lift(_expr(v.Q), iv)
    S = AffinePoly1.lift(_expr(v.S), iv)
    R = AffinePoly2.lift(_expr(v.R), iv)
    S0, Sr = S(0.0), S(-r)
    e28 = Q(0.0).T * r + S0 @ C - C @ P - (D @ Q(-r).T) * r
    e29 = R.at_s(0.0) - C @ Q - D @ R.at_s(-r)
    e30 = D @ Sr - S0 @ D
    return [("boundary_psi", e28), ("boundary_kernel", e29), ("boundary_delay", e30)]


@dataclass
class Assembled:
    sdp: SdpProblem
    vars: SynthesisVars
    xi_T: XiHandle
    xi_U: XiHandle


def assemble(prob: SynthesisProblem, normalization: float | None = None) -> Assembled:
    """Full SDP: variables, both positivity certificates, boundary
    equalities, the normalization ``tr P + (1/r) int tr S <= n + m`` and the
    objective ``maximize eps``.

    The operator-side blocks scale with ``n + 2m`` rather than ``3n``; the
    dimensions are recorded in ``sdp.metadata``:

    >>> from lkdelay.examples import reference_problem
    >>> meta = assemble(reference_problem(2)).sdp.metadata
    >>> meta["n"], meta["m"], meta["operator_block_dim"]
    (6, 2, 10)
    >>> meta["U_block_dim"] == meta["n"] + 2 * meta["m"]
    True
    """
    sdp = SdpProblem(prob.interval)
    v = declare_variables(prob, sdp)
    T, U, V = build_blocks(prob, v)
    n, m, d = prob.n, prob.m, prob.degree
    xi_T = xi_constraints(sdp, T, v.R.expr, d, vec_dim=n, weighted=prob.weighted, name="T")
    xi_U = xi_constraints(sdp, -U, -V, d, vec_dim=n + m, weighted=prob.weighted, name="U")
    for name, expr in build_structural_equalities(prob, v):
        sdp.add_eq(expr, name)
    bound = float(n + m) if normalization is None else float(normalization)
    S_int = AffinePoly1.lift(v.S.expr, prob.interval).integral()
    trace = _trace(v.P.expr) + _trace(S_int) * (1.0 / prob.r)
    sdp.add_psd((Affine(bound) - trace).reshape(1, 1), "normalization")
    sdp.maximize(v.eps.expr)
    sdp.metadata.update(
        {
            "n": n,
            "m": m,
            "p": prob.p,
            "degree": d,
            "T_block_dim": n + m,
            "U_block_dim": n + 2 * m,
            "operator_block_dim": n + 2 * m,
        }
    )
    return Assembled(sdp, v, xi_T, xi_U)


def _trace(a: Affine) -> Affine:
    k = a.shape[0]
    idx = np.arange(k)
    return a[idx, idx].sum(0)


@dataclass
class SynthesisCertificate:
    """Recovered operator data, dual controller variables and margin."""

    P: np.ndarray
    Q: PolyMat1
    R: PolyMat2
    S: PolyMat1
    M0: np.ndarray
    M1: np.ndarray
    M2: PolyMat1
    eps: float
    degree: int
    interval: Interval
    solver: dict = field(default_factory=dict)

    def operator(self) -> KernelOperator:
        return KernelOperator(self.P, self.Q, self.R, self.S, sym_tol=1e-7)

    def separable(self) -> SeparableKernelOperator:
        return SeparableKernelOperator.from_kernel(self.operator(), self.degree)

    def to_dict(self) -> dict:
        return {
            "eps": self.eps,
            "degree": self.degree,
            "r": self.interval.r,
            "P": self.P.tolist(),
            "Q": self.Q.to_dict(),
            "R": self.R.to_dict(),
            "S": self.S.to_dict(),
            "M0": self.M0.tolist(),
            "M1": self.M1.tolist(),
            "M2": self.M2.to_dict(),
            "solver": self.solver,
        }


@dataclass
class ControllerGains:
    """``u = K0 x + K1 y(t - r) + int K2(s) y(t + s) ds``.

    ``K2_poly`` is set when ``K2`` is exactly polynomial; otherwise ``K2`` is
    known through ``samples`` on ``grid`` (evaluated by cubic spline), with a
    least-squares polynomial ``fit`` and its maximum sample error.
    """

    K0: np.ndarray
    K1: np.ndarray
    interval: Interval
    grid: np.ndarray
    samples: np.ndarray
    fit: PolyMat1
    fit_error: float
    K2_poly: PolyMat1 | None = None

    @property
    def exact(self) -> bool:
        return self.K2_poly is not None

    @classmethod
    def from_polynomial(cls, K0, K1, K2: PolyMat1, samples: int = K2_SAMPLES) -> "ControllerGains":
        iv = K2.interval
        grid = np.linspace(-iv.r, 0.0, samples)
        return cls(
            K0=_mat(K0),
            K1=_mat(K1),
            interval=iv,
            grid=grid,
            samples=K2(grid, check=False),
            fit=K2,
            fit_error=0.0,
            K2_poly=K2,
        )

    def K2_at(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        if self.K2_poly is not None:
            return self.K2_poly(s, check=False)
        spline = CubicSpline(self.grid, self.samples, axis=0)
        return spline(s)

    def apply(self, psi, phi_fn, quad=None) -> np.ndarray:
        """``K0 psi + K1 phi(-r) + int K2 phi`` for a callable ``phi``."""
        quad = quad or gauss_rule(40, self.interval)
        vals = np.asarray(phi_fn(quad.nodes), dtype=float)
        k2 = self.K2_at(quad.nodes)
        integral = np.einsum("k,kpm,km->p", quad.weights, k2, vals)
        end = np.asarray(phi_fn(np.array([-self.interval.r])), dtype=float).reshape(-1)
        return self.K0 @ np.asarray(psi, dtype=float) + self.K1 @ end + integral

    def to_dict(self) -> dict:
        return {
            "K0": self.K0.tolist(),
            "K1": self.K1.tolist(),
            "r": self.interval.r,
            "K2_exact_polynomial": None if self.K2_poly is None else self.K2_poly.coeffs.tolist(),
            "K2_grid": self.grid.tolist(),
            "K2_samples": self.samples.tolist(),
            "K2_fit_coeffs": self.fit.coeffs.tolist(),
            "K2_fit_degree": self.fit.degree,
            "K2_fit_max_error": self.fit_error,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "ControllerGains":
        iv = Interval(data["r"])
        exact = data.get("K2_exact_polynomial")
        fit = PolyMat1(np.asarray(data["K2_fit_coeffs"], dtype=float), iv)
        return cls(
            K0=_mat(data["K0"]),
            K1=_mat(data["K1"]),
            interval=iv,
            grid=np.asarray(data["K2_grid"], dtype=float),
            samples=np.asarray(data["K2_samples"], dtype=float),
            fit=fit,
            fit_error=float(data["K2_fit_max_error"]),
            K2_poly=None if exact is None else PolyMat1(np.asarray(exact, dtype=float), iv),
        )


def _fit_poly(grid: np.ndarray, samples: np.ndarray, degree: int, iv: Interval):
    """Least-squares polynomial fit (per entry) in the monomial basis."""
    # scaled variable keeps the Vandermonde system well conditioned
    r = iv.r
    V = (grid[:, None] / r) ** np.arange(degree + 1)[None, :]
    flat = samples.reshape(len(grid), -1)
    coef, *_ = np.linalg.lstsq(V, flat, rcond=None)
    coef = coef / (r ** np.arange(degree + 1))[:, None]
    fit = PolyMat1(coef.reshape((degree + 1,) + samples.shape[1:]), iv)
    err = float(np.max(np.abs(fit(grid, check=False) - samples), initial=0.0))
    return fit, err


def gains_from_certificate(
    cert: SynthesisCertificate,
    quad=None,
    samples: int = K2_SAMPLES,
    fit_degree: int | None = None,
) -> ControllerGains:
    """Controller gains from a certificate via the closed-form inverse.

    Exact polynomial path when ``S`` is constant; otherwise ``K2`` is
    sampled and fitted with a polynomial of degree ``2 d`` (default).
    """
    d = cert.degree
    too_high = [
        name
        for name, deg in (("Q", cert.Q.degree), ("S", cert.S.degree), ("M2", cert.M2.degree), ("R", max(cert.R.degree)))
        if deg > d
    ]
    if too_high:
        raise BasisMismatch(f"certificate polynomials {too_high} exceed degree {d}")
    sep = cert.separable()
    inv = invert_separable(sep, quad)
    return _gains_from_inverse(cert, inv, quad, samples, fit_degree)


def _gains_from_inverse(cert, inv: InverseKernelOperator, quad, samples, fit_degree):
    iv = cert.interval
    r = iv.r
    d = cert.degree
    M0, M1, M2 = cert.M0, cert.M1, cert.M2
    grid = np.linspace(-r, 0.0, samples)
    fit_degree = 2 * d if fit_degree is None else fit_degree
    if inv.S_constant:
        hat = inv.as_separable()
        Z = monomial_basis(d, hat.m, iv)
        Hh, Gh = hat.H, hat.Gamma
        S0inv = hat.S.coeffs[0]
        Zr = Z(-r, check=False)
        int_M2Z = (M2 @ Z.T).integral()
        K0 = M0 @ hat.P + r * M1 @ (Hh @ Zr).T + r * int_M2Z @ Hh.T
        K1 = M1 @ S0inv
        K2 = (M0 @ Hh + M1 @ Zr.T @ Gh + int_M2Z @ Gh) @ Z + M2 @ S0inv
        gains = ControllerGains.from_polynomial(K0, K1, K2, samples)
        if fit_degree != K2.degree:
            fit, err = _fit_poly(grid, gains.samples, fit_degree, iv)
            gains.fit, gains.fit_error = fit, err
        return gains
    rule = quad or gauss_rule(60, iv)
    nodes, w = rule.nodes, rule.weights
    Qn = inv.Qhat(nodes)
    Qr = inv.Qhat(np.array([-r]))[0]
    K0 = M0 @ inv.Phat + r * M1 @ Qr.T + r * np.einsum("k,kpm,knm->pn", w, M2(nodes, check=False), Qn)
    K1 = M1 @ inv.S_inv(np.array([-r]))[0]
    Rr = inv.Rhat(np.array([-r]), grid)[0]
    Rng = inv.Rhat(nodes, grid)
    K2 = (
        np.einsum("pn,gnm->gpm", M0, inv.Qhat(grid))
        + np.einsum("pa,gam->gpm", M1, Rr)
        + np.einsum("gpa,gam->gpm", M2(grid, check=False), inv.S_inv(grid))
        + np.einsum("k,kpa,kgam->gpm", w, M2(nodes, check=False), Rng)
    )
    fit, err = _fit_poly(grid, K2, fit_degree, iv)
    return ControllerGains(K0=K0, K1=K1, interval=iv, grid=grid, samples=K2, fit=fit, fit_error=err)


@dataclass
class SynthesisReport:
    """Diagnostics of a synthesis run."""

    status: str
    eps: float
    solver: dict
    invariance: tuple
    decay_ratio: float | None
    problem_summary: dict

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "eps": self.eps,
            "solver": self.solver,
            "invariance_residual": list(self.invariance),
            "decay_ratio": self.decay_ratio,
            "sdp": self.problem_summary,
        }


def _certificate(prob, asm: Assembled, sol) -> SynthesisCertificate:
    sdp, v = asm.sdp, asm.vars
    iv = prob.interval
    S = extract(sdp, sol, v.S)
    if S.rows != prob.m:
        raise AssertionError("S has the wrong size")
    return SynthesisCertificate(
        P=extract(sdp, sol, v.P),
        Q=extract(sdp, sol, v.Q),
        R=extract(sdp, sol, v.R),
        S=S,
        M0=np.atleast_2d(extract(sdp, sol, v.M0)),
        M1=np.atleast_2d(extract(sdp, sol, v.M1)),
        M2=extract(sdp, sol, v.M2),
        eps=float(extract(sdp, sol, v.eps)),
        degree=prob.degree,
        interval=iv,
        solver={
            "backend": sol.backend,
            "status": sol.status,
            "raw_status": sol.raw_status,
            "iterations": sol.iterations,
            "eq_residual": sol.eq_residual,
            "psd_violation": sol.psd_violation,
        },
    )


def synthesize(
    prob: SynthesisProblem,
    tol: float = 1e-8,
    max_iter: int = 200,
    backend: str = "clarabel",
    validate: bool = True,
    backoff: float | None = 0.5,
):
    """Solve the synthesis SDP and return ``(certificate, gains, report)``.

    The margin is maximized first; with ``backoff`` the problem is re-solved
    with ``eps`` fixed to ``backoff * eps_max`` (and no objective), which
    keeps the point away from the boundary.  Raises ``Infeasible`` when no
    margin above ``eps_min`` exists, and ``ValidationFailed`` when the
    simulated closed loop from ``x(0) = 1``, ``y = C x(0)`` on ``[-r, 0]``
    does not decay below ``DECAY_GATE`` of its peak within ``25 r``.
    """
    asm = assemble(prob)
    sol = solve(asm.sdp, tol=tol, max_iter=max_iter, backend=backend)
    log.info("max-eps solve: %s eps=%s", sol.status, -sol.objective)
    if sol.status != "feasible":
        raise Infeasible(
            f"synthesis SDP at degree {prob.degree} returned {sol.status} ({sol.raw_status}); "
            "try a higher degree",
            status=sol.status,
        )
    eps_max = float(extract(asm.sdp, sol, asm.vars.eps))
    if eps_max < prob.eps_min:
        raise Infeasible(
            f"best margin {eps_max:.3e} is below eps_min={prob.eps_min:.3e}; try a higher degree",
            status="infeasible",
            eps=eps_max,
        )
    if backoff is not None:
        asm2 = assemble(prob)
        asm2.sdp.add_eq(asm2.vars.eps.expr, "eps_fixed", rhs=backoff * eps_max)
        asm2.sdp.minimize(Affine(0.0))
        sol2 = solve(asm2.sdp, tol=tol, max_iter=max_iter, backend=backend)
        if sol2.status == "feasible":
            asm, sol = asm2, sol2
        else:
            log.warning("back-off solve returned %s; keeping the max-margin point", sol2.status)
    cert = _certificate(prob, asm, sol)
    cert.solver["eps_max"] = eps_max
    op = cert.operator()
    inv_res = invariance_residual(op, prob.boundary())
    gains = gains_from_certificate(cert)
    ratio = None
    if validate:
        ratio = validate_closed_loop(prob, gains)
        if not ratio <= DECAY_GATE:
            raise ValidationFailed(
                f"closed loop decay ratio {ratio:.3e} exceeds {DECAY_GATE}",
                details={"decay_ratio": ratio, "eps": cert.eps},
            )
    report = SynthesisReport(
        status="feasible",
        eps=cert.eps,
        solver=cert.solver,
        invariance=inv_res,
        decay_ratio=ratio,
        problem_summary=asm.sdp.summary(),
    )
    return cert, gains, report


def validate_closed_loop(prob: SynthesisProblem, gains: ControllerGains, t_end: float | None = None, dt=None) -> float:
    """Decay ratio of the closed loop from ``psi = 1``, ``phi = C psi``."""
    plant = prob.plant()
    psi = np.ones(prob.n)
    y0 = prob.C @ psi
    traj = simulate(
        plant,
        gains,
        psi,
        lambda s: np.tile(y0, (len(np.atleast_1d(s)), 1)),
        t_end=25 * prob.r if t_end is None else t_end,
        dt=prob.r / 200 if dt is None else dt,
    )
    return decay_ratio(traj)
