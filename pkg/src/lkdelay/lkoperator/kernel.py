"""The kernel operator P on Z and its quadratic form.

    (P z)_psi     = P psi + int Q(s) phi(s) ds
    (P z)_phi(s)  = r Q(s)^T psi + int R(s, t) phi(t) dt + S(s) phi(s)

and ``V(psi, phi) = <z, P z>`` with ``<z1, z2> = r psi1.psi2 + int phi1.phi2``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from ..polyalg import Interval, PolyMat1, PolyMat2, QuadratureRule, gauss_rule, monomial_basis
from .functions import PointwiseFunction, PolyFunction, StateFunction, integration_rule

__all__ = [
    "BoundaryData",
    "KernelOperator",
    "SeparableKernelOperator",
    "apply_operator",
    "inner_product",
    "lk_value",
    "invariance_residual",
    "default_quad",
]


def default_quad(interval, n_nodes: int = 20) -> QuadratureRule:
    return gauss_rule(n_nodes, interval)


def _sym_err(a: np.ndarray) -> float:
    return float(np.max(np.abs(a - np.swapaxes(a, -1, -2)), initial=0.0))


@dataclass(frozen=True)
class BoundaryData:
    """Boundary coupling ``phi(0) = C psi + D phi(-r)`` defining X."""

    C: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        C = np.atleast_2d(np.asarray(self.C, dtype=float))
        D = np.atleast_2d(np.asarray(self.D, dtype=float))
        if D.shape[0] != D.shape[1] or C.shape[0] != D.shape[0]:
            raise ValueError(f"C must be m x n and D m x m, got {C.shape} and {D.shape}")
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "D", D)

    @property
    def spectral_radius(self) -> float:
        if self.D.size == 0:
            return 0.0
        return float(np.max(np.abs(np.linalg.eigvals(self.D))))

    def require_stable(self):
        rho = self.spectral_radius
        if not rho < 1.0:
            raise ValueError(f"spectral radius of D is {rho:.6g}; analysis needs rho(D) < 1")


class KernelOperator:
    """Operator data ``(P, Q, R, S)`` with ``Q``, ``S`` in s and ``R`` in (s, theta).

    Symmetry of ``P``, ``S(s)`` and ``R(s, t) = R(t, s)^T`` is checked to
    ``sym_tol`` (relative to the largest coefficient).
    """

    def __init__(self, P, Q: PolyMat1, R: PolyMat2, S: PolyMat1, sym_tol: float = 1e-9):
        P = np.atleast_2d(np.asarray(P, dtype=float)) if np.size(P) else np.zeros((0, 0))
        n, m = P.shape[0], S.rows
        if P.shape != (n, n):
            raise ValueError(f"P must be square, got {P.shape}")
        if Q.shape != (n, m) or R.shape != (m, m) or S.shape != (m, m):
            raise ValueError(
                f"inconsistent shapes: P {P.shape}, Q {Q.shape}, R {R.shape}, S {S.shape}"
            )
        for other in (R, S):
            Q._check_interval(other)
        scale = max(1.0, np.max(np.abs(P), initial=0.0), S.max_abs_coeff(), R.max_abs_coeff())
        if sym_tol is not None:
            if _sym_err(P) > sym_tol * scale:
                raise ValueError("P is not symmetric")
            if _sym_err(S.coeffs) > sym_tol * scale:
                raise ValueError("S(s) is not symmetric")
            adj = R.adjoint()
            diff = (R - adj).max_abs_coeff()
            if diff > sym_tol * scale:
                raise ValueError("R(s, t) != R(t, s)^T")
        self.P = P
        self.Q = Q
        self.R = R
        self.S = S

    @classmethod
    def identity(cls, n: int, m: int, interval) -> "KernelOperator":
        return cls(
            np.eye(n),
            PolyMat1.zeros(n, m, interval),
            PolyMat2.zeros(m, m, interval),
            PolyMat1.identity(m, interval),
        )

    @classmethod
    def zero(cls, n: int, m: int, interval) -> "KernelOperator":
        return cls(
            np.zeros((n, n)),
            PolyMat1.zeros(n, m, interval),
            PolyMat2.zeros(m, m, interval),
            PolyMat1.zeros(m, m, interval),
        )

    @property
    def interval(self) -> Interval:
        return self.S.interval

    @property
    def r(self) -> float:
        return self.S.r

    @property
    def n(self) -> int:
        return self.P.shape[0]

    @property
    def m(self) -> int:
        return self.S.rows

    def as_kernel(self) -> "KernelOperator":
        return self

    def kernels_at(self, nodes):
        """``(P, Q(nodes), R(nodes, nodes), S(nodes))`` for quadrature forms."""
        nodes = np.asarray(nodes, dtype=float)
        return (
            self.P,
            self.Q(nodes, check=False),
            self.R(nodes[:, None], nodes[None, :], check=False),
            self.S(nodes, check=False),
        )

    def __repr__(self):
        return (
            f"KernelOperator(n={self.n}, m={self.m}, r={self.r}, "
            f"deg Q={self.Q.degree}, deg R={self.R.degree}, deg S={self.S.degree})"
        )


class SeparableKernelOperator:
    """Separable operator: ``Q(s) = H Z(s)``, ``R(s, t) = Z(s)^T Gamma Z(t)``.

    ``Z(s) = (1, s, ..., s^d)^T kron I_m`` so ``H`` is ``n x q`` and ``Gamma``
    is ``q x q`` with ``q = (d + 1) m``.
    """

    def __init__(self, P, H, Gamma, S: PolyMat1, degree: int, sym_tol: float = 1e-9):
        self.P = np.atleast_2d(np.asarray(P, dtype=float))
        self.H = np.atleast_2d(np.asarray(H, dtype=float))
        self.Gamma = np.atleast_2d(np.asarray(Gamma, dtype=float))
        if isinstance(S, PolyMat1):
            self.S = S
        else:
            raise TypeError("S must be a PolyMat1")
        self.degree = int(degree)
        m = self.S.rows
        q = (self.degree + 1) * m
        n = self.P.shape[0]
        if self.P.shape != (n, n) or self.H.shape != (n, q) or self.Gamma.shape != (q, q):
            raise ValueError(
                f"expected P {n}x{n}, H {n}x{q}, Gamma {q}x{q}; got "
                f"{self.P.shape}, {self.H.shape}, {self.Gamma.shape}"
            )
        self.Zbasis = monomial_basis(self.degree, m, self.S.interval)
        self._kernel = KernelOperator(
            self.P,
            self.H @ self.Zbasis,
            (self.Zbasis.T @ self.Gamma).outer(self.Zbasis),
            self.S,
            sym_tol=sym_tol,
        )

    @classmethod
    def from_kernel(cls, op: KernelOperator, degree: int | None = None) -> "SeparableKernelOperator":
        """Recover ``H`` and ``Gamma`` by coefficient matching in the monomial basis."""
        from ..errors import BasisMismatch

        d_needed = max(op.Q.degree, *op.R.degree)
        d = d_needed if degree is None else int(degree)
        if d_needed > d:
            raise BasisMismatch(f"kernel degree {d_needed} exceeds basis degree {d}")
        n, m = op.n, op.m
        H = np.zeros((n, (d + 1) * m))
        for k, c in enumerate(op.Q.coeffs):
            H[:, k * m : (k + 1) * m] = c
        G = np.zeros(((d + 1) * m, (d + 1) * m))
        ci, cj = op.R.coeffs.shape[:2]
        for i in range(ci):
            for j in range(cj):
                G[i * m : (i + 1) * m, j * m : (j + 1) * m] = op.R.coeffs[i, j]
        G = 0.5 * (G + G.T)
        return cls(op.P, H, G, op.S, d)

    @property
    def interval(self) -> Interval:
        return self.S.interval

    @property
    def r(self) -> float:
        return self.S.r

    @property
    def n(self) -> int:
        return self.P.shape[0]

    @property
    def m(self) -> int:
        return self.S.rows

    @property
    def q(self) -> int:
        return self.H.shape[1]

    @property
    def Q(self) -> PolyMat1:
        return self._kernel.Q

    @property
    def R(self) -> PolyMat2:
        return self._kernel.R

    def as_kernel(self) -> KernelOperator:
        return self._kernel

    def kernels_at(self, nodes):
        return self._kernel.kernels_at(nodes)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "m": self.m,
            "r": self.r,
            "degree": self.degree,
            "P": self.P.tolist(),
            "H": self.H.tolist(),
            "Gamma": self.Gamma.tolist(),
            "S_coeffs": self.S.coeffs.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> "SeparableKernelOperator":
        expected = {"n", "m", "r", "degree", "P", "H", "Gamma", "S_coeffs"}
        unknown = set(data) - expected
        missing = expected - set(data)
        if unknown or missing:
            raise ValueError(f"operator JSON: unknown keys {sorted(unknown)}, missing {sorted(missing)}")
        n, m, d = int(data["n"]), int(data["m"]), int(data["degree"])
        q = (d + 1) * m
        S = np.asarray(data["S_coeffs"], dtype=float).reshape(-1, m, m)
        return cls(
            np.asarray(data["P"], dtype=float).reshape(n, n),
            np.asarray(data["H"], dtype=float).reshape(n, q),
            np.asarray(data["Gamma"], dtype=float).reshape(q, q),
            PolyMat1(S, float(data["r"])),
            d,
        )

    @classmethod
    def from_json(cls, text: str) -> "SeparableKernelOperator":
        return cls.from_dict(json.loads(text))

    def __repr__(self):
        return f"SeparableKernelOperator(n={self.n}, m={self.m}, d={self.degree}, r={self.r})"


def _check_dims(op, z: StateFunction):
    if z.n != op.n or z.m != op.m:
        raise ValueError(f"state has (n, m) = ({z.n}, {z.m}); operator expects ({op.n}, {op.m})")


def apply_operator(op, z: StateFunction, quad: QuadratureRule | None = None) -> StateFunction:
    """Apply a kernel operator.

    Integrals of ``Q`` and ``R`` against ``phi`` reduce to moments of
    ``phi``, so the result is exact whenever the moments are.  For a
    polynomial ``phi`` the result stays polynomial.
    """
    kop = op.as_kernel()
    _check_dims(kop, z)
    quad = quad or default_quad(kop.interval)
    Qc, Rc = kop.Q.coeffs, kop.R.coeffs
    J = max(Qc.shape[0], Rc.shape[1]) - 1
    mu = z.phi.moments(J, quad)
    first = kop.P @ z.psi + np.einsum("knm,km->n", Qc, mu[: Qc.shape[0]])
    # polynomial part of the phi component, one row per power of s
    deg = max(Qc.shape[0], Rc.shape[0])
    part = np.zeros((deg, kop.m))
    part[: Qc.shape[0]] += kop.r * np.einsum("knm,n->km", Qc, z.psi)
    part[: Rc.shape[0]] += np.einsum("ijab,jb->ia", Rc, mu[: Rc.shape[1]])
    part_poly = PolyMat1(part[:, :, None], kop.interval)
    if isinstance(z.phi, PolyFunction):
        return StateFunction(first, PolyFunction(part_poly + kop.S @ z.phi.poly))
    phi, S = z.phi, kop.S

    def second(s):
        return part_poly(s, check=False)[:, :, 0] + np.einsum("kab,kb->ka", S(s, check=False), phi(s))

    pd = None if phi.piece_degree is None else max(part_poly.degree, S.degree + phi.piece_degree)
    return StateFunction(first, PointwiseFunction(second, kop.m, kop.interval, phi.breakpoints, pd))


def inner_product(z1: StateFunction, z2: StateFunction, r=None, quad: QuadratureRule | None = None) -> float:
    """``r psi1.psi2 + int phi1(s).phi2(s) ds``."""
    if z1.n != z2.n or z1.m != z2.m:
        raise ValueError("states have different dimensions")
    interval = z1.interval
    rr = interval.r if r is None else float(getattr(r, "r", r))
    if isinstance(z1.phi, PolyFunction) and isinstance(z2.phi, PolyFunction):
        integral = float((z1.phi.poly.T @ z2.phi.poly).integral()[0, 0])
    else:
        rule = integration_rule([z1.phi, z2.phi], quad or default_quad(interval))
        integral = float(np.einsum("k,ka,ka->", rule.weights, z1.phi(rule.nodes), z2.phi(rule.nodes)))
    return rr * float(z1.psi @ z2.psi) + integral


def z_norm(z: StateFunction, quad: QuadratureRule | None = None) -> float:
    return float(np.sqrt(max(inner_product(z, z, quad=quad), 0.0)))


def lk_value(op, z: StateFunction, quad: QuadratureRule | None = None) -> float:
    """The quadratic functional

    ``V = r psi'P psi + 2 r psi' int Q phi + int int phi'R phi + int phi'S phi``.

    Inverse operators (non-polynomial kernels) are evaluated as
    ``<z, P^{-1} z>``.
    """
    if not isinstance(op, (KernelOperator, SeparableKernelOperator)):
        from .inverse import apply_inverse

        return inner_product(z, apply_inverse(op, z, quad), quad=quad)
    kop = op.as_kernel()
    _check_dims(kop, z)
    quad = quad or default_quad(kop.interval)
    r, psi = kop.r, z.psi
    Qc, Rc = kop.Q.coeffs, kop.R.coeffs
    J = max(Qc.shape[0], Rc.shape[1], Rc.shape[0]) - 1
    mu = z.phi.moments(J, quad)
    v = r * psi @ kop.P @ psi
    v += 2 * r * psi @ np.einsum("knm,km->n", Qc, mu[: Qc.shape[0]])
    v += np.einsum("ia,ijab,jb->", mu[: Rc.shape[0]], Rc, mu[: Rc.shape[1]])
    if isinstance(z.phi, PolyFunction):
        v += float((z.phi.poly.T @ kop.S @ z.phi.poly).integral()[0, 0])
    else:
        rule = integration_rule([z.phi, z.phi], quad, kop.S.degree)
        vals = z.phi(rule.nodes)
        v += np.einsum("k,ka,kab,kb->", rule.weights, vals, kop.S(rule.nodes, check=False), vals)
    return float(v)


def invariance_residual(op, bd: BoundaryData) -> tuple[float, float, float]:
    """Frobenius residuals of the three boundary conditions for ``P X in X``.

    1. ``r Q(0)^T + S(0) C - C P - r D Q(-r)^T``
    2. ``R(0, s) - C Q(s) - D R(-r, s)`` (coefficient-wise, as a polynomial in s)
    3. ``D S(-r) - S(0) D``
    """
    kop = op.as_kernel()
    C, D, r = bd.C, bd.D, kop.r
    if C.shape != (kop.m, kop.n) or D.shape != (kop.m, kop.m):
        raise ValueError(f"boundary data shapes {C.shape}, {D.shape} do not match operator")
    Q0, Qr = kop.Q(0.0, check=False), kop.Q(-r, check=False)
    S0, Sr = kop.S(0.0, check=False), kop.S(-r, check=False)
    e28 = r * Q0.T + S0 @ C - C @ kop.P - r * D @ Qr.T
    e29 = kop.R.at_s(0.0) - C @ kop.Q - D @ kop.R.at_s(-r)
    e30 = D @ Sr - S0 @ D
    return (
        float(np.linalg.norm(e28)),
        float(np.linalg.norm(e29.coeffs)),
        float(np.linalg.norm(e30)),
    )
