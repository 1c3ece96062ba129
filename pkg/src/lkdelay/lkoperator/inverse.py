"""Closed-form inverse of a separable kernel operator.

With ``K = int Z(s) S(s)^{-1} Z(s)^T ds`` and

    T      = (I + K Gamma - r K H^T P^{-1} H)^{-1}
    Hhat   = -P^{-1} H T
    Phat   = (I + r P^{-1} H T K H^T) P^{-1}
    Gamhat = (r T^T H^T P^{-1} H - Gamma)(I + K Gamma)^{-1}

the inverse has the same shape as the forward operator with ``Shat = S^{-1}``,
``Zhat = Z S^{-1}``, ``Qhat = Hhat Zhat`` and ``Rhat(s, t) = Zhat(s)^T Gamhat Zhat(t)``.
When ``S`` is non-constant these kernels are rational, so the inverse is only
evaluated pointwise.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from ..errors import SingularMatrixError
from ..polyalg import Interval, PolyMat1, QuadratureRule, gauss_rule
from .functions import PointwiseFunction, PolyFunction, StateFunction, integration_rule
from .kernel import (
    BoundaryData,
    KernelOperator,
    SeparableKernelOperator,
    apply_operator,
    default_quad,
    z_norm,
)

__all__ = [
    "InverseKernelOperator",
    "QuadratureAgreementWarning",
    "invert_separable",
    "apply_inverse",
    "composition_residual",
    "inverse_invariance_residual",
]

COND_LIMIT = 1e12
K_AGREEMENT_TOL = 1e-9


class QuadratureAgreementWarning(UserWarning):
    """Two quadrature rules disagree on a rational integral."""


def _checked_inv(a: np.ndarray, which: str) -> np.ndarray:
    if a.size == 0:
        return a.copy()
    cond = np.linalg.cond(a)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise SingularMatrixError(which, cond)
    return np.linalg.inv(a)


def _S_inverse_at(S: PolyMat1, nodes) -> np.ndarray:
    vals = S(np.atleast_1d(nodes), check=False)
    conds = np.linalg.cond(vals)
    bad = ~np.isfinite(conds) | (conds > COND_LIMIT)
    if np.any(bad):
        k = int(np.argmax(np.where(np.isfinite(conds), conds, np.inf)))
        raise SingularMatrixError(
            "S_at_node", conds[k], f"S(s) singular at s={np.atleast_1d(nodes)[k]:.6g}"
        )
    return np.linalg.inv(vals)


@dataclass(frozen=True)
class InverseKernelOperator:
    """Data of ``P^{-1}`` for a separable ``P``; see the module docstring."""

    Phat: np.ndarray
    Hhat: np.ndarray
    Gammahat: np.ndarray
    S: PolyMat1
    Zbasis: PolyMat1
    interval: Interval
    K: np.ndarray
    T: np.ndarray
    degree: int

    @property
    def r(self) -> float:
        return self.interval.r

    @property
    def n(self) -> int:
        return self.Phat.shape[0]

    @property
    def m(self) -> int:
        return self.S.rows

    @property
    def S_constant(self) -> bool:
        return self.S.is_constant

    def S_inv(self, s) -> np.ndarray:
        return _S_inverse_at(self.S, s)

    def Zhat(self, s) -> np.ndarray:
        """``Z(s) S(s)^{-1}``, shape (len(s), q, m)."""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        return np.einsum("kqa,kab->kqb", self.Zbasis(s, check=False), self.S_inv(s))

    def Qhat(self, s) -> np.ndarray:
        return np.einsum("nq,kqm->knm", self.Hhat, self.Zhat(s))

    def Rhat(self, s, theta) -> np.ndarray:
        """``Rhat`` on the grid ``s x theta``, shape (len(s), len(theta), m, m)."""
        zs, zt = self.Zhat(s), self.Zhat(theta)
        return np.einsum("kqa,qp,lpb->klab", zs, self.Gammahat, zt)

    def kernels_at(self, nodes):
        nodes = np.asarray(nodes, dtype=float)
        zh = self.Zhat(nodes)
        return (
            self.Phat,
            np.einsum("nq,kqm->knm", self.Hhat, zh),
            np.einsum("kqa,qp,lpb->klab", zh, self.Gammahat, zh),
            self.S_inv(nodes),
        )

    def as_separable(self) -> SeparableKernelOperator:
        """Exact separable form, available when ``S`` is constant.

        ``Z S0^{-1} = (I_{d+1} kron S0^{-1}) Z`` keeps the monomial basis.
        """
        if not self.S_constant:
            raise ValueError("inverse kernels are rational when S is non-constant")
        S0inv = _checked_inv(self.S.coeffs[0], "S_at_node")
        S0inv = 0.5 * (S0inv + S0inv.T)
        L = np.kron(np.eye(self.degree + 1), S0inv)
        G = L.T @ self.Gammahat @ L
        return SeparableKernelOperator(
            self.Phat,
            self.Hhat @ L,
            0.5 * (G + G.T),
            PolyMat1.constant(S0inv, self.interval),
            self.degree,
        )

    def as_kernel(self) -> KernelOperator:
        return self.as_separable().as_kernel()


def _k_integral(Z: PolyMat1, S: PolyMat1, quad: QuadratureRule) -> np.ndarray:
    Sinv = _S_inverse_at(S, quad.nodes)
    Zn = Z(quad.nodes, check=False)
    return np.einsum("k,kqa,kab,kpb->qp", quad.weights, Zn, Sinv, Zn)


def invert_separable(op: SeparableKernelOperator, quad: QuadratureRule | None = None) -> InverseKernelOperator:
    """Closed-form inverse of a separable operator.

    Raises ``SingularMatrixError`` when ``P``, ``S`` at a quadrature node,
    ``I + K Gamma - r K H^T P^{-1} H`` or ``I + K Gamma`` is singular.
    """
    interval = op.interval
    r = op.r
    quad = quad or default_quad(interval)
    Z, S, H, G = op.Zbasis, op.S, op.H, op.Gamma
    q = op.q
    Pinv = _checked_inv(op.P, "P")
    if S.is_constant:
        S0inv = _checked_inv(S.coeffs[0], "S_at_node")
        K = (Z @ S0inv @ Z.T).integral()
    else:
        K = _k_integral(Z, S, quad)
        check = gauss_rule(max(30, len(quad) + 10), interval)
        K_check = _k_integral(Z, S, check)
        gap = np.max(np.abs(K - K_check)) / max(1.0, np.max(np.abs(K_check)))
        if gap > K_AGREEMENT_TOL:
            warnings.warn(
                f"K integral changes by {gap:.2e} between {len(quad)} and {len(check)} nodes; "
                "using the finer rule",
                QuadratureAgreementWarning,
                stacklevel=2,
            )
            K = K_check
    K = 0.5 * (K + K.T)
    I = np.eye(q)
    HtPH = H.T @ Pinv @ H
    T = _checked_inv(I + K @ G - r * K @ HtPH, "T_inner")
    IKG_inv = _checked_inv(I + K @ G, "I_plus_KGamma")
    Hhat = -Pinv @ H @ T
    Phat = (np.eye(op.n) + r * Pinv @ H @ T @ K @ H.T) @ Pinv
    Ghat = (r * T.T @ HtPH - G) @ IKG_inv
    return InverseKernelOperator(
        Phat=0.5 * (Phat + Phat.T),
        Hhat=Hhat,
        Gammahat=0.5 * (Ghat + Ghat.T),
        S=S,
        Zbasis=Z,
        interval=interval,
        K=K,
        T=T,
        degree=op.degree,
    )


def apply_inverse(inv: InverseKernelOperator, z: StateFunction, quad: QuadratureRule | None = None) -> StateFunction:
    """Apply ``P^{-1}``.

    With ``w = int Zhat(t) phi(t) dt`` the result is
    ``(Phat psi + Hhat w,  s -> S(s)^{-1} [Z(s)^T (r Hhat^T psi + Gamhat w) + phi(s)])``.
    Exact and polynomial when ``S`` is constant and ``phi`` polynomial.
    """
    if z.n != inv.n or z.m != inv.m:
        raise ValueError(f"state has (n, m) = ({z.n}, {z.m}); operator expects ({inv.n}, {inv.m})")
    quad = quad or default_quad(inv.interval)
    r, phi, m = inv.r, z.phi, inv.m
    d = inv.degree
    if inv.S_constant:
        S0inv = _checked_inv(inv.S.coeffs[0], "S_at_node")
        mu = phi.moments(d, quad)
        w = np.concatenate([S0inv @ mu[k] for k in range(d + 1)])
    else:
        rule = integration_rule([phi], quad, None)
        w = np.einsum("k,kqa,ka->q", rule.weights, inv.Zhat(rule.nodes), phi(rule.nodes))
    first = inv.Phat @ z.psi + inv.Hhat @ w
    c = r * inv.Hhat.T @ z.psi + inv.Gammahat @ w
    # Z(s)^T c as a polynomial column: coefficient k is the k-th block of c
    zc = PolyMat1(c.reshape(d + 1, m)[:, :, None], inv.interval)
    if inv.S_constant and isinstance(phi, PolyFunction):
        return StateFunction(first, PolyFunction(S0inv @ (zc + phi.poly)))
    S = inv.S

    def second(s):
        rhs = zc(s, check=False)[:, :, 0] + phi(s)
        return np.einsum("kab,kb->ka", _S_inverse_at(S, s), rhs)

    pd = None
    if inv.S_constant and phi.piece_degree is not None:
        pd = max(d, phi.piece_degree)
    return StateFunction(first, PointwiseFunction(second, m, inv.interval, phi.breakpoints, pd))


def composition_residual(
    op: SeparableKernelOperator,
    inv: InverseKernelOperator,
    samples: int = 100,
    quad: QuadratureRule | None = None,
    seed: int = 0,
) -> float:
    """Largest ``||P^{-1} P z - z||`` or ``||P P^{-1} z - z||`` over random unit ``z``."""
    from .sampling import random_state

    if op.n != inv.n or op.m != inv.m:
        raise ValueError("operator and inverse dimensions differ")
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(samples):
        z = random_state(op.n, op.m, op.interval, rng)
        e1 = apply_inverse(inv, apply_operator(op, z, quad), quad) - z
        e2 = apply_operator(op, apply_inverse(inv, z, quad), quad) - z
        worst = max(worst, z_norm(e1, quad), z_norm(e2, quad))
    return worst


def inverse_invariance_residual(
    inv: InverseKernelOperator,
    bd: BoundaryData,
    quad: QuadratureRule | None = None,
    samples: int = 20,
    seed: int = 0,
) -> float:
    """Largest boundary mismatch ``|w_phi(0) - C w_psi - D w_phi(-r)|`` of
    ``w = P^{-1} z`` over random unit ``z`` in X."""
    from .sampling import random_state_in_X

    bd.require_stable()
    rng = np.random.default_rng(seed)
    worst = 0.0
    r = inv.r
    for _ in range(samples):
        z = random_state_in_X(bd, inv.interval, rng)
        w = apply_inverse(inv, z, quad)
        ends = w.phi(np.array([0.0, -r]))
        res = ends[0] - bd.C @ w.psi - bd.D @ ends[1]
        worst = max(worst, float(np.linalg.norm(res)))
    return worst
