"""Random operators and states for property checks and self-tests."""

from __future__ import annotations

import numpy as np
from scipy.linalg import null_space

from ..polyalg import Interval, PolyMat1
from .functions import PolyFunction, SampledFunction, StateFunction
from .kernel import BoundaryData, SeparableKernelOperator, z_norm

__all__ = [
    "random_state",
    "random_state_in_X",
    "random_sampled_state",
    "random_spd",
    "random_separable",
    "random_invariant_separable",
]


def _interval(interval) -> Interval:
    return interval if isinstance(interval, Interval) else Interval(interval)


def random_spd(k: int, rng, floor: float = 0.5) -> np.ndarray:
    a = rng.standard_normal((k, k))
    return a @ a.T / k + floor * np.eye(k)


def random_state(n: int, m: int, interval, rng, max_degree: int = 3, normalize: bool = True) -> StateFunction:
    """Random ``psi`` and random polynomial ``phi``, unit Z-norm by default."""
    interval = _interval(interval)
    deg = int(rng.integers(0, max_degree + 1))
    # scale s**k coefficients so every term is O(1) on [-r, 0]
    scale = interval.r ** -np.arange(deg + 1)
    coeffs = rng.standard_normal((deg + 1, m)) * scale[:, None]
    z = StateFunction(rng.standard_normal(n), PolyFunction.from_coeffs(coeffs, interval))
    return z * (1.0 / z_norm(z)) if normalize else z


def random_sampled_state(n: int, m: int, interval, rng, points: int = 41, normalize: bool = True) -> StateFunction:
    """Random ``psi`` and a rough grid function ``phi`` (independent normal samples)."""
    interval = _interval(interval)
    grid = np.linspace(-interval.r, 0.0, points)
    z = StateFunction(rng.standard_normal(n), SampledFunction(grid, rng.standard_normal((points, m)), interval))
    return z * (1.0 / z_norm(z)) if normalize else z


def random_state_in_X(bd: BoundaryData, interval, rng, max_degree: int = 3) -> StateFunction:
    """Random unit state with polynomial ``phi(0) = C psi + D phi(-r)``.

    A constant shift ``c`` with ``(I - D) c = C psi - p(0) + D p(-r)``
    corrects a random polynomial ``p``.
    """
    interval = _interval(interval)
    m, n = bd.C.shape
    z = random_state(n, m, interval, rng, max_degree, normalize=False)
    p = z.phi.poly
    rhs = bd.C @ z.psi - p(0.0, check=False)[:, 0] + bd.D @ p(-interval.r, check=False)[:, 0]
    c = np.linalg.solve(np.eye(m) - bd.D, rhs)
    coeffs = p.coeffs[:, :, 0].copy()
    coeffs[0] += c
    z = StateFunction(z.psi, PolyFunction.from_coeffs(coeffs, interval))
    return z * (1.0 / z_norm(z))


def _random_S(m: int, degree: int, interval, rng, constant: bool) -> PolyMat1:
    r = interval.r
    S0 = random_spd(m, rng, floor=1.0)
    if constant or degree == 0:
        return PolyMat1.constant(S0, interval)
    coeffs = [S0]
    for k in range(1, degree + 1):
        a = rng.standard_normal((m, m))
        coeffs.append(0.3 * (a + a.T) / 2 / r**k / k)
    S = PolyMat1(np.array(coeffs), interval)
    # shift so S(s) >= I on a fine grid
    grid = np.linspace(-r, 0.0, 201)
    low = np.min(np.linalg.eigvalsh(S(grid, check=False)))
    if low < 1.0:
        S = S + PolyMat1.constant((1.0 - low) * np.eye(m), interval)
    return S


def random_separable(
    n: int,
    m: int,
    degree: int,
    interval,
    rng,
    constant_S: bool = True,
    S_degree: int = 2,
    coupling: float = 0.3,
) -> SeparableKernelOperator:
    """Random separable operator with SPD ``P`` and ``S``."""
    interval = _interval(interval)
    q = (degree + 1) * m
    scale = np.repeat(interval.r ** -np.arange(degree + 1), m)
    P = random_spd(n, rng, floor=1.0)
    H = coupling * rng.standard_normal((n, q)) * scale
    g = rng.standard_normal((q, q))
    G = coupling * (g + g.T) / 2 * np.outer(scale, scale)
    S = _random_S(m, S_degree, interval, rng, constant_S)
    return SeparableKernelOperator(P, H, G, S, degree)


def random_invariant_separable(
    bd: BoundaryData,
    degree: int,
    interval,
    rng,
    constant_S: bool = False,
) -> SeparableKernelOperator:
    """Random separable operator satisfying the boundary-invariance equalities.

    ``S`` is ``a(s) I`` with ``a(-r) = a(0)`` (or constant), so
    ``D S(-r) = S(0) D`` holds for any ``D``.  ``(P, H, Gamma)`` is a random
    point of the affine set

        C H = (Z(0)^T - D Z(-r)^T) Gamma
        r (Z(0)^T - D Z(-r)^T) H^T + S(0) C - C P = 0

    obtained by a least-squares particular solution plus a random null-space
    component.
    """
    interval = _interval(interval)
    r = interval.r
    C, D = bd.C, bd.D
    m, n = C.shape
    d = degree
    q = (d + 1) * m
    if constant_S or d == 0:
        S = PolyMat1.constant(np.eye(m) * (1.0 + rng.random()), interval)
    else:
        c = 0.5 * rng.random() / r**2
        # a(s) = a0 - c s (s + r) is >= a0 on [-r, 0] and equal at both ends
        a0 = 1.0 + rng.random()
        S = PolyMat1(np.array([a0 * np.eye(m), -c * r * np.eye(m), -c * np.eye(m)]), interval)
    S0 = S(0.0, check=False)
    powers0 = np.zeros(d + 1)
    powers0[0] = 1.0
    powersr = (-r) ** np.arange(d + 1)
    # E = Z(0)^T - D Z(-r)^T, an m x q matrix
    E = np.hstack([powers0[k] * np.eye(m) - powersr[k] * D for k in range(d + 1)])

    iu_n = np.triu_indices(n)
    iu_q = np.triu_indices(q)
    nP, nH, nG = len(iu_n[0]), n * q, len(iu_q[0])

    def unpack(x):
        P = np.zeros((n, n))
        P[iu_n] = x[:nP]
        P = P + np.triu(P, 1).T
        H = x[nP : nP + nH].reshape(n, q)
        G = np.zeros((q, q))
        G[iu_q] = x[nP + nH :]
        G = G + np.triu(G, 1).T
        return P, H, G

    def residual(x, with_const=True):
        P, H, G = unpack(x)
        e1 = C @ H - E @ G
        e2 = r * E @ H.T - C @ P + (S0 @ C if with_const else 0.0)
        return np.concatenate([e1.ravel(), e2.ravel()])

    N = nP + nH + nG
    A = np.column_stack([residual(e, with_const=False) for e in np.eye(N)])
    b = -residual(np.zeros(N))
    x0 = np.linalg.lstsq(A, b, rcond=None)[0]
    ns = null_space(A)
    x = x0 + ns @ rng.standard_normal(ns.shape[1]) * 0.5
    P, H, G = unpack(x)
    return SeparableKernelOperator(P, H, G, S, d)
