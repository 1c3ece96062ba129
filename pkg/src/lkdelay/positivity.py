"""Gram-matrix certificates for positivity of multiplier plus integral operators.

The quadratic form certified here is

    F(v, phi) = int [v; phi(s)]^T M(s) [v; phi(s)] ds + int int phi(s)^T N(s, t) phi(t) ds dt

with ``v`` a constant vector of size ``k1`` (``vec_dim``) and ``phi`` a
function with ``k2`` components, ``k = k1 + k2``.  Only the integral of the
``v``-``v`` block of ``M`` enters ``F``.

Construction.  With ``B(s) = (1, s, ..., s^d)^T kron I_k`` and
``Bphi(s)`` its last ``k2`` columns, set

    y1(s) = B(s) [v; phi(s)],        y2 = (1/r) int Bphi(t) phi(t) dt   (size (d+1) k2)

For a PSD matrix ``W`` of side ``(d+1)(k + k2)``,
``int [y1(s); y2]^T W [y1(s); y2] ds >= 0`` and expands to

    M(s)      = B(s)^T W11 B(s)
    M12(t)   += (1/r) (int Bv(s)^T ds) W12 Bphi(t)                (v-phi block)
    N(s, t)   = (1/r) [Bphi(s)^T W12' Bphi(t) + Bphi(s)^T W12'^T Bphi(t)]
                + (1/r) Bphi(s)^T W22 Bphi(t)

where ``W12'`` is ``W12`` restricted to the ``phi`` rows of each basis block.
In weighted mode a second PSD matrix ``Ww`` (basis degree ``d - 1``) adds
``g(s) B(s)^T Ww B(s)`` with ``g(s) = s (-r - s) >= 0`` on the interval,
which localizes positivity of ``M`` to ``[-r, 0]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegreeTooLow
from .lkoperator import KernelOperator
from .polyalg import Interval, PolyMat1, PolyMat2, composite_gauss_rule, monomial_integrals
from .sdp import Affine, AffinePoly1, AffinePoly2, SdpProblem, stack

__all__ = [
    "XiCertificate",
    "XiHandle",
    "gram_side",
    "weighted_side",
    "xi_expand",
    "xi_constraints",
    "xi_certificate_from_solution",
    "op_from_multiplier",
    "sample_positivity",
]


def _interval(interval) -> Interval:
    return interval if isinstance(interval, Interval) else Interval(interval)


def gram_side(degree: int, k: int, vec_dim: int = 0) -> int:
    """Side of the main Gram matrix: ``(d+1)(k + k2)``; ``2 (d+1) k`` without a vector part."""
    return (degree + 1) * (2 * k - vec_dim)


def weighted_side(degree: int, k: int) -> int:
    """Side of the interval-weighted Gram matrix (0 when ``degree == 0``)."""
    return degree * k


@dataclass(frozen=True)
class XiCertificate:
    """Gram data certifying ``{M, N}``.

    ``gram`` is partitioned as ``[[W11, W12], [W12^T, W22]]`` with ``W11`` of
    side ``(d+1) k``; ``weighted_gram`` is optional.
    """

    gram: np.ndarray
    basis_degree: int
    multiplier_dim: int
    interval: Interval
    vec_dim: int = 0
    weighted_gram: np.ndarray | None = None

    def __post_init__(self):
        g = np.asarray(self.gram, dtype=float)
        side = gram_side(self.basis_degree, self.multiplier_dim, self.vec_dim)
        if g.shape != (side, side):
            raise ValueError(f"gram must be {side} x {side}, got {g.shape}")
        if not 0 <= self.vec_dim < self.multiplier_dim:
            raise ValueError("vec_dim must satisfy 0 <= vec_dim < multiplier_dim")
        object.__setattr__(self, "gram", 0.5 * (g + g.T))
        object.__setattr__(self, "interval", _interval(self.interval))
        if self.weighted_gram is not None:
            w = np.asarray(self.weighted_gram, dtype=float)
            ws = weighted_side(self.basis_degree, self.multiplier_dim)
            if w.shape != (ws, ws):
                raise ValueError(f"weighted gram must be {ws} x {ws}, got {w.shape}")
            object.__setattr__(self, "weighted_gram", 0.5 * (w + w.T))


def _conv_weight(coeffs: list, g: np.ndarray) -> list:
    """Multiply a coefficient list (affine blocks) by the scalar polynomial ``g``."""
    out = [None] * (len(coeffs) + len(g) - 1)
    for i, c in enumerate(coeffs):
        for t, gt in enumerate(g):
            if gt == 0.0:
                continue
            term = c * float(gt)
            out[i + t] = term if out[i + t] is None else out[i + t] + term
    zero = coeffs[0] * 0.0
    return [zero if c is None else c for c in out]


def _expand_affine(W: Affine, Ww: Affine | None, d: int, k: int, k1: int, interval: Interval):
    """Affine ``(M, N)``; ``M`` is k x k of degree 2d, ``N`` is k2 x k2 of degree (d, d)."""
    r = interval.r
    D = d + 1
    k2 = k - k1
    n1 = D * k
    W11, W12, W22 = W[:n1, :n1], W[:n1, n1:], W[n1:, n1:]

    def b1(i):
        return slice(i * k, (i + 1) * k)

    def b2(j):
        return slice(j * k2, (j + 1) * k2)

    M = []
    for p in range(2 * d + 1):
        terms = [W11[b1(i), b1(p - i)] for i in range(max(0, p - d), min(p, d) + 1)]
        M.append(sum(terms[1:], terms[0]))
    if Ww is not None and d >= 1:
        dw = d - 1
        Mw = []
        for p in range(2 * dw + 1):
            terms = [Ww[b1(i), b1(p - i)] for i in range(max(0, p - dw), min(p, dw) + 1)]
            Mw.append(sum(terms[1:], terms[0]))
        Mw = _conv_weight(Mw, np.array([0.0, -r, -1.0]))
        M = [a + b for a, b in zip(M, Mw)]
    Mexpr = stack(M)
    if k1:
        # v-phi cross term through y2
        mu = monomial_integrals(d, r)
        extra = []
        for j in range(D):
            terms = [W12[b1(i), b2(j)][:k1, :] * (mu[i] / r) for i in range(D)]
            extra.append(sum(terms[1:], terms[0]))
        pad = [Affine(np.zeros((k1, k2)))] * (2 * d + 1 - D)
        Mexpr = Mexpr + _embed_cross(stack(extra + pad), k1, k2)
    N = []
    for a in range(D):
        row = []
        for b in range(D):
            term = W12[b1(a), b2(b)][k1:, :] + W12[b1(b), b2(a)][k1:, :].T + W22[b2(a), b2(b)]
            row.append(term * (1.0 / r))
        N.append(stack(row))
    Nexpr = stack(N)
    return AffinePoly1(Mexpr, interval), AffinePoly2(Nexpr, interval)


def _embed_cross(extra: Affine, k1: int, k2: int) -> Affine:
    """Symmetric k x k coefficient stack holding ``extra`` in the v-phi block."""
    k = k1 + k2
    L = np.eye(k)[:, :k1]
    Rm = np.eye(k)[k1:, :]
    upper = L @ extra @ Rm
    return upper + upper.T


def _gram_affine(gram) -> Affine:
    return Affine(np.asarray(gram, dtype=float))


def xi_expand(cert: XiCertificate) -> tuple[PolyMat1, PolyMat2]:
    """Polynomial pair ``(M, N)`` certified by ``cert`` (see module docstring)."""
    Ww = None if cert.weighted_gram is None else _gram_affine(cert.weighted_gram)
    M, N = _expand_affine(
        _gram_affine(cert.gram), Ww, cert.basis_degree, cert.multiplier_dim, cert.vec_dim, cert.interval
    )
    return PolyMat1(M.coef.const, cert.interval), PolyMat2(N.coef.const, cert.interval)


@dataclass
class XiHandle:
    """Gram variables created by ``xi_constraints``."""

    name: str
    gram: object
    weighted: object | None
    degree: int
    k: int
    vec_dim: int
    equalities: int


def _degree_check(M_t: AffinePoly1, N_t: AffinePoly2 | None, d: int, name: str):
    if M_t.degree > 2 * d:
        raise DegreeTooLow(f"{name}: multiplier degree {M_t.degree} exceeds 2*{d}")
    if N_t is not None and max(N_t.degree) > d:
        raise DegreeTooLow(f"{name}: kernel degree {N_t.degree} exceeds ({d}, {d})")


def xi_constraints(
    problem: SdpProblem,
    M_target,
    N_target,
    degree: int,
    vec_dim: int = 0,
    weighted: bool = True,
    name: str = "xi",
) -> XiHandle:
    """Add Gram variables, their PSD blocks and coefficient-matching equalities.

    ``M_target`` is k x k (``AffinePoly1``, ``PolyMat1`` or constant);
    ``N_target`` is (k - vec_dim) square (``AffinePoly2``, ``PolyMat2`` or
    ``None`` for zero).  Raises ``DegreeTooLow`` when the targets exceed
    degree ``2 d`` (multiplier) or ``(d, d)`` (kernel).
    """
    interval = problem.interval
    if interval is None:
        raise ValueError("problem needs an interval")
    M_t = AffinePoly1.lift(M_target, interval)
    k = M_t.rows
    if M_t.cols != k:
        raise ValueError("multiplier target must be square")
    k1, k2 = vec_dim, k - vec_dim
    if k2 <= 0:
        raise ValueError("vec_dim must be smaller than the multiplier side")
    N_t = None if N_target is None else AffinePoly2.lift(N_target, interval)
    if N_t is not None and N_t.shape != (k2, k2):
        raise ValueError(f"kernel target must be {k2} x {k2}, got {N_t.shape}")
    d = degree
    _degree_check(M_t, N_t, d, name)

    W = problem.sym_matrix(gram_side(d, k, k1), f"{name}.gram")
    problem.add_psd(W.expr, f"{name}.gram")
    Wv = None
    if weighted and d >= 1:
        Wv = problem.sym_matrix(weighted_side(d, k), f"{name}.weighted")
        problem.add_psd(Wv.expr, f"{name}.weighted")
    M, N = _expand_affine(W.expr, None if Wv is None else Wv.expr, d, k, k1, interval)

    diff = M - M_t
    rows = 0
    iu = np.triu(np.ones((k2, k2), dtype=bool))
    if k1:
        vv = diff.coef[:, :k1, :k1].tensordot(monomial_integrals(diff.degree, interval.r), 0)
        rows += problem.add_eq(vv, f"{name}.vv", mask=np.triu(np.ones((k1, k1), dtype=bool)))
        rows += problem.add_eq(diff.coef[:, :k1, k1:], f"{name}.vphi")
    rows += problem.add_eq(diff.coef[:, k1:, k1:], f"{name}.phiphi", mask=iu[None])
    Ndiff = N if N_t is None else N - N_t
    D = Ndiff.coef.shape[0]
    mask = np.zeros(Ndiff.coef.shape, dtype=bool)
    for a in range(D):
        for b in range(a, Ndiff.coef.shape[1]):
            mask[a, b] = iu if a == b else True
    rows += problem.add_eq(Ndiff.coef, f"{name}.kernel", mask=mask)
    problem.metadata.setdefault("xi_blocks", {})[name] = {
        "multiplier_dim": k,
        "vec_dim": k1,
        "degree": d,
        "gram_side": gram_side(d, k, k1),
        "weighted_side": 0 if Wv is None else weighted_side(d, k),
    }
    return XiHandle(name, W, Wv, d, k, k1, rows)


def xi_certificate_from_solution(problem: SdpProblem, solution, handle: XiHandle) -> XiCertificate:
    from .sdp import extract

    return XiCertificate(
        gram=extract(problem, solution, handle.gram),
        basis_degree=handle.degree,
        multiplier_dim=handle.k,
        interval=problem.interval,
        vec_dim=handle.vec_dim,
        weighted_gram=None if handle.weighted is None else extract(problem, solution, handle.weighted),
    )


def op_from_multiplier(M: PolyMat1, N: PolyMat2, vec_dim: int) -> KernelOperator:
    """Operator whose form ``<z, P z>`` equals ``F`` with ``z = (v, phi)``.

    ``P = int M11 / r``, ``Q = M12 / r``, ``S = M22``, ``R = N``.
    """
    k1 = vec_dim
    r = M.r
    interval = M.interval
    c = M.coeffs
    P = M.block(slice(0, k1), slice(0, k1)).integral() / r if k1 else np.zeros((0, 0))
    Q = PolyMat1(c[:, :k1, k1:] / r, interval) if k1 else PolyMat1(np.zeros((1, 0, M.rows)), interval)
    S = PolyMat1(c[:, k1:, k1:], interval)
    return KernelOperator(0.5 * (P + P.T), Q, N, S)


def _sample_batch(rng, count: int, n: int, m: int, r: float, nodes: np.ndarray, cells: np.ndarray):
    """Random ``psi`` and ``phi`` values at ``nodes``: polynomial, step or piecewise linear."""
    psi = rng.standard_normal((count, n))
    phi = np.empty((count, len(nodes), m))
    ncell = len(cells) - 1
    which = np.searchsorted(cells, nodes, side="right") - 1
    which = np.clip(which, 0, ncell - 1)
    for i in range(count):
        kind = i % 3
        if kind == 0:
            deg = int(rng.integers(0, 5))
            coef = rng.standard_normal((deg + 1, m)) * (r ** -np.arange(deg + 1))[:, None]
            phi[i] = (nodes[:, None] ** np.arange(deg + 1)[None, :]) @ coef
        elif kind == 1:
            vals = rng.standard_normal((ncell, m))
            phi[i] = vals[which]
        else:
            knots = rng.standard_normal((ncell + 1, m))
            t = ((nodes - cells[which]) / (cells[which + 1] - cells[which]))[:, None]
            phi[i] = (1 - t) * knots[which] + t * knots[which + 1]
    # occasional state with only one part
    if count >= 6:
        psi[3] = 0.0
        phi[4] = 0.0
    return psi, phi


def sample_positivity(
    op,
    n_samples: int = 1000,
    quad=None,
    seed: int = 0,
    cells: int = 16,
    nodes_per_cell: int = 10,
    batch: int = 250,
) -> float:
    """Minimum of ``<z, P z> / <z, z>`` over random states.

    States mix random ``psi`` with polynomial, piecewise-constant and
    piecewise-linear ``phi`` whose breakpoints lie on ``cells`` uniform cells;
    the default composite Gauss rule integrates all of them exactly against
    polynomial kernels of moderate degree.  ``quad`` overrides the rule.
    """
    interval = op.interval
    r = interval.r
    grid = np.linspace(-r, 0.0, cells + 1)
    rule = quad or composite_gauss_rule(grid, nodes_per_cell, interval)
    nodes, w = rule.nodes, rule.weights
    P, Q, R, S = op.kernels_at(nodes)
    n, m = P.shape[0], S.shape[-1]
    K = len(nodes)
    # R as a (K m) x (K m) matrix so the double integral is one matmul
    Rmat = np.transpose(R, (0, 2, 1, 3)).reshape(K * m, K * m)
    Qw = (Q * w[:, None, None]).transpose(1, 0, 2).reshape(n, K * m) if n else None
    rng = np.random.default_rng(seed)
    worst = np.inf
    done = 0
    while done < n_samples:
        count = min(batch, n_samples - done)
        psi, phi = _sample_batch(rng, count, n, m, r, nodes, grid)
        wphi = (phi * w[None, :, None]).reshape(count, K * m)
        form = np.einsum("bka,kac,bkc->b", phi * w[None, :, None], S, phi, optimize=True)
        form += np.einsum("bi,bi->b", wphi @ Rmat, wphi)
        norm = np.einsum("bi,bi->b", wphi, phi.reshape(count, K * m))
        if n:
            form += r * np.einsum("bi,ij,bj->b", psi, P, psi, optimize=True)
            form += 2 * r * np.einsum("bi,bi->b", psi @ Qw, phi.reshape(count, K * m))
            norm += r * np.einsum("bi,bi->b", psi, psi)
        ok = norm > 0
        if np.any(ok):
            worst = min(worst, float(np.min(form[ok] / norm[ok])))
        done += count
    return worst
