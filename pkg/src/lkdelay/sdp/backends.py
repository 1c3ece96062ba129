"""Conic solver adapters.

Each backend takes ``ConicData`` and returns a ``BackendResult`` with a point
and a coarse status; verification happens in ``solve``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

__all__ = ["BackendResult", "BACKENDS", "clarabel_backend", "cvxopt_backend"]

_SQRT2 = np.sqrt(2.0)


@dataclass
class BackendResult:
    x: np.ndarray | None
    status: str
    raw_status: str
    iterations: int = 0


def _svec_rows(side: int):
    """Row indices (into the row-major full block) and scales of the
    column-wise upper-triangle vectorization with sqrt(2) off-diagonals."""
    idx, scale = [], []
    for j in range(side):
        for i in range(j + 1):
            idx.append(i * side + j)
            scale.append(1.0 if i == j else _SQRT2)
    return np.array(idx), np.array(scale)


def clarabel_backend(data, tol: float, max_iter: int) -> BackendResult:
    import clarabel

    N = data.nvar
    A_parts, b_parts, cones = [], [], []
    if data.A.shape[0]:
        from .problem import _normalized_eqs

        A, b = _normalized_eqs(data)
        A_parts.append(A)
        b_parts.append(b)
        cones.append(clarabel.ZeroConeT(A.shape[0]))
    for side, F, g in data.blocks:
        idx, scale = _svec_rows(side)
        D = sp.diags(scale)
        A_parts.append(-(D @ F[idx]))
        b_parts.append(scale * g[idx])
        cones.append(clarabel.PSDTriangleConeT(side))
    A = sp.vstack(A_parts).tocsc() if A_parts else sp.csc_matrix((0, N))
    b = np.concatenate(b_parts) if b_parts else np.zeros(0)
    settings = clarabel.DefaultSettings()
    settings.verbose = False
    settings.max_iter = int(max_iter)
    settings.tol_gap_abs = tol
    settings.tol_gap_rel = tol
    settings.tol_feas = tol
    settings.tol_infeas_abs = tol
    settings.tol_infeas_rel = tol
    P = sp.csc_matrix((N, N))
    sol = clarabel.DefaultSolver(P, np.asarray(data.c, dtype=float), A, b, cones, settings).solve()
    raw = str(sol.status)
    if raw in ("Solved", "AlmostSolved"):
        status = "feasible"
    elif raw in ("PrimalInfeasible", "AlmostPrimalInfeasible"):
        status = "infeasible"
    else:
        status = "numerical_trouble"
    x = np.array(sol.x, dtype=float) if status == "feasible" else None
    return BackendResult(x, status, raw, int(sol.iterations))


def _independent_rows(A: np.ndarray, b: np.ndarray, rtol: float = 1e-10):
    """Row basis of ``[A | b]`` via pivoted QR; flags inconsistency."""
    from scipy.linalg import qr

    if A.shape[0] == 0:
        return A, b, True
    _, R, piv = qr(A.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > rtol * max(diag[0], 1.0))) if diag.size else 0
    keep = np.sort(piv[:rank])
    A1, b1 = A[keep], b[keep]
    x = np.linalg.lstsq(A1, b1, rcond=None)[0]
    consistent = np.max(np.abs(A @ x - b), initial=0.0) <= 1e-8 * max(1.0, np.max(np.abs(b), initial=0.0))
    return A1, b1, consistent


def cvxopt_backend(data, tol: float, max_iter: int) -> BackendResult:
    """Alternate backend; dense, intended for small cross-check problems."""
    import cvxopt
    from cvxopt import solvers

    from .problem import _normalized_eqs

    A, b = _normalized_eqs(data)
    A, b, consistent = _independent_rows(A.toarray(), b)
    if not consistent:
        return BackendResult(None, "infeasible", "inconsistent equalities")
    Gs, hs = [], []
    for side, F, g in data.blocks:
        # cvxopt expects column-major; the symmetric block makes the order irrelevant
        Gs.append(cvxopt.matrix(-F.toarray()))
        hs.append(cvxopt.matrix(g.reshape(side, side)))
    opts = {"show_progress": False, "maxiters": int(max_iter), "abstol": tol, "reltol": tol, "feastol": tol}
    kwargs = {}
    if A.shape[0]:
        kwargs = {"A": cvxopt.matrix(A), "b": cvxopt.matrix(b)}
    try:
        res = solvers.sdp(cvxopt.matrix(np.asarray(data.c, dtype=float)), Gs=Gs, hs=hs, options=opts, **kwargs)
    except (ValueError, ArithmeticError) as exc:
        return BackendResult(None, "numerical_trouble", f"cvxopt error: {exc}")
    raw = res["status"]
    if raw == "optimal":
        return BackendResult(np.array(res["x"]).ravel(), "feasible", raw, int(res.get("iterations", 0)))
    if raw == "primal infeasible":
        return BackendResult(None, "infeasible", raw)
    if raw == "unknown" and res["x"] is not None:
        return BackendResult(np.array(res["x"]).ravel(), "feasible", raw, int(res.get("iterations", 0)))
    return BackendResult(None, "numerical_trouble", raw)


BACKENDS = {"clarabel": clarabel_backend, "cvxopt": cvxopt_backend}
