"""Semidefinite problem assembly, solving and result extraction."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from ..errors import SolverError
from ..polyalg import Interval, PolyMat1, PolyMat2
from .affine import Affine, AffinePoly1, AffinePoly2, as_affine

__all__ = [
    "Variable",
    "SdpProblem",
    "SdpSolution",
    "ConicData",
    "solve",
    "extract",
    "verify",
    "DEFAULT_TOL",
    "DEFAULT_MAX_ITER",
]

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 200

FEASIBLE = "feasible"
INFEASIBLE = "infeasible"
TROUBLE = "numerical_trouble"


@dataclass(frozen=True)
class Variable:
    """Handle for a declared decision variable.

    ``expr`` is the affine expression of the variable itself (``Affine`` for
    matrices, ``AffinePoly1`` / ``AffinePoly2`` for polynomial matrices).
    """

    name: str
    kind: str
    expr: object
    count: int
    symmetry: str = "none"


@dataclass
class _Eq:
    name: str
    A: sp.csr_matrix
    b: np.ndarray


@dataclass
class _Psd:
    name: str
    expr: Affine


class SdpProblem:
    """Decision variables, PSD blocks, affine equalities and a linear objective.

    Symmetric unknowns store only their upper triangle; equality rows are kept
    sparse; the objective is minimized (``maximize`` negates).

    Examples
    --------
    >>> prob = SdpProblem()
    >>> X = prob.sym_matrix(2, "X")
    >>> prob.nvar
    3
    """

    def __init__(self, interval=None):
        self.interval = None if interval is None else (interval if isinstance(interval, Interval) else Interval(interval))
        self.nvar = 0
        self.variables: dict[str, Variable] = {}
        self.psd: list[_Psd] = []
        self.eqs: list[_Eq] = []
        self.objective = Affine(0.0)
        self.metadata: dict = {}
        self._inconsistent: list[str] = []

    # declaration -------------------------------------------------------
    def _register(self, name: str, kind: str, expr, count: int, symmetry: str = "none") -> Variable:
        if name in self.variables:
            raise ValueError(f"variable {name!r} already declared")
        var = Variable(name, kind, expr, count, symmetry)
        self.variables[name] = var
        return var

    def _alloc(self, count: int) -> int:
        start = self.nvar
        self.nvar += count
        return start

    def _need_interval(self, interval):
        iv = interval or self.interval
        if iv is None:
            raise ValueError("polynomial variables need an interval")
        return iv if isinstance(iv, Interval) else Interval(iv)

    def scalar(self, name: str) -> Variable:
        start = self._alloc(1)
        return self._register(name, "scalar", Affine(0.0, np.ones((1,)), start), 1)

    def matrix(self, rows: int, cols: int, name: str) -> Variable:
        _positive(rows, cols)
        count = rows * cols
        start = self._alloc(count)
        lin = np.eye(count).reshape(count, rows, cols)
        return self._register(name, "matrix", Affine(np.zeros((rows, cols)), lin, start), count)

    def sym_matrix(self, side: int, name: str) -> Variable:
        _positive(side)
        lin = _sym_template(side)
        start = self._alloc(lin.shape[0])
        return self._register(name, "sym_matrix", Affine(np.zeros((side, side)), lin, start), lin.shape[0], "sym")

    def poly_matrix(
        self,
        rows: int,
        cols: int,
        degree: int,
        name: str,
        vars: int = 1,
        symmetric: bool = False,
        interval=None,
    ) -> Variable:
        """Polynomial matrix unknown of the given degree in one or two variables.

        ``symmetric`` means ``S(s) = S(s)^T`` for one variable and
        ``R(s, theta) = R(theta, s)^T`` for two.
        """
        _positive(rows, cols)
        if degree < 0:
            raise ValueError("degree must be non-negative")
        iv = self._need_interval(interval)
        D = degree + 1
        if symmetric and rows != cols:
            raise ValueError("symmetric polynomial matrices must be square")
        if vars == 1:
            if symmetric:
                blk = _sym_template(rows)
                per = blk.shape[0]
                lin = np.zeros((D * per, D, rows, cols))
                for k in range(D):
                    lin[k * per : (k + 1) * per, k] = blk
            else:
                per = rows * cols
                lin = np.eye(D * per).reshape(D * per, D, rows, cols)
            start = self._alloc(lin.shape[0])
            expr = AffinePoly1(Affine(np.zeros(lin.shape[1:]), lin, start), iv)
            sym = "sym" if symmetric else "none"
        elif vars == 2:
            lin = _kernel_template(rows, cols, D, symmetric)
            start = self._alloc(lin.shape[0])
            expr = AffinePoly2(Affine(np.zeros(lin.shape[1:]), lin, start), iv)
            sym = "kernel" if symmetric else "none"
        else:
            raise ValueError("vars must be 1 or 2")
        return self._register(name, f"poly_matrix{vars}", expr, lin.shape[0], sym)

    def declare_variable(self, kind: str, *args, **kwargs) -> Variable:
        """Dispatch on ``kind`` in {scalar, matrix, sym_matrix, poly_matrix}."""
        table = {
            "scalar": self.scalar,
            "matrix": self.matrix,
            "sym_matrix": self.sym_matrix,
            "poly_matrix": self.poly_matrix,
        }
        if kind not in table:
            raise ValueError(f"unknown variable kind {kind!r}")
        return table[kind](*args, **kwargs)

    # constraints -------------------------------------------------------
    def add_psd(self, expr, name: str = "psd") -> None:
        """Require the square affine matrix ``expr`` to be positive semidefinite."""
        expr = as_affine(expr)
        if expr.ndim != 2 or expr.shape[0] != expr.shape[1]:
            raise ValueError(f"PSD block must be square, got shape {expr.shape}")
        self.psd.append(_Psd(name, (expr + expr.T) * 0.5))

    def add_eq(self, expr, name: str = "eq", mask=None, rhs=None) -> int:
        """Require ``expr == rhs`` (default zero) entrywise, optionally only where ``mask``.

        Rows that vanish identically are dropped; identically inconsistent rows
        are remembered and make the problem infeasible.  Returns the number
        of rows kept.
        """
        if isinstance(expr, (AffinePoly1, AffinePoly2)):
            expr = expr.coef
        expr = as_affine(expr)
        if rhs is not None:
            expr = expr - np.broadcast_to(np.asarray(rhs, dtype=float), expr.shape)
        A, b = expr.rows(self.nvar)
        if mask is not None:
            keep = np.broadcast_to(np.asarray(mask, dtype=bool), expr.shape).ravel()
            A, b = A[keep], b[keep]
        A = A.tocsr()
        nnz = np.diff(A.indptr) > 0
        scale = max(1.0, float(np.max(np.abs(b), initial=0.0)))
        bad = (~nnz) & (np.abs(b) > 1e-12 * scale)
        if np.any(bad):
            self._inconsistent.append(f"{name}: {int(bad.sum())} constant rows are nonzero")
        A, b = A[nnz], -b[nnz]
        if A.shape[0]:
            self.eqs.append(_Eq(name, A, b))
        return A.shape[0]

    def minimize(self, expr) -> None:
        expr = as_affine(expr)
        if expr.shape != ():
            raise ValueError("objective must be scalar")
        self.objective = expr

    def maximize(self, expr) -> None:
        self.minimize(-as_affine(expr))

    # standard form -----------------------------------------------------
    def conic_data(self) -> "ConicData":
        N = self.nvar
        if self.eqs:
            A = sp.vstack([_widen(e.A, N) for e in self.eqs]).tocsr()
            b = np.concatenate([e.b for e in self.eqs])
        else:
            A, b = sp.csr_matrix((0, N)), np.zeros(0)
        blocks = []
        for blk in self.psd:
            F, g = blk.expr.rows(N)
            blocks.append((blk.expr.shape[0], F.tocsr(), g))
        c, _ = self.objective.reshape(1).rows(N)
        c = np.asarray(c.todense()).ravel()
        return ConicData(c=c, A=A, b=b, blocks=blocks, names=[p.name for p in self.psd])

    def summary(self) -> dict:
        return {
            "variables": self.nvar,
            "equalities": int(sum(e.A.shape[0] for e in self.eqs)),
            "psd_blocks": [p.expr.shape[0] for p in self.psd],
            **self.metadata,
        }


def _widen(A: sp.csr_matrix, ncols: int) -> sp.csr_matrix:
    return sp.csr_matrix((A.data, A.indices, A.indptr), shape=(A.shape[0], ncols))


def _positive(*dims):
    for d in dims:
        if int(d) <= 0:
            raise ValueError(f"dimensions must be positive, got {dims}")


def _sym_template(side: int) -> np.ndarray:
    iu = np.triu_indices(side)
    count = len(iu[0])
    lin = np.zeros((count, side, side))
    v = np.arange(count)
    lin[v, iu[0], iu[1]] = 1.0
    lin[v, iu[1], iu[0]] = 1.0
    return lin


def _kernel_template(rows: int, cols: int, D: int, symmetric: bool) -> np.ndarray:
    """Independent coefficients of ``R(s, t)``; with symmetry ``C[i, j] = C[j, i]^T``."""
    if not symmetric:
        count = D * D * rows * cols
        return np.eye(count).reshape(count, D, D, rows, cols)
    entries = []
    for i in range(D):
        for j in range(i, D):
            if i == j:
                for a, b in zip(*np.triu_indices(rows)):
                    entries.append((i, j, a, b))
            else:
                for a in range(rows):
                    for b in range(cols):
                        entries.append((i, j, a, b))
    lin = np.zeros((len(entries), D, D, rows, cols))
    for v, (i, j, a, b) in enumerate(entries):
        lin[v, i, j, a, b] = 1.0
        lin[v, j, i, b, a] = 1.0
    return lin


@dataclass
class ConicData:
    """Standard primal form: minimize ``c x`` s.t. ``A x = b`` and
    ``mat(F_k x + g_k)`` PSD, ``F_k`` / ``g_k`` row-major over the full block."""

    c: np.ndarray
    A: sp.csr_matrix
    b: np.ndarray
    blocks: list
    names: list = field(default_factory=list)

    @property
    def nvar(self) -> int:
        return self.c.shape[0]


@dataclass
class SdpSolution:
    """Solver output with independently recomputed residuals."""

    x: np.ndarray
    status: str
    objective: float
    psd_violation: float
    eq_residual: float
    backend: str
    raw_status: str
    iterations: int = 0
    solve_time: float = 0.0
    block_min_eigs: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    @property
    def feasible(self) -> bool:
        return self.status == FEASIBLE


def _normalized_eqs(data: ConicData):
    A, b = data.A, data.b
    if A.shape[0] == 0:
        return A, b
    norms = np.sqrt(np.asarray(A.multiply(A).sum(axis=1)).ravel())
    inv = sp.diags(1.0 / norms)
    return (inv @ A).tocsr(), b / norms


def verify(data: ConicData, x: np.ndarray):
    """Equality residual (row-normalized) and PSD violation at ``x``."""
    A, b = _normalized_eqs(data)
    eq = float(np.max(np.abs(A @ x - b), initial=0.0))
    mins = []
    for side, F, g in data.blocks:
        M = (F @ x + g).reshape(side, side)
        mins.append(float(np.linalg.eigvalsh(0.5 * (M + M.T))[0]))
    viol = max([0.0] + [-m for m in mins])
    return eq, viol, mins


def _project_equalities(data: ConicData, x: np.ndarray) -> np.ndarray:
    """Minimum-norm correction onto ``A x = b``."""
    A, b = _normalized_eqs(data)
    if A.shape[0] == 0:
        return x
    res = A @ x - b
    dense = A.toarray()
    dx = np.linalg.lstsq(dense, res, rcond=None)[0]
    return x - dx


def solve(
    problem: SdpProblem | ConicData,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    backend: str = "clarabel",
    verify_tol: float | None = None,
) -> SdpSolution:
    """Solve and independently verify.

    ``status`` is ``feasible`` only when the recomputed equality residual and
    PSD violation are within ``verify_tol`` (default ``10 * tol``); a point
    that fails is first projected onto the equalities, then reported as
    ``numerical_trouble`` if it still fails.
    """
    from .backends import BACKENDS

    data = problem.conic_data() if isinstance(problem, SdpProblem) else problem
    verify_tol = 10 * tol if verify_tol is None else verify_tol
    inconsistent = list(getattr(problem, "_inconsistent", []))
    if inconsistent:
        return SdpSolution(
            x=np.zeros(data.nvar),
            status=INFEASIBLE,
            objective=float("nan"),
            psd_violation=float("nan"),
            eq_residual=float("inf"),
            backend="presolve",
            raw_status="inconsistent equalities",
            diagnostics={"inconsistent": inconsistent},
        )
    if backend not in BACKENDS:
        raise SolverError(f"unknown backend {backend!r}; available: {sorted(BACKENDS)}")
    t0 = time.perf_counter()
    res = BACKENDS[backend](data, tol=tol, max_iter=max_iter)
    elapsed = time.perf_counter() - t0
    x = np.asarray(res.x, dtype=float) if res.x is not None else np.zeros(data.nvar)
    status = res.status
    diag = {"backend_status": res.raw_status}
    eq, viol, mins = (float("inf"), float("inf"), [])
    if status == FEASIBLE:
        if not np.all(np.isfinite(x)):
            status = TROUBLE
            diag["reason"] = "non-finite solution"
        else:
            eq, viol, mins = verify(data, x)
            if eq > verify_tol:
                x = _project_equalities(data, x)
                eq, viol, mins = verify(data, x)
                diag["projected"] = True
            if eq > verify_tol or viol > verify_tol:
                status = TROUBLE
                diag["reason"] = f"verification failed: eq residual {eq:.3e}, PSD violation {viol:.3e}"
    log.info("sdp %s: %s in %.2fs (%s)", backend, status, elapsed, res.raw_status)
    return SdpSolution(
        x=x,
        status=status,
        objective=float(data.c @ x),
        psd_violation=viol,
        eq_residual=eq,
        backend=backend,
        raw_status=res.raw_status,
        iterations=res.iterations,
        solve_time=elapsed,
        block_min_eigs=mins,
        diagnostics=diag,
    )


def extract(problem: SdpProblem, solution: SdpSolution, handle):
    """Value of a declared variable with its symmetry restored exactly."""
    name = handle.name if isinstance(handle, Variable) else handle
    if name not in problem.variables:
        raise KeyError(f"unknown variable {name!r}")
    var = problem.variables[name]
    x = solution.x if isinstance(solution, SdpSolution) else np.asarray(solution)
    expr = var.expr
    if isinstance(expr, AffinePoly1):
        c = expr.coef.value(x)
        if var.symmetry == "sym":
            c = 0.5 * (c + np.swapaxes(c, -1, -2))
        return PolyMat1(c, expr.interval)
    if isinstance(expr, AffinePoly2):
        c = expr.coef.value(x)
        if var.symmetry == "kernel":
            c = 0.5 * (c + np.swapaxes(np.swapaxes(c, 0, 1), -1, -2))
        return PolyMat2(c, expr.interval)
    val = expr.value(x)
    if var.symmetry == "sym":
        val = 0.5 * (val + val.T)
    return val if val.shape else float(val)
