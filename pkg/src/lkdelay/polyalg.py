"""Matrix-valued polynomials in one or two variables on the interval [-r, 0].

Coefficients are stored densely in the monomial basis:

* ``PolyMat1`` holds ``coeffs[i]`` (rows x cols) for ``sum_i coeffs[i] s**i``.
* ``PolyMat2`` holds ``coeffs[i, j]`` for ``sum_ij coeffs[i, j] s**i theta**j``.

Trailing exactly-zero coefficients are trimmed on construction so that degree
queries are deterministic.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = [
    "Interval",
    "PolyMat1",
    "PolyMat2",
    "QuadratureRule",
    "monomial_basis",
    "gauss_rule",
    "composite_gauss_rule",
    "poly_eval",
    "poly_calculus",
    "poly_algebra",
    "monomial_integrals",
    "poly_from_json",
]


class OutOfIntervalWarning(UserWarning):
    """Evaluation point lies outside [-r, 0]."""


@dataclass(frozen=True)
class Interval:
    """The delay interval [-r, 0]."""

    r: float

    def __post_init__(self):
        r = float(self.r)
        if not np.isfinite(r) or r <= 0:
            raise ValueError(f"delay r must be positive and finite, got {self.r!r}")
        object.__setattr__(self, "r", r)

    @property
    def lower(self) -> float:
        return -self.r

    def contains(self, s, slack: float = 1e-12) -> bool:
        s = np.asarray(s, dtype=float)
        return bool(np.all((s >= -self.r * (1 + slack) - slack) & (s <= slack)))


def _as_interval(interval) -> Interval:
    if isinstance(interval, Interval):
        return interval
    return Interval(interval)


def monomial_integrals(max_power: int, r: float) -> np.ndarray:
    """Return ``[int_{-r}^0 s**k ds for k in 0..max_power]``."""
    k = np.arange(max_power + 1)
    return -((-r) ** (k + 1)) / (k + 1)


def _trim1(c: np.ndarray) -> np.ndarray:
    last = c.shape[0] - 1
    while last > 0 and not np.any(c[last]):
        last -= 1
    return c[: last + 1]


def _trim2(c: np.ndarray) -> np.ndarray:
    i = c.shape[0] - 1
    while i > 0 and not np.any(c[i]):
        i -= 1
    j = c.shape[1] - 1
    while j > 0 and not np.any(c[: i + 1, j]):
        j -= 1
    return c[: i + 1, : j + 1]


def _warn_outside(interval: Interval, *points):
    for p in points:
        if not interval.contains(p):
            warnings.warn(
                f"polynomial evaluated outside [-{interval.r}, 0]",
                OutOfIntervalWarning,
                stacklevel=3,
            )
            return


class PolyMat1:
    """Matrix polynomial ``sum_i C_i s**i`` on [-r, 0].

    Parameters
    ----------
    coeffs : array_like
        Sequence of ``rows x cols`` matrices (lowest degree first) or an
        array of shape ``(deg + 1, rows, cols)``.
    interval : Interval or float
        Delay interval (a bare float is read as ``r``).
    """

    __slots__ = ("coeffs", "interval")
    # let ``ndarray @ poly`` dispatch to __rmatmul__
    __array_ufunc__ = None

    def __init__(self, coeffs, interval):
        c = np.array(coeffs, dtype=float)
        if c.ndim == 2:
            c = c[None]
        if c.ndim != 3 or c.shape[0] == 0:
            raise ValueError(f"coefficients must have shape (deg+1, rows, cols), got {c.shape}")
        c = _trim1(c)
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "interval", _as_interval(interval))

    def __setattr__(self, name, value):
        raise AttributeError("PolyMat1 is immutable")

    # construction helpers
    @classmethod
    def constant(cls, mat, interval) -> "PolyMat1":
        return cls(np.atleast_2d(np.asarray(mat, dtype=float))[None], interval)

    @classmethod
    def zeros(cls, rows: int, cols: int, interval) -> "PolyMat1":
        return cls(np.zeros((1, rows, cols)), interval)

    @classmethod
    def identity(cls, n: int, interval) -> "PolyMat1":
        return cls(np.eye(n)[None], interval)

    # shape information
    @property
    def r(self) -> float:
        return self.interval.r

    @property
    def rows(self) -> int:
        return self.coeffs.shape[1]

    @property
    def cols(self) -> int:
        return self.coeffs.shape[2]

    @property
    def shape(self) -> tuple[int, int]:
        return self.coeffs.shape[1:]

    @property
    def degree(self) -> int:
        return self.coeffs.shape[0] - 1

    @property
    def is_constant(self) -> bool:
        return self.degree == 0

    def is_zero(self, tol: float = 0.0) -> bool:
        return bool(np.all(np.abs(self.coeffs) <= tol))

    def __repr__(self):
        return f"PolyMat1(shape={self.shape}, degree={self.degree}, r={self.r})"

    # evaluation
    def __call__(self, s, check: bool = True) -> np.ndarray:
        """Evaluate by Horner's rule. ``s`` may be a scalar or 1-D array."""
        s = np.asarray(s, dtype=float)
        if check:
            _warn_outside(self.interval, s)
        out = np.broadcast_to(self.coeffs[-1], s.shape + self.shape).copy()
        for c in self.coeffs[-2::-1]:
            out = out * s[..., None, None] + c
        return out

    # algebra
    def _check_interval(self, other):
        if abs(self.r - other.r) > 1e-14 * max(1.0, self.r):
            raise ValueError(f"interval mismatch: r={self.r} vs r={other.r}")

    def __add__(self, other):
        if not isinstance(other, PolyMat1):
            return NotImplemented
        self._check_interval(other)
        if self.shape != other.shape:
            raise ValueError(f"cannot add polynomials of shapes {self.shape} and {other.shape}")
        deg = max(self.degree, other.degree)
        c = np.zeros((deg + 1,) + self.shape)
        c[: self.degree + 1] += self.coeffs
        c[: other.degree + 1] += other.coeffs
        return PolyMat1(c, self.interval)

    def __neg__(self):
        return PolyMat1(-self.coeffs, self.interval)

    def __sub__(self, other):
        if not isinstance(other, PolyMat1):
            return NotImplemented
        return self + (-other)

    def __mul__(self, alpha):
        if isinstance(alpha, PolyMat1):
            return NotImplemented
        return PolyMat1(self.coeffs * float(alpha), self.interval)

    __rmul__ = __mul__

    def __matmul__(self, other):
        """Product in the same variable; constant matrices are accepted."""
        if isinstance(other, PolyMat1):
            self._check_interval(other)
            if self.cols != other.rows:
                raise ValueError(
                    f"cannot multiply {self.shape} by {other.shape} polynomial"
                )
            c = np.zeros((self.degree + other.degree + 1, self.rows, other.cols))
            for i, a in enumerate(self.coeffs):
                c[i : i + other.degree + 1] += np.einsum("ij,kjl->kil", a, other.coeffs)
            return PolyMat1(c, self.interval)
        other = np.asarray(other, dtype=float)
        if other.ndim != 2 or other.shape[0] != self.cols:
            raise ValueError(f"cannot multiply {self.shape} polynomial by matrix {other.shape}")
        return PolyMat1(self.coeffs @ other, self.interval)

    def __rmatmul__(self, other):
        other = np.asarray(other, dtype=float)
        if other.ndim != 2 or other.shape[1] != self.rows:
            raise ValueError(f"cannot multiply matrix {other.shape} by {self.shape} polynomial")
        return PolyMat1(np.einsum("ij,kjl->kil", other, self.coeffs), self.interval)

    @property
    def T(self) -> "PolyMat1":
        return PolyMat1(self.coeffs.transpose(0, 2, 1), self.interval)

    def outer(self, other: "PolyMat1") -> "PolyMat2":
        """``a(s) @ b(theta)`` as a polynomial in ``(s, theta)``."""
        self._check_interval(other)
        if self.cols != other.rows:
            raise ValueError(f"cannot pair {self.shape} with {other.shape}")
        c = np.einsum("iab,jbc->ijac", self.coeffs, other.coeffs)
        return PolyMat2(c, self.interval)

    def block(self, rows: slice, cols: slice) -> "PolyMat1":
        return PolyMat1(self.coeffs[:, rows, cols], self.interval)

    # calculus
    def deriv(self) -> "PolyMat1":
        if self.degree == 0:
            return PolyMat1.zeros(self.rows, self.cols, self.interval)
        k = np.arange(1, self.degree + 1)[:, None, None]
        return PolyMat1(self.coeffs[1:] * k, self.interval)

    def integral(self) -> np.ndarray:
        """``int_{-r}^0 p(s) ds``."""
        w = monomial_integrals(self.degree, self.r)
        return np.tensordot(w, self.coeffs, axes=1)

    def max_abs_coeff(self) -> float:
        return float(np.max(np.abs(self.coeffs)))

    # serialization
    def to_dict(self) -> dict:
        return {
            "rows": self.rows,
            "cols": self.cols,
            "var_count": 1,
            "r": self.r,
            "coeffs": self.coeffs.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


class PolyMat2:
    """Matrix polynomial ``sum_ij C_ij s**i theta**j`` on [-r, 0]^2."""

    __slots__ = ("coeffs", "interval")
    __array_ufunc__ = None

    def __init__(self, coeffs, interval):
        c = np.array(coeffs, dtype=float)
        if c.ndim == 2:
            c = c[None, None]
        if c.ndim != 4 or c.shape[0] == 0 or c.shape[1] == 0:
            raise ValueError(
                f"coefficients must have shape (ds+1, dtheta+1, rows, cols), got {c.shape}"
            )
        c = _trim2(c)
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "interval", _as_interval(interval))

    def __setattr__(self, name, value):
        raise AttributeError("PolyMat2 is immutable")

    @classmethod
    def zeros(cls, rows: int, cols: int, interval) -> "PolyMat2":
        return cls(np.zeros((1, 1, rows, cols)), interval)

    @property
    def r(self) -> float:
        return self.interval.r

    @property
    def rows(self) -> int:
        return self.coeffs.shape[2]

    @property
    def cols(self) -> int:
        return self.coeffs.shape[3]

    @property
    def shape(self) -> tuple[int, int]:
        return self.coeffs.shape[2:]

    @property
    def degree(self) -> tuple[int, int]:
        return self.coeffs.shape[0] - 1, self.coeffs.shape[1] - 1

    def is_zero(self, tol: float = 0.0) -> bool:
        return bool(np.all(np.abs(self.coeffs) <= tol))

    def __repr__(self):
        return f"PolyMat2(shape={self.shape}, degree={self.degree}, r={self.r})"

    def __call__(self, s, theta, check: bool = True) -> np.ndarray:
        """Evaluate at broadcastable ``s`` and ``theta``."""
        s = np.asarray(s, dtype=float)
        theta = np.asarray(theta, dtype=float)
        if check:
            _warn_outside(self.interval, s, theta)
        s, theta = np.broadcast_arrays(s, theta)
        ps = s[..., None] ** np.arange(self.coeffs.shape[0])
        pt = theta[..., None] ** np.arange(self.coeffs.shape[1])
        return np.einsum("...i,...j,ijab->...ab", ps, pt, self.coeffs)

    def at_s(self, s: float) -> PolyMat1:
        """Partial evaluation ``theta -> p(s, theta)``."""
        ps = float(s) ** np.arange(self.coeffs.shape[0])
        return PolyMat1(np.tensordot(ps, self.coeffs, axes=1), self.interval)

    def at_theta(self, theta: float) -> PolyMat1:
        """Partial evaluation ``s -> p(s, theta)``."""
        pt = float(theta) ** np.arange(self.coeffs.shape[1])
        return PolyMat1(np.einsum("j,ijab->iab", pt, self.coeffs), self.interval)

    def _check_interval(self, other):
        if abs(self.r - other.r) > 1e-14 * max(1.0, self.r):
            raise ValueError(f"interval mismatch: r={self.r} vs r={other.r}")

    def __add__(self, other):
        if not isinstance(other, PolyMat2):
            return NotImplemented
        self._check_interval(other)
        if self.shape != other.shape:
            raise ValueError(f"cannot add polynomials of shapes {self.shape} and {other.shape}")
        di = max(self.coeffs.shape[0], other.coeffs.shape[0])
        dj = max(self.coeffs.shape[1], other.coeffs.shape[1])
        c = np.zeros((di, dj) + self.shape)
        c[: self.coeffs.shape[0], : self.coeffs.shape[1]] += self.coeffs
        c[: other.coeffs.shape[0], : other.coeffs.shape[1]] += other.coeffs
        return PolyMat2(c, self.interval)

    def __neg__(self):
        return PolyMat2(-self.coeffs, self.interval)

    def __sub__(self, other):
        if not isinstance(other, PolyMat2):
            return NotImplemented
        return self + (-other)

    def __mul__(self, alpha):
        if isinstance(alpha, (PolyMat1, PolyMat2)):
            return NotImplemented
        return PolyMat2(self.coeffs * float(alpha), self.interval)

    __rmul__ = __mul__

    def __matmul__(self, other):
        other = np.asarray(other, dtype=float)
        if other.ndim != 2 or other.shape[0] != self.cols:
            raise ValueError(f"cannot multiply {self.shape} polynomial by matrix {other.shape}")
        return PolyMat2(self.coeffs @ other, self.interval)

    def __rmatmul__(self, other):
        other = np.asarray(other, dtype=float)
        if other.ndim != 2 or other.shape[1] != self.rows:
            raise ValueError(f"cannot multiply matrix {other.shape} by {self.shape} polynomial")
        return PolyMat2(np.einsum("ab,ijbc->ijac", other, self.coeffs), self.interval)

    @property
    def T(self) -> "PolyMat2":
        """Entrywise transpose, variables unchanged."""
        return PolyMat2(self.coeffs.transpose(0, 1, 3, 2), self.interval)

    def swap(self) -> "PolyMat2":
        """``(s, theta) -> p(theta, s)``."""
        return PolyMat2(self.coeffs.transpose(1, 0, 2, 3), self.interval)

    def adjoint(self) -> "PolyMat2":
        """``(s, theta) -> p(theta, s)^T``; a symmetric kernel is a fixed point."""
        return PolyMat2(self.coeffs.transpose(1, 0, 3, 2), self.interval)

    def deriv_s(self) -> "PolyMat2":
        if self.coeffs.shape[0] == 1:
            return PolyMat2.zeros(self.rows, self.cols, self.interval)
        k = np.arange(1, self.coeffs.shape[0])[:, None, None, None]
        return PolyMat2(self.coeffs[1:] * k, self.interval)

    def deriv_theta(self) -> "PolyMat2":
        if self.coeffs.shape[1] == 1:
            return PolyMat2.zeros(self.rows, self.cols, self.interval)
        k = np.arange(1, self.coeffs.shape[1])[None, :, None, None]
        return PolyMat2(self.coeffs[:, 1:] * k, self.interval)

    def integrate_s(self) -> PolyMat1:
        """``theta -> int p(s, theta) ds``."""
        w = monomial_integrals(self.coeffs.shape[0] - 1, self.r)
        return PolyMat1(np.tensordot(w, self.coeffs, axes=1), self.interval)

    def integrate_theta(self) -> PolyMat1:
        """``s -> int p(s, theta) dtheta``."""
        w = monomial_integrals(self.coeffs.shape[1] - 1, self.r)
        return PolyMat1(np.einsum("j,ijab->iab", w, self.coeffs), self.interval)

    def integral(self) -> np.ndarray:
        ws = monomial_integrals(self.coeffs.shape[0] - 1, self.r)
        wt = monomial_integrals(self.coeffs.shape[1] - 1, self.r)
        return np.einsum("i,j,ijab->ab", ws, wt, self.coeffs)

    def apply(self, phi: PolyMat1) -> PolyMat1:
        """``s -> int p(s, theta) phi(theta) dtheta`` for a polynomial ``phi``."""
        self._check_interval(phi)
        if phi.rows != self.cols:
            raise ValueError(f"cannot apply {self.shape} kernel to {phi.shape} function")
        dj = self.coeffs.shape[1] - 1
        mom = monomial_integrals(dj + phi.degree, self.r)
        # moments[j] = int theta**j phi(theta) dtheta
        moments = np.stack(
            [np.tensordot(mom[j : j + phi.degree + 1], phi.coeffs, axes=1) for j in range(dj + 1)]
        )
        return PolyMat1(np.einsum("ijab,jbc->iac", self.coeffs, moments), self.interval)

    def max_abs_coeff(self) -> float:
        return float(np.max(np.abs(self.coeffs)))

    def to_dict(self) -> dict:
        return {
            "rows": self.rows,
            "cols": self.cols,
            "var_count": 2,
            "r": self.r,
            "coeffs": self.coeffs.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def poly_from_json(data) -> PolyMat1 | PolyMat2:
    """Inverse of ``to_dict``/``to_json``; accepts a dict or a JSON string."""
    if isinstance(data, str):
        data = json.loads(data)
    rows, cols = int(data["rows"]), int(data["cols"])
    r = data.get("r")
    if r is None:
        raise ValueError("polynomial JSON needs the delay 'r'")
    c = np.asarray(data["coeffs"], dtype=float)
    if data["var_count"] == 1:
        c = c.reshape(-1, rows, cols)
        return PolyMat1(c, r)
    if data["var_count"] == 2:
        if c.ndim != 4:
            raise ValueError("bivariate coefficients must be a 2-D grid of matrices")
        return PolyMat2(c.reshape(c.shape[0], c.shape[1], rows, cols), r)
    raise ValueError(f"var_count must be 1 or 2, got {data['var_count']!r}")


def monomial_basis(degree: int, block_dim: int, interval) -> PolyMat1:
    """``(1, s, ..., s**degree)^T kron I_block_dim``.

    The result has shape ``((degree + 1) * block_dim, block_dim)``.
    """
    if degree < 0 or block_dim < 1:
        raise ValueError("need degree >= 0 and block_dim >= 1")
    q = (degree + 1) * block_dim
    c = np.zeros((degree + 1, q, block_dim))
    for k in range(degree + 1):
        c[k, k * block_dim : (k + 1) * block_dim, :] = np.eye(block_dim)
    return PolyMat1(c, interval)


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes and positive weights on [-r, 0], exact up to ``order``."""

    nodes: np.ndarray
    weights: np.ndarray
    order: int
    interval: Interval

    def __post_init__(self):
        if len(self.nodes) != len(self.weights):
            raise ValueError("node and weight counts differ")

    @property
    def r(self) -> float:
        return self.interval.r

    def __len__(self):
        return len(self.nodes)

    def integrate(self, values: np.ndarray) -> np.ndarray:
        """Contract the leading (node) axis of ``values`` with the weights."""
        return np.tensordot(self.weights, values, axes=1)


@lru_cache(maxsize=64)
def _leggauss(n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gauss_rule(n_nodes: int, interval) -> QuadratureRule:
    """Gauss-Legendre rule mapped to [-r, 0]; exact to degree ``2 n - 1``."""
    if n_nodes < 1:
        raise ValueError("n_nodes must be >= 1")
    interval = _as_interval(interval)
    x, w = _leggauss(int(n_nodes))
    r = interval.r
    nodes = 0.5 * r * (x - 1.0)
    weights = 0.5 * r * w
    return QuadratureRule(nodes, weights, 2 * n_nodes - 1, interval)


def composite_gauss_rule(breakpoints, n_per_cell: int, interval) -> QuadratureRule:
    """Gauss rule on every cell between consecutive ``breakpoints``.

    Exact to degree ``2 n_per_cell - 1`` for integrands that are polynomial
    on each cell (piecewise-linear interpolants times polynomial kernels).
    """
    interval = _as_interval(interval)
    b = np.asarray(breakpoints, dtype=float)
    x, w = _leggauss(int(n_per_cell))
    a, c = b[:-1, None], b[1:, None]
    half = 0.5 * (c - a)
    nodes = (a + half * (x + 1.0)).ravel()
    weights = (half * w).ravel()
    return QuadratureRule(nodes, weights, 2 * n_per_cell - 1, interval)


def poly_eval(p, point) -> np.ndarray:
    """Evaluate a ``PolyMat1`` at ``s`` or a ``PolyMat2`` at ``(s, theta)``."""
    if isinstance(p, PolyMat2):
        s, theta = point
        return p(s, theta)
    return p(point)


def poly_calculus(p, op: str):
    """Exact calculus on coefficients.

    ``op`` is one of ``differentiate_s``, ``differentiate_theta``,
    ``integrate_full`` or ``integrate_var`` (the latter integrates theta out
    of a ``PolyMat2``; pass ``integrate_var_s`` to integrate ``s`` instead).
    """
    if op == "differentiate_s":
        return p.deriv_s() if isinstance(p, PolyMat2) else p.deriv()
    if op == "differentiate_theta":
        if not isinstance(p, PolyMat2):
            raise TypeError("differentiate_theta needs a bivariate polynomial")
        return p.deriv_theta()
    if op == "integrate_full":
        return p.integral()
    if op in ("integrate_var", "integrate_var_theta"):
        if not isinstance(p, PolyMat2):
            raise TypeError("integrate_var needs a bivariate polynomial")
        return p.integrate_theta()
    if op == "integrate_var_s":
        if not isinstance(p, PolyMat2):
            raise TypeError("integrate_var needs a bivariate polynomial")
        return p.integrate_s()
    raise ValueError(f"unknown calculus op {op!r}")


def poly_algebra(a, b=None, op: str = "add"):
    """Exact polynomial algebra: ``add``, ``multiply``, ``outer``, ``transpose``, ``scale``.

    ``multiply`` of two ``PolyMat1`` is the product in one variable;
    ``outer`` pairs ``a(s)`` with ``b(theta)`` into a ``PolyMat2``.
    For ``scale`` the second argument is the scalar.
    """
    if op == "add":
        return a + b
    if op == "multiply":
        return a @ b
    if op == "outer":
        return a.outer(b)
    if op == "transpose":
        return a.T
    if op == "scale":
        return a * b
    raise ValueError(f"unknown algebra op {op!r}")
