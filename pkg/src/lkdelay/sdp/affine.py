"""Dense affine expressions in the decision variables of an SDP.

An ``Affine`` holds ``const + sum_i x_i * lin[i]``; the variable axis is
first so constant matrix products broadcast over it.  Expressions built at
different times may carry different variable counts; missing trailing
variables are implicitly zero.

``AffinePoly1`` / ``AffinePoly2`` are polynomial matrices (same coefficient
layout as ``PolyMat1`` / ``PolyMat2``) whose coefficients are affine.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from ..polyalg import Interval, PolyMat1, PolyMat2

__all__ = ["Affine", "AffinePoly1", "AffinePoly2", "as_affine", "stack"]


def _span(lin: np.ndarray, offset: int, lo: int, hi: int) -> np.ndarray:
    """Re-index ``lin`` (covering ``[offset, offset+len)``) onto ``[lo, hi)``."""
    if offset == lo and lin.shape[0] == hi - lo:
        return lin
    out = np.zeros((hi - lo,) + lin.shape[1:])
    out[offset - lo : offset - lo + lin.shape[0]] = lin
    return out


class Affine:
    """Array-valued affine expression.

    ``lin[i]`` multiplies variable ``offset + i``; variables outside
    ``[offset, offset + len(lin))`` do not appear.
    """

    __slots__ = ("const", "lin", "offset")
    __array_ufunc__ = None

    def __init__(self, const, lin=None, offset: int = 0):
        const = np.asarray(const, dtype=float)
        if lin is None:
            lin = np.zeros((0,) + const.shape)
        lin = np.asarray(lin, dtype=float)
        if lin.shape[1:] != const.shape:
            raise ValueError(f"linear part shape {lin.shape} does not match constant {const.shape}")
        self.const = const
        self.lin = lin
        self.offset = int(offset) if lin.shape[0] else 0

    @property
    def shape(self) -> tuple:
        return self.const.shape

    @property
    def nvar(self) -> int:
        """One past the highest variable index referenced."""
        return self.offset + self.lin.shape[0]

    @property
    def ndim(self) -> int:
        return self.const.ndim

    def __repr__(self):
        return f"Affine(shape={self.shape}, vars=[{self.offset}, {self.nvar}))"

    def _like(self, const, lin) -> "Affine":
        return Affine(const, lin, self.offset)

    def _binary(self, other, sign: float) -> "Affine":
        other = as_affine(other)
        if other.lin.shape[0] == 0:
            return self._like(self.const + sign * other.const, self.lin)
        if self.lin.shape[0] == 0:
            return Affine(self.const + sign * other.const, sign * other.lin, other.offset)
        lo = min(self.offset, other.offset)
        hi = max(self.nvar, other.nvar)
        lin = _span(self.lin, self.offset, lo, hi) + sign * _span(other.lin, other.offset, lo, hi)
        return Affine(self.const + sign * other.const, lin, lo)

    def __add__(self, other):
        return self._binary(other, 1.0)

    def __radd__(self, other):
        return self._binary(other, 1.0)

    def __sub__(self, other):
        return self._binary(other, -1.0)

    def __rsub__(self, other):
        return (-self)._binary(other, 1.0)

    def __neg__(self):
        return self._like(-self.const, -self.lin)

    def __mul__(self, alpha):
        alpha = float(alpha)
        return self._like(alpha * self.const, alpha * self.lin)

    __rmul__ = __mul__

    def __matmul__(self, other):
        other = np.asarray(other, dtype=float)
        return self._like(self.const @ other, self.lin @ other)

    def __rmatmul__(self, other):
        other = np.asarray(other, dtype=float)
        return self._like(other @ self.const, other @ self.lin)

    @property
    def T(self) -> "Affine":
        return self._like(np.swapaxes(self.const, -1, -2), np.swapaxes(self.lin, -1, -2))

    def __getitem__(self, idx) -> "Affine":
        if not isinstance(idx, tuple):
            idx = (idx,)
        return self._like(self.const[idx], self.lin[(slice(None),) + idx])

    def reshape(self, *shape) -> "Affine":
        const = self.const.reshape(*shape)
        return self._like(const, self.lin.reshape((self.lin.shape[0],) + const.shape))

    def sum(self, axis: int) -> "Affine":
        ax = axis if axis < 0 else axis + 1
        return self._like(self.const.sum(axis=axis), self.lin.sum(axis=ax))

    def tensordot(self, weights, axis: int = 0) -> "Affine":
        """Contract axis ``axis`` (of the expression shape) with ``weights``."""
        w = np.asarray(weights, dtype=float)
        c = np.moveaxis(self.const, axis, 0)
        lin = np.moveaxis(self.lin, axis + 1, 1)
        return self._like(np.einsum("k,k...->...", w, c), np.einsum("k,vk...->v...", w, lin))

    def value(self, x) -> np.ndarray:
        if self.lin.shape[0] == 0:
            return self.const.copy()
        x = np.asarray(x, dtype=float)[self.offset : self.nvar]
        return self.const + np.tensordot(x, self.lin, axes=(0, 0))

    def rows(self, nvar: int):
        """Flattened ``(A, b)`` with ``expr = A x + b``; ``A`` is sparse with ``nvar`` columns."""
        size = self.const.size
        flat = self.lin.reshape(self.lin.shape[0], size)
        # drop round-off left by cancellation
        cut = 1e-14 * float(np.max(np.abs(flat), initial=0.0))
        v, k = np.nonzero(np.abs(flat) > cut)
        A = sp.csr_matrix((flat[v, k], (k, v + self.offset)), shape=(size, nvar))
        return A, self.const.ravel().copy()

    def is_constant(self) -> bool:
        return not np.any(self.lin)


def as_affine(x) -> Affine:
    if isinstance(x, Affine):
        return x
    if isinstance(x, (AffinePoly1, AffinePoly2, PolyMat1, PolyMat2)):
        raise TypeError("polynomial operands must be combined at the polynomial level")
    return Affine(np.asarray(x, dtype=float))


def stack(exprs, axis: int = 0) -> Affine:
    """``np.stack`` for affine expressions."""
    exprs = [as_affine(e) for e in exprs]
    used = [e for e in exprs if e.lin.shape[0]]
    const = np.stack([e.const for e in exprs], axis=axis)
    if not used:
        return Affine(const)
    lo = min(e.offset for e in used)
    hi = max(e.nvar for e in used)
    lins = [_span(e.lin, e.offset, lo, hi) if e.lin.shape[0] else np.zeros((hi - lo,) + e.shape) for e in exprs]
    ax = axis if axis < 0 else axis + 1
    return Affine(const, np.stack(lins, axis=ax), lo)


def _pad_deg(a: Affine, degs: tuple) -> Affine:
    """Zero-pad leading polynomial axes up to ``degs`` (degree per axis)."""
    extra = [(0, d + 1 - s) for d, s in zip(degs, a.shape[: len(degs)])]
    if all(e[1] == 0 for e in extra):
        return a
    rest = [(0, 0)] * (a.ndim - len(degs))
    return Affine(np.pad(a.const, extra + rest), np.pad(a.lin, [(0, 0)] + extra + rest), a.offset)


def _interval(interval) -> Interval:
    return interval if isinstance(interval, Interval) else Interval(interval)


class AffinePoly1:
    """``sum_k s**k coef[k]`` with ``coef`` an ``Affine`` of shape (D+1, rows, cols)."""

    __array_ufunc__ = None

    def __init__(self, coef: Affine, interval):
        if coef.ndim != 3:
            raise ValueError("coefficient expression must have shape (deg+1, rows, cols)")
        self.coef = coef
        self.interval = _interval(interval)

    @classmethod
    def lift(cls, x, interval) -> "AffinePoly1":
        """Promote a constant matrix, ``Affine`` matrix or ``PolyMat1``."""
        if isinstance(x, AffinePoly1):
            return x
        if isinstance(x, PolyMat1):
            return cls(Affine(x.coeffs), interval)
        a = as_affine(x)
        if a.ndim != 2:
            raise ValueError("expected a matrix")
        return cls(a.reshape((1,) + a.shape), interval)

    @property
    def degree(self) -> int:
        return self.coef.shape[0] - 1

    @property
    def rows(self) -> int:
        return self.coef.shape[1]

    @property
    def cols(self) -> int:
        return self.coef.shape[2]

    @property
    def shape(self) -> tuple:
        return self.coef.shape[1:]

    @property
    def r(self) -> float:
        return self.interval.r

    def __repr__(self):
        return f"AffinePoly1(shape={self.shape}, degree={self.degree}, nvar={self.coef.nvar})"

    def __call__(self, s: float) -> Affine:
        powers = float(s) ** np.arange(self.degree + 1)
        return self.coef.tensordot(powers, 0)

    def _binary(self, other, sign: float) -> "AffinePoly1":
        other = AffinePoly1.lift(other, self.interval)
        deg = max(self.degree, other.degree)
        a, b = _pad_deg(self.coef, (deg,)), _pad_deg(other.coef, (deg,))
        return AffinePoly1(a + b * sign, self.interval)

    def __add__(self, other):
        return self._binary(other, 1.0)

    __radd__ = __add__

    def __sub__(self, other):
        return self._binary(other, -1.0)

    def __rsub__(self, other):
        return (-self)._binary(other, 1.0)

    def __neg__(self):
        return AffinePoly1(-self.coef, self.interval)

    def __mul__(self, alpha):
        return AffinePoly1(self.coef * alpha, self.interval)

    __rmul__ = __mul__

    def __matmul__(self, other):
        return AffinePoly1(self.coef @ np.asarray(other, dtype=float), self.interval)

    def __rmatmul__(self, other):
        return AffinePoly1(np.asarray(other, dtype=float) @ self.coef, self.interval)

    @property
    def T(self) -> "AffinePoly1":
        return AffinePoly1(self.coef.T, self.interval)

    def deriv(self) -> "AffinePoly1":
        if self.degree == 0:
            return AffinePoly1(self.coef * 0.0, self.interval)
        k = np.arange(1, self.degree + 1, dtype=float)
        c = self.coef[1:]
        return AffinePoly1(Affine(c.const * k[:, None, None], c.lin * k[None, :, None, None], c.offset), self.interval)

    def integral(self) -> Affine:
        from ..polyalg import monomial_integrals

        return self.coef.tensordot(monomial_integrals(self.degree, self.r), 0)

    def value(self, x) -> PolyMat1:
        return PolyMat1(self.coef.value(x), self.interval)

    @staticmethod
    def block(rows, interval) -> "AffinePoly1":
        """Assemble a block matrix from a nested list of polynomial-like entries."""
        lifted = [[AffinePoly1.lift(e, interval) for e in row] for row in rows]
        deg = max(e.degree for row in lifted for e in row)
        used = [e.coef for row in lifted for e in row if e.coef.lin.shape[0]]
        lo = min((c.offset for c in used), default=0)
        hi = max((c.nvar for c in used), default=0)
        heights = [row[0].rows for row in lifted]
        widths = [e.cols for e in lifted[0]]
        const = np.zeros((deg + 1, sum(heights), sum(widths)))
        lin = np.zeros((hi - lo,) + const.shape)
        r0 = 0
        for row, h in zip(lifted, heights):
            c0 = 0
            for e, w in zip(row, widths):
                if e.rows != h or e.cols != w:
                    raise ValueError("inconsistent block sizes")
                D = e.degree + 1
                const[:D, r0 : r0 + h, c0 : c0 + w] = e.coef.const
                c = e.coef
                lin[c.offset - lo : c.nvar - lo, :D, r0 : r0 + h, c0 : c0 + w] = c.lin
                c0 += w
            r0 += h
        return AffinePoly1(Affine(const, lin, lo), interval)


class AffinePoly2:
    """``sum_ij s**i theta**j coef[i, j]`` with affine coefficients."""

    __array_ufunc__ = None

    def __init__(self, coef: Affine, interval):
        if coef.ndim != 4:
            raise ValueError("coefficient expression must have shape (ds+1, dt+1, rows, cols)")
        self.coef = coef
        self.interval = _interval(interval)

    @classmethod
    def lift(cls, x, interval) -> "AffinePoly2":
        if isinstance(x, AffinePoly2):
            return x
        if isinstance(x, PolyMat2):
            return cls(Affine(x.coeffs), interval)
        a = as_affine(x)
        return cls(a.reshape((1, 1) + a.shape), interval)

    @property
    def degree(self) -> tuple:
        return (self.coef.shape[0] - 1, self.coef.shape[1] - 1)

    @property
    def shape(self) -> tuple:
        return self.coef.shape[2:]

    @property
    def r(self) -> float:
        return self.interval.r

    def __repr__(self):
        return f"AffinePoly2(shape={self.shape}, degree={self.degree}, nvar={self.coef.nvar})"

    def at_s(self, s: float) -> AffinePoly1:
        """Fix ``s``; result is a polynomial in ``theta``."""
        powers = float(s) ** np.arange(self.degree[0] + 1)
        return AffinePoly1(self.coef.tensordot(powers, 0), self.interval)

    def at_theta(self, theta: float) -> AffinePoly1:
        powers = float(theta) ** np.arange(self.degree[1] + 1)
        return AffinePoly1(self.coef.tensordot(powers, 1), self.interval)

    def _binary(self, other, sign: float) -> "AffinePoly2":
        other = AffinePoly2.lift(other, self.interval)
        deg = tuple(max(a, b) for a, b in zip(self.degree, other.degree))
        return AffinePoly2(_pad_deg(self.coef, deg) + _pad_deg(other.coef, deg) * sign, self.interval)

    def __add__(self, other):
        return self._binary(other, 1.0)

    __radd__ = __add__

    def __sub__(self, other):
        return self._binary(other, -1.0)

    def __neg__(self):
        return AffinePoly2(-self.coef, self.interval)

    def __mul__(self, alpha):
        return AffinePoly2(self.coef * alpha, self.interval)

    __rmul__ = __mul__

    def __matmul__(self, other):
        return AffinePoly2(self.coef @ np.asarray(other, dtype=float), self.interval)

    def __rmatmul__(self, other):
        return AffinePoly2(np.asarray(other, dtype=float) @ self.coef, self.interval)

    @property
    def T(self) -> "AffinePoly2":
        return AffinePoly2(self.coef.T, self.interval)

    def swap(self) -> "AffinePoly2":
        c = self.coef
        return AffinePoly2(Affine(np.swapaxes(c.const, 0, 1), np.swapaxes(c.lin, 1, 2), c.offset), self.interval)

    def adjoint(self) -> "AffinePoly2":
        """``(s, theta) -> N(theta, s)^T``."""
        return self.swap().T

    def _deriv(self, axis: int) -> "AffinePoly2":
        c = self.coef
        D = c.shape[axis]
        if D == 1:
            return AffinePoly2(c * 0.0, self.interval)
        k = np.arange(1, D, dtype=float)
        idx = [slice(None)] * 4
        idx[axis] = slice(1, None)
        sub = c[tuple(idx)]
        shape = [1] * 4
        shape[axis] = D - 1
        k = k.reshape(shape)
        return AffinePoly2(Affine(sub.const * k, sub.lin * k[None], sub.offset), self.interval)

    def deriv_s(self) -> "AffinePoly2":
        return self._deriv(0)

    def deriv_theta(self) -> "AffinePoly2":
        return self._deriv(1)

    def value(self, x) -> PolyMat2:
        return PolyMat2(self.coef.value(x), self.interval)
