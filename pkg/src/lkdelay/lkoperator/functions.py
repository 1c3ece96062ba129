"""Elements of Z = R^n x PC(r, m).

The function part ``phi`` comes in three representations:

``poly``
    exact ``PolyMat1`` column (m x 1);
``samples``
    values on a grid, linearly interpolated;
``pointwise``
    any callable, e.g. the rational functions produced by an inverse
    operator with non-constant ``S``.  ``breakpoints`` records where the
    function may be non-smooth so integrals can be split there.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from ..polyalg import (
    Interval,
    PolyMat1,
    QuadratureRule,
    composite_gauss_rule,
    gauss_rule,
    monomial_integrals,
)

__all__ = [
    "PolyFunction",
    "SampledFunction",
    "PointwiseFunction",
    "StateFunction",
    "integration_rule",
    "as_function",
]

# nodes per cell for non-polynomial pieces between breakpoints
_ROUGH_NODES_PER_CELL = 8


class _Function:
    repr_tag = ""
    breakpoints = None
    piece_degree: int | None = None

    def __add__(self, other):
        return _combine(self, other, 1.0, 1.0)

    def __sub__(self, other):
        return _combine(self, other, 1.0, -1.0)

    def __mul__(self, alpha):
        return _combine(self, self, float(alpha), 0.0)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def moments(self, max_power: int, quad: QuadratureRule | None = None) -> np.ndarray:
        """``[int theta**j phi(theta) dtheta for j in 0..max_power]``, shape (J+1, m)."""
        rule = integration_rule([self], quad or gauss_rule(20, self.interval), max_power)
        vals = self(rule.nodes)
        powers = rule.nodes[None, :] ** np.arange(max_power + 1)[:, None]
        return np.einsum("jk,k,km->jm", powers, rule.weights, vals)


class PolyFunction(_Function):
    """Polynomial ``phi`` stored as an ``m x 1`` ``PolyMat1``."""

    repr_tag = "poly"

    def __init__(self, poly: PolyMat1):
        if poly.cols != 1:
            raise ValueError(f"phi must be a column polynomial, got shape {poly.shape}")
        self.poly = poly

    @classmethod
    def from_coeffs(cls, coeffs, interval) -> "PolyFunction":
        """``coeffs`` has shape (deg+1, m): row k multiplies ``s**k``."""
        c = np.atleast_2d(np.asarray(coeffs, dtype=float))
        return cls(PolyMat1(c[:, :, None], interval))

    @property
    def interval(self) -> Interval:
        return self.poly.interval

    @property
    def dim(self) -> int:
        return self.poly.rows

    @property
    def piece_degree(self) -> int:
        return self.poly.degree

    def __call__(self, s) -> np.ndarray:
        return self.poly(s, check=False)[..., 0]

    def moments(self, max_power: int, quad=None) -> np.ndarray:
        c = self.poly.coeffs[:, :, 0]
        w = monomial_integrals(max_power + self.poly.degree, self.poly.r)
        return np.stack([w[j : j + c.shape[0]] @ c for j in range(max_power + 1)])


class SampledFunction(_Function):
    """Samples on an increasing grid covering [-r, 0], linearly interpolated."""

    repr_tag = "samples"
    piece_degree = 1

    def __init__(self, grid, values, interval):
        self.interval = interval if isinstance(interval, Interval) else Interval(interval)
        grid = np.asarray(grid, dtype=float)
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if grid.ndim != 1 or len(grid) < 2 or values.shape[0] != len(grid):
            raise ValueError("grid must be 1-D with one value row per grid point")
        if np.any(np.diff(grid) <= 0):
            raise ValueError("grid must be strictly increasing")
        r = self.interval.r
        if abs(grid[0] + r) > 1e-12 * r or abs(grid[-1]) > 1e-12 * r:
            raise ValueError("grid must span [-r, 0]")
        self.grid = grid
        self.values = values
        self.breakpoints = grid

    @classmethod
    def uniform(cls, fn, interval, points: int = 201) -> "SampledFunction":
        interval = interval if isinstance(interval, Interval) else Interval(interval)
        grid = np.linspace(-interval.r, 0.0, points)
        vals = np.asarray(fn(grid), dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        return cls(grid, vals, interval)

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def __call__(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        flat = np.atleast_1d(s).ravel()
        idx = np.clip(np.searchsorted(self.grid, flat, side="right") - 1, 0, len(self.grid) - 2)
        g0, g1 = self.grid[idx], self.grid[idx + 1]
        t = ((flat - g0) / (g1 - g0))[:, None]
        out = (1 - t) * self.values[idx] + t * self.values[idx + 1]
        return out.reshape(s.shape + (self.dim,))


class PointwiseFunction(_Function):
    """A function known only through evaluation."""

    repr_tag = "pointwise"

    def __init__(self, fn, dim: int, interval, breakpoints=None, piece_degree=None):
        self._fn = fn
        self.dim = int(dim)
        self.interval = interval if isinstance(interval, Interval) else Interval(interval)
        self.breakpoints = None if breakpoints is None else np.asarray(breakpoints, dtype=float)
        self.piece_degree = piece_degree

    def __call__(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        out = np.asarray(self._fn(np.atleast_1d(s).ravel()), dtype=float)
        return out.reshape(s.shape + (self.dim,))


def as_function(phi, interval=None):
    if isinstance(phi, _Function):
        return phi
    if isinstance(phi, PolyMat1):
        return PolyFunction(phi)
    if callable(phi):
        if interval is None:
            raise ValueError("a bare callable needs an interval")
        probe = np.asarray(phi(np.array([0.0])), dtype=float)
        return PointwiseFunction(phi, probe.reshape(1, -1).shape[1], interval)
    raise TypeError(f"cannot interpret {type(phi).__name__} as a function on [-r, 0]")


def _merge_breakpoints(*funcs):
    bps = [f.breakpoints for f in funcs if f.breakpoints is not None]
    if not bps:
        return None
    return np.unique(np.concatenate(bps))


def _combine(f, g, a: float, b: float):
    if f.dim != g.dim:
        raise ValueError(f"function dimensions differ: {f.dim} vs {g.dim}")
    if isinstance(f, PolyFunction) and isinstance(g, PolyFunction):
        return PolyFunction(f.poly * a + g.poly * b)
    if (
        isinstance(f, SampledFunction)
        and isinstance(g, SampledFunction)
        and f.grid.shape == g.grid.shape
        and np.array_equal(f.grid, g.grid)
    ):
        return SampledFunction(f.grid, a * f.values + b * g.values, f.interval)
    degs = [f.piece_degree, g.piece_degree]
    deg = None if None in degs else max(degs)
    return PointwiseFunction(
        lambda s: a * f(s) + b * g(s), f.dim, f.interval, _merge_breakpoints(f, g), deg
    )


def integration_rule(funcs, quad: QuadratureRule, kernel_degree: int | None = 0) -> QuadratureRule:
    """Choose nodes that integrate ``kernel * prod(funcs)`` accurately.

    Without breakpoints the supplied rule is used, enlarged when all pieces
    are polynomial and it would not be exact.  With breakpoints a composite
    Gauss rule is built on the merged cells.  ``kernel_degree=None`` marks a
    non-polynomial (rational) kernel.
    """
    degs = [f.piece_degree for f in funcs]
    if kernel_degree is None or None in degs:
        exact_deg = None
    else:
        exact_deg = kernel_degree + sum(degs)
    bps = _merge_breakpoints(*funcs)
    if bps is None:
        if exact_deg is not None and exact_deg > quad.order:
            return gauss_rule(exact_deg // 2 + 1, quad.interval)
        return quad
    r = quad.interval.r
    bps = np.unique(np.concatenate([[-r, 0.0], np.clip(bps, -r, 0.0)]))
    n = _ROUGH_NODES_PER_CELL if exact_deg is None else exact_deg // 2 + 1
    return composite_gauss_rule(bps, max(n, 1), quad.interval)


@dataclass(frozen=True)
class StateFunction:
    """An element ``(psi, phi)`` of Z."""

    psi: np.ndarray
    phi: _Function

    def __post_init__(self):
        psi = np.atleast_1d(np.asarray(self.psi, dtype=float))
        if psi.ndim != 1:
            raise ValueError("psi must be a vector")
        object.__setattr__(self, "psi", psi)
        object.__setattr__(self, "phi", as_function(self.phi))

    @classmethod
    def from_poly(cls, psi, coeffs, interval) -> "StateFunction":
        return cls(psi, PolyFunction.from_coeffs(coeffs, interval))

    @property
    def n(self) -> int:
        return self.psi.shape[0]

    @property
    def m(self) -> int:
        return self.phi.dim

    @property
    def interval(self) -> Interval:
        return self.phi.interval

    @property
    def repr_tag(self) -> str:
        return self.phi.repr_tag

    def __add__(self, other: "StateFunction") -> "StateFunction":
        return StateFunction(self.psi + other.psi, self.phi + other.phi)

    def __sub__(self, other: "StateFunction") -> "StateFunction":
        return StateFunction(self.psi - other.psi, self.phi - other.phi)

    def __mul__(self, alpha: float) -> "StateFunction":
        return StateFunction(self.psi * alpha, self.phi * alpha)

    __rmul__ = __mul__

    def sampled(self, points: int = 201) -> "StateFunction":
        return StateFunction(self.psi, SampledFunction.uniform(self.phi, self.interval, points))

    def to_csv(self, points: int = 201) -> str:
        """Grid samples of ``phi`` (columns ``s, phi_1..phi_m``); ``psi`` in a header row."""
        grid = np.linspace(-self.interval.r, 0.0, points)
        vals = self.phi(grid)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["# psi"] + [f"{v:.17g}" for v in self.psi])
        w.writerow(["s"] + [f"phi_{i + 1}" for i in range(self.m)])
        for s, row in zip(grid, vals):
            w.writerow([f"{s:.17g}"] + [f"{v:.17g}" for v in row])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, interval) -> "StateFunction":
        rows = list(csv.reader(io.StringIO(text)))
        psi = [float(v) for v in rows[0][1:]]
        data = np.array([[float(v) for v in row] for row in rows[2:] if row])
        return cls(psi, SampledFunction(data[:, 0], data[:, 1:], interval))
