"""Fixed-step simulation of coupled differential-difference systems.

    x'(t) = A x(t) + B y(t - r) + int H(s) y(t + s) ds + F u(t)
    y(t)  = C x(t) + D y(t - r)

with optional state feedback
``u(t) = K0 x(t) + K1 y(t - r) + int K2(s) y(t + s) ds``.

The step is ``dt = r / N``, so delayed samples sit on stored grid nodes.  The
ODE part uses classical RK4; half-step delayed values are linear
interpolations and the newest history value inside a stage is
``C x_stage + D y(stage - r)``.  Distributed integrals use the composite
trapezoid rule on the history grid.  Stored ``y`` satisfies the difference
equation exactly at every grid time.
"""

from __future__ import annotations

import csv
import io
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import NonFiniteState
from .polyalg import Interval, PolyMat1, composite_gauss_rule

__all__ = [
    "PlantModel",
    "History",
    "Trajectory",
    "simulate",
    "steps_per_delay",
    "evaluate_V_along",
    "lyapunov_form_matrix",
    "spectral_radius",
    "decay_ratio",
    "gnuplot_script",
]

log = logging.getLogger(__name__)

_BLOWUP = 1e150


def spectral_radius(D) -> float:
    """Largest eigenvalue modulus of a square matrix (0 for an empty one)."""
    D = np.atleast_2d(np.asarray(D, dtype=float))
    if D.shape[0] != D.shape[1]:
        raise ValueError(f"D must be square, got {D.shape}")
    if D.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(D))))


@dataclass(frozen=True)
class PlantModel:
    """System matrices; ``H`` (n x m polynomial) and ``F`` (n x p) are optional."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    r: float
    H: PolyMat1 | None = None
    F: np.ndarray | None = None

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        n = A.shape[0]
        C = np.asarray(self.C, dtype=float).reshape(-1, n)
        m = C.shape[0]
        B = np.asarray(self.B, dtype=float).reshape(n, m)
        D = np.asarray(self.D, dtype=float).reshape(m, m)
        if A.shape != (n, n):
            raise ValueError(f"A must be square, got {A.shape}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "D", D)
        r = self.r.r if isinstance(self.r, Interval) else float(self.r)
        object.__setattr__(self, "r", float(Interval(r).r))
        if self.F is not None:
            F = np.asarray(self.F, dtype=float)
            object.__setattr__(self, "F", F.reshape(n, -1))
        if self.H is not None and self.H.shape != (n, m):
            raise ValueError(f"H must be {n} x {m}, got {self.H.shape}")

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.C.shape[0]

    @property
    def p(self) -> int:
        return 0 if self.F is None else self.F.shape[1]

    @property
    def interval(self) -> Interval:
        return Interval(self.r)

    def check_stable_difference(self, strict: bool = False) -> float:
        rho = spectral_radius(self.D)
        if rho >= 1.0:
            msg = f"spectral radius of D is {rho:.6g} >= 1"
            if strict:
                raise ValueError(msg)
            warnings.warn(msg, stacklevel=2)
        return rho


def steps_per_delay(r: float, dt: float) -> int:
    """``N`` with ``N * dt == r``; raises if ``dt`` does not divide ``r``."""
    N = int(round(r / dt))
    if N < 1 or abs(N * dt - r) > 1e-9 * r:
        raise ValueError(f"dt={dt!r} does not divide r={r!r}")
    return N


@dataclass
class History:
    """Rolling grid of ``y`` over ``[t - r, t]`` plus the current ``x``."""

    dt: float
    y: np.ndarray  # (N + 1, m), oldest first, newest at the current time
    x: np.ndarray

    @property
    def N(self) -> int:
        return self.y.shape[0] - 1

    @classmethod
    def from_initial(cls, plant: PlantModel, psi, phi, dt: float) -> "History":
        """Sample ``phi`` on the grid; the newest value is ``C psi + D phi(-r)``.

        ``phi(0)`` itself is not required to match (piecewise-continuous data).
        """
        N = steps_per_delay(plant.r, dt)
        psi = np.asarray(psi, dtype=float).reshape(plant.n)
        grid = -plant.r + dt * np.arange(N + 1)
        vals = _eval_phi(phi, grid, plant.m)
        vals[-1] = plant.C @ psi + plant.D @ vals[0]
        return cls(dt, vals, psi)


def _eval_phi(phi, grid, m):
    if phi is None:
        return np.zeros((len(grid), m))
    if callable(phi):
        vals = np.asarray(phi(grid), dtype=float)
    else:
        vals = np.broadcast_to(np.asarray(phi, dtype=float), (len(grid), m))
    return np.array(vals, dtype=float).reshape(len(grid), m)


@dataclass(frozen=True)
class Trajectory:
    """Simulation output on the grid ``t_j = j dt``.

    ``y_history`` covers ``[-r, t_end]`` (N samples before ``t = 0``), so
    ``y_t`` at step ``j`` is ``y_history[j : j + N + 1]``.
    """

    times: np.ndarray
    x: np.ndarray
    y: np.ndarray
    u: np.ndarray
    y_history: np.ndarray
    dt: float
    r: float
    V: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def N(self) -> int:
        return steps_per_delay(self.r, self.dt)

    def segment(self, j: int) -> np.ndarray:
        return self.y_history[j : j + self.N + 1]

    def constraint_residual(self, plant: PlantModel) -> float:
        """Largest ``|y(t) - C x(t) - D y(t - r)|`` over stored times."""
        delayed = self.y_history[: len(self.times)]
        res = self.y - self.x @ plant.C.T - delayed @ plant.D.T
        return float(np.max(np.abs(res), initial=0.0))

    def with_V(self, V) -> "Trajectory":
        return Trajectory(self.times, self.x, self.y, self.u, self.y_history, self.dt, self.r, np.asarray(V), self.meta)

    def to_csv(self) -> str:
        """Columns ``t, x1..xn, y1..ym, u1..up[, V]`` at 17 significant digits."""
        n, m, p = self.x.shape[1], self.y.shape[1], self.u.shape[1]
        header = ["t"] + [f"x{i + 1}" for i in range(n)] + [f"y{i + 1}" for i in range(m)]
        header += [f"u{i + 1}" for i in range(p)]
        cols = [self.times[:, None], self.x, self.y, self.u]
        if self.V is not None:
            header.append("V")
            cols.append(self.V[:, None])
        data = np.hstack(cols)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for row in data:
            w.writerow([f"{v:.17g}" for v in row])
        return buf.getvalue()


def _trapezoid_weights(N: int, dt: float) -> np.ndarray:
    w = np.full(N + 1, dt)
    w[0] = w[-1] = dt / 2
    return w


class _Feedback:
    """Distributed and feedback terms evaluated on history segments."""

    def __init__(self, plant: PlantModel, controller, N: int, dt: float):
        self.plant = plant
        n, m = plant.n, plant.m
        grid = -plant.r + dt * np.arange(N + 1)
        w = _trapezoid_weights(N, dt)
        kernels = []
        if plant.H is not None:
            kernels.append(plant.H(grid, check=False))
        self.has_H = plant.H is not None
        self.K0 = self.K1 = None
        self.p = 0
        if controller is not None:
            if plant.F is None:
                raise ValueError("a controller needs the plant input matrix F")
            self.K0 = np.asarray(controller.K0, dtype=float)
            self.K1 = np.asarray(controller.K1, dtype=float)
            self.p = self.K0.shape[0]
            if self.K0.shape != (self.p, n) or self.K1.shape != (self.p, m):
                raise ValueError("controller gain shapes do not match the plant")
            if plant.F.shape[1] != self.p:
                raise ValueError("F columns must match the controller output size")
            kernels.append(controller.K2_at(grid))
        # stacked kernels weighted for the trapezoid rule: (N+1, rows, m)
        self.W = np.concatenate(kernels, axis=1) * w[:, None, None] if kernels else None

    def integrals(self, seg: np.ndarray):
        """``(int H y, int K2 y)`` over a segment of N+1 samples."""
        if self.W is None:
            return None, None
        tot = np.einsum("krm,km->r", self.W, seg)
        n = self.plant.n
        h = tot[:n] if self.has_H else None
        k = tot[n:] if self.has_H else tot
        return h, k

    def u(self, x, y_delayed, k_int):
        if self.K0 is None:
            return np.zeros(0)
        return self.K0 @ x + self.K1 @ y_delayed + k_int

    def rhs(self, x, seg):
        plant = self.plant
        h, k = self.integrals(seg)
        y_del = seg[0]
        dx = plant.A @ x + plant.B @ y_del
        if h is not None:
            dx = dx + h
        u = self.u(x, y_del, k) if self.K0 is not None else np.zeros(0)
        if self.K0 is not None:
            dx = dx + plant.F @ u
        return dx, u


def simulate(
    plant: PlantModel,
    controller=None,
    psi=None,
    phi=None,
    t_end: float | None = None,
    dt: float | None = None,
) -> Trajectory:
    """Integrate from ``x(0) = psi``, ``y(s) = phi(s)`` on ``[-r, 0)``.

    ``controller`` needs ``K0``, ``K1`` and ``K2_at(grid)``
    (see ``ControllerGains``).  Defaults: ``dt = r/200``, ``t_end = 25 r``.
    Raises ``NonFiniteState`` on overflow.
    """
    r = plant.r
    dt = r / 200 if dt is None else float(dt)
    t_end = 25 * r if t_end is None else float(t_end)
    if t_end <= 0:
        raise ValueError("t_end must be positive")
    N = steps_per_delay(r, dt)
    if spectral_radius(plant.D) >= 1.0:
        plant.check_stable_difference()
    psi = np.zeros(plant.n) if psi is None else psi
    hist = History.from_initial(plant, psi, phi, dt)
    steps = int(round(t_end / dt))
    if abs(steps * dt - t_end) > 1e-9 * max(1.0, t_end):
        raise ValueError(f"dt={dt!r} does not divide t_end={t_end!r}")
    fb = _Feedback(plant, controller, N, dt)
    n, m = plant.n, plant.m
    Y = np.empty((N + steps + 1, m))
    Y[: N + 1] = hist.y
    X = np.empty((steps + 1, n))
    X[0] = hist.x
    U = np.empty((steps + 1, fb.p))
    C, D = plant.C, plant.D
    x = hist.x.copy()
    for j in range(steps):
        # Y[base : base + N + 1] is the segment at t_j
        base = j
        seg0 = Y[base : base + N + 1]
        k1, u0 = fb.rhs(x, seg0)
        U[j] = u0
        # half-step segment: interpolated interior, stage value on top
        half = np.empty((N + 1, m))
        half[:N] = 0.5 * (Y[base : base + N] + Y[base + 1 : base + N + 1])
        y_del_half = half[0]
        xa = x + 0.5 * dt * k1
        half[N] = C @ xa + D @ y_del_half
        k2, _ = fb.rhs(xa, half)
        xb = x + 0.5 * dt * k2
        half[N] = C @ xb + D @ y_del_half
        k3, _ = fb.rhs(xb, half)
        xc = x + dt * k3
        full = np.empty((N + 1, m))
        full[:N] = Y[base + 1 : base + N + 1]
        full[N] = C @ xc + D @ full[0]
        k4, _ = fb.rhs(xc, full)
        x = x + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(x)) or np.max(np.abs(x)) > _BLOWUP:
            raise NonFiniteState((j + 1) * dt)
        X[j + 1] = x
        Y[base + N + 1] = C @ x + D @ Y[base + 1]
    seg = Y[steps : steps + N + 1]
    _, U[steps] = fb.rhs(x, seg)
    times = dt * np.arange(steps + 1)
    return Trajectory(times, X, Y[N:], U, Y, dt, r, meta={"N": N, "steps": steps})


def decay_ratio(traj: Trajectory) -> float:
    """``max_i |x_i(t_end)| / max_i max_t |x_i(t)|``."""
    peak = float(np.max(np.abs(traj.x)))
    return float(np.max(np.abs(traj.x[-1]))) / peak if peak > 0 else 0.0


def _interp_matrix(N: int, dt: float, r: float, per_cell: int):
    """Composite Gauss nodes on the history grid and the linear-interpolation
    matrix from the N+1 grid values to the node values."""
    grid = -r + dt * np.arange(N + 1)
    rule = composite_gauss_rule(grid, per_cell, Interval(r))
    cell = np.clip(np.searchsorted(grid, rule.nodes, side="right") - 1, 0, N - 1)
    t = (rule.nodes - grid[cell]) / dt
    L = np.zeros((len(rule.nodes), N + 1))
    L[np.arange(len(cell)), cell] = 1 - t
    L[np.arange(len(cell)), cell + 1] = t
    return rule, L


def lyapunov_form_matrix(op, N: int, dt: float, per_cell: int = 3) -> np.ndarray:
    """Matrix ``G`` with ``V = v^T G v`` for ``v = [x; y_seg.ravel()]``.

    ``y_seg`` holds N+1 grid samples of the history, taken as piecewise
    linear; ``op`` is anything with ``kernels_at`` (forward or inverse).
    """
    r = op.interval.r
    rule, L = _interp_matrix(N, dt, r, per_cell)
    P, Q, R, S = op.kernels_at(rule.nodes)
    w = rule.weights
    n, m = P.shape[0], S.shape[-1]
    K = len(w)
    # node values Phi = (L kron I_m) y
    Lm = np.kron(L, np.eye(m))
    Sw = np.zeros((K * m, K * m))
    for k in range(K):
        Sw[k * m : (k + 1) * m, k * m : (k + 1) * m] = w[k] * S[k]
    Rw = np.transpose(R, (0, 2, 1, 3)).reshape(K * m, K * m) * np.repeat(w, m)[:, None] * np.repeat(w, m)[None, :]
    Gyy = Lm.T @ (Sw + Rw) @ Lm
    Qw = (Q * w[:, None, None]).transpose(1, 0, 2).reshape(n, K * m)
    Gxy = r * Qw @ Lm
    G = np.zeros((n + (N + 1) * m,) * 2)
    G[:n, :n] = r * P
    G[:n, n:] = Gxy
    G[n:, :n] = Gxy.T
    G[n:, n:] = Gyy
    return 0.5 * (G + G.T)


def evaluate_V_along(traj: Trajectory, op, stride: int = 1, per_cell: int = 3):
    """``V(t_j) = <z_j, op z_j>`` with ``z_j = (x(t_j), y_{t_j})`` and its
    central-difference slope.

    Returns ``(times, V, Vdot)`` sampled every ``stride`` steps.
    """
    N = traj.N
    G = lyapunov_form_matrix(op, N, traj.dt, per_cell)
    idx = np.arange(0, len(traj.times), stride)
    # windows of the history for every selected step
    segs = np.lib.stride_tricks.sliding_window_view(traj.y_history, N + 1, axis=0)[idx]
    # sliding_window_view puts the window axis last: (k, m, N+1)
    segs = np.transpose(segs, (0, 2, 1)).reshape(len(idx), -1)
    v = np.hstack([traj.x[idx], segs])
    V = np.einsum("ki,ij,kj->k", v, G, v, optimize=True)
    times = traj.times[idx]
    Vdot = np.gradient(V, times) if len(V) > 1 else np.zeros_like(V)
    return times, V, Vdot


def gnuplot_script(csv_name: str, n: int, title: str = "closed-loop states", png_name: str | None = None) -> str:
    """Plot script for the trajectory CSV (states against time)."""
    out = png_name or csv_name.rsplit(".", 1)[0] + "_gnuplot.png"
    plots = ", \\\n     ".join(
        f"'{csv_name}' using 1:{i + 2} with lines title 'x{i + 1}'" for i in range(n)
    )
    return (
        "set datafile separator ','\n"
        "set key autotitle columnhead\n"
        "set terminal pngcairo size 900,600\n"
        f"set output '{out}'\n"
        f"set title '{title}'\n"
        "set xlabel 't [s]'\n"
        "set ylabel 'x_i(t)'\n"
        "set grid\n"
        f"plot {plots}\n"
    )
