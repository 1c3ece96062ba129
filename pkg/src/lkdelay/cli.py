"""Command-line front end.

Usage::

    lkdelay <command> --config job.json [--out DIR] [--seed N]
    lkdelay reproduce-example [--out DIR]
    lkdelay --self-test

A job file is a JSON object with keys ``command``, ``input`` (path, relative
to the job file), ``out`` and ``overrides`` (``degree``, ``eps_min``, ``dt``,
``t_end``, ``quad_nodes``, ``seed``); unknown keys are rejected.  The
environment variable ``LKDELAY_SOLVER_TOL`` overrides the SDP tolerance.

Exit status: 0 on success, 1 on an infeasible or failed check (a JSON report
is still written), 2 on malformed input.  Diagnostics go to standard error,
one JSON object per line.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .ddesim import PlantModel, decay_ratio, evaluate_V_along, gnuplot_script, simulate
from .errors import Infeasible, LKDelayError, SingularMatrixError, ValidationFailed
from .lkoperator import (
    BoundaryData,
    SeparableKernelOperator,
    composition_residual,
    invariance_residual,
    inverse_invariance_residual,
    invert_separable,
)
from .polyalg import Interval, PolyMat1, gauss_rule
from .sdp import DEFAULT_TOL

__all__ = ["JobConfig", "run", "main", "COMMANDS"]

COMMANDS = ("invert", "check-invariance", "synthesize", "simulate", "reproduce-example")
OVERRIDE_KEYS = {"degree", "eps_min", "dt", "t_end", "quad_nodes", "seed"}
JOB_KEYS = {"command", "input", "out", "overrides"}
INVARIANCE_TOL = 1e-8
INVERSE_INVARIANCE_TOL = 1e-7
TOL_ENV = "LKDELAY_SOLVER_TOL"

EXIT_OK, EXIT_FAILED, EXIT_BAD_INPUT = 0, 1, 2


class BadInput(Exception):
    """Malformed job or input file."""


def emit(event: str, **fields) -> None:
    """One structured diagnostic line on standard error."""
    print(json.dumps({"event": event, **fields}, sort_keys=True, default=str), file=sys.stderr)


@dataclass
class JobConfig:
    command: str
    input: Path | None = None
    out: Path = Path("out")
    overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise BadInput(f"unknown command {self.command!r}; expected one of {COMMANDS}")
        unknown = set(self.overrides) - OVERRIDE_KEYS
        if unknown:
            raise BadInput(f"unknown override keys: {sorted(unknown)}")
        if self.command != "reproduce-example" and self.input is None:
            raise BadInput(f"command {self.command!r} needs an input file")

    @classmethod
    def from_dict(cls, data: dict, base: Path = Path(".")) -> "JobConfig":
        if not isinstance(data, dict):
            raise BadInput("job config must be a JSON object")
        unknown = set(data) - JOB_KEYS
        if unknown:
            raise BadInput(f"unknown job config keys: {sorted(unknown)}")
        if "command" not in data:
            raise BadInput("job config needs a 'command'")
        inp = data.get("input")
        overrides = data.get("overrides", {})
        if not isinstance(overrides, dict):
            raise BadInput("'overrides' must be an object")
        return cls(
            command=data["command"],
            input=None if inp is None else (base / inp),
            out=base / data.get("out", "out"),
            overrides=dict(overrides),
        )

    def get(self, key: str, default=None):
        return self.overrides.get(key, default)

    @property
    def seed(self) -> int:
        return int(self.get("seed", 0))


def solver_tol() -> float:
    raw = os.environ.get(TOL_ENV)
    if raw is None:
        return DEFAULT_TOL
    try:
        tol = float(raw)
    except ValueError as exc:
        raise BadInput(f"{TOL_ENV}={raw!r} is not a number") from exc
    if not tol > 0:
        raise BadInput(f"{TOL_ENV} must be positive")
    return tol


def _read_json(path: Path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise BadInput(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise BadInput(f"{path} is not valid JSON: {exc}") from exc


def _write_json(path: Path, data) -> None:
    path.write_text(json.dumps(_clean(data), indent=2, sort_keys=True) + "\n")


def _clean(obj):
    """JSON-safe copy: arrays to lists, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _quad(cfg: JobConfig, interval):
    nodes = cfg.get("quad_nodes")
    return None if nodes is None else gauss_rule(int(nodes), interval)


# commands


def cmd_invert(cfg: JobConfig) -> int:
    try:
        op = SeparableKernelOperator.from_dict(_read_json(cfg.input))
    except (ValueError, KeyError, TypeError) as exc:
        raise BadInput(f"operator file: {exc}") from exc
    quad = _quad(cfg, op.interval)
    inv = invert_separable(op, quad)
    res = composition_residual(op, inv, samples=20, quad=quad, seed=cfg.seed)
    out = {
        "Phat": inv.Phat,
        "Hhat": inv.Hhat,
        "Gammahat": inv.Gammahat,
        "K": inv.K,
        "T": inv.T,
        "S_coeffs": inv.S.coeffs,
        "S_constant": inv.S_constant,
        "degree": inv.degree,
        "r": inv.r,
        "composition_residual": res,
    }
    if inv.S_constant:
        out["separable_inverse"] = inv.as_separable().to_dict()
    _write_json(cfg.out / "inverse.json", out)
    emit("invert", composition_residual=res)
    return EXIT_OK


def cmd_check_invariance(cfg: JobConfig) -> int:
    data = _read_json(cfg.input)
    unknown = set(data) - {"operator", "C", "D"}
    if unknown or "operator" not in data or "C" not in data:
        raise BadInput("invariance input needs 'operator', 'C' and optional 'D'")
    try:
        op = SeparableKernelOperator.from_dict(data["operator"])
        C = np.asarray(data["C"], dtype=float).reshape(op.m, op.n)
        D = np.asarray(data.get("D", np.zeros((op.m, op.m))), dtype=float).reshape(op.m, op.m)
    except (ValueError, KeyError, TypeError) as exc:
        raise BadInput(f"invariance input: {exc}") from exc
    bd = BoundaryData(C, D)
    e28, e29, e30 = invariance_residual(op, bd)
    inv = invert_separable(op, _quad(cfg, op.interval))
    inv_res = inverse_invariance_residual(inv, bd, seed=cfg.seed)
    ok = max(e28, e29, e30) <= INVARIANCE_TOL and inv_res <= INVERSE_INVARIANCE_TOL
    report = {
        "boundary_psi": e28,
        "boundary_kernel": e29,
        "boundary_delay": e30,
        "inverse_boundary": inv_res,
        "tolerance": INVARIANCE_TOL,
        "inverse_tolerance": INVERSE_INVARIANCE_TOL,
        "invariant": ok,
    }
    _write_json(cfg.out / "residuals.json", report)
    emit("check-invariance", invariant=ok, worst=max(e28, e29, e30), inverse=inv_res)
    return EXIT_OK if ok else EXIT_FAILED


def _synthesis_problem(data: dict, cfg: JobConfig):
    from .synthesis import SynthesisProblem

    data = dict(data)
    for key in ("degree", "eps_min"):
        if key in cfg.overrides:
            data[key] = cfg.overrides[key]
    try:
        return SynthesisProblem.from_dict(data)
    except (ValueError, TypeError) as exc:
        raise BadInput(f"synthesis problem: {exc}") from exc


def _write_trajectory(out: Path, stem: str, traj, title: str) -> dict:
    from .plotting import plot_states

    csv = f"{stem}.csv"
    png = f"{stem}.png"
    (out / csv).write_text(traj.to_csv())
    (out / f"{stem}.gp").write_text(gnuplot_script(csv, traj.x.shape[1], title, f"{stem}_gnuplot.png"))
    plot_states(traj, out / png, title)
    return {"csv": csv, "gnuplot": f"{stem}.gp", "png": png}


def _run_synthesis(prob, cfg: JobConfig, out: Path, stem: str = "closed_loop") -> tuple[int, dict]:
    """Synthesize, write gains/certificate/report and the validation run."""
    from .synthesis import synthesize

    try:
        cert, gains, report = synthesize(prob, tol=solver_tol(), validate=True)
    except Infeasible as exc:
        rep = {"status": exc.status, "message": str(exc), "eps": exc.eps}
        _write_json(out / "report.json", rep)
        emit("synthesize", status=exc.status, message=str(exc))
        return EXIT_FAILED, rep
    except ValidationFailed as exc:
        rep = {"status": "validation_failed", "message": str(exc), "details": exc.details}
        _write_json(out / "report.json", rep)
        emit("synthesize", status="validation_failed", message=str(exc))
        return EXIT_FAILED, rep
    _write_json(out / "gains.json", gains.to_dict())
    _write_json(out / "certificate.json", cert.to_dict())
    traj = _closed_loop_run(prob.plant(), gains, cfg)
    inv = invert_separable(cert.separable())
    times, V, Vdot = evaluate_V_along(traj, inv)
    traj = traj.with_V(V)
    files = _write_trajectory(out, stem, traj, "closed loop, synthesized controller")
    rep = report.to_dict()
    rep.update(
        {
            "gains": {
                "K0_shape": list(gains.K0.shape),
                "K1_shape": list(gains.K1.shape),
                "K2_fit_degree": gains.fit.degree,
                "K2_fit_max_error": gains.fit_error,
                "K2_exact_polynomial": gains.exact,
            },
            "lyapunov": {
                "V_min": float(V.min()),
                "V_initial": float(V[0]),
                "V_final": float(V[-1]),
                "Vdot_max_interior": float(Vdot[1:-1].max()) if len(Vdot) > 2 else 0.0,
            },
            "files": files,
        }
    )
    _write_json(out / "report.json", rep)
    emit("synthesize", status="feasible", eps=cert.eps, decay_ratio=rep["decay_ratio"])
    return EXIT_OK, rep


def _closed_loop_run(plant: PlantModel, gains, cfg: JobConfig, psi=None, phi=None):
    r = plant.r
    psi = np.ones(plant.n) if psi is None else np.asarray(psi, dtype=float)
    y0 = plant.C @ psi if phi is None else np.asarray(phi, dtype=float)
    return simulate(
        plant,
        gains,
        psi,
        lambda s: np.tile(y0, (len(np.atleast_1d(s)), 1)),
        t_end=float(cfg.get("t_end", 25 * r)),
        dt=float(cfg.get("dt", r / 200)),
    )


def cmd_synthesize(cfg: JobConfig) -> int:
    prob = _synthesis_problem(_read_json(cfg.input), cfg)
    code, _ = _run_synthesis(prob, cfg, cfg.out)
    return code


def cmd_simulate(cfg: JobConfig) -> int:
    from .synthesis import ControllerGains

    data = _read_json(cfg.input)
    unknown = set(data) - {"plant", "gains", "psi", "phi"}
    if unknown or "plant" not in data:
        raise BadInput(f"simulation input needs 'plant'; unknown keys {sorted(unknown)}")
    pd = data["plant"]
    bad = set(pd) - {"A", "B", "C", "D", "F", "r", "H"}
    if bad:
        raise BadInput(f"unknown plant keys: {sorted(bad)}")
    try:
        r = float(pd["r"])
        H = None if pd.get("H") is None else PolyMat1(np.asarray(pd["H"], dtype=float), Interval(r))
        C = np.atleast_2d(np.asarray(pd["C"], dtype=float))
        plant = PlantModel(
            pd["A"], pd["B"], C, pd.get("D", np.zeros((C.shape[0],) * 2)), r, H=H, F=pd.get("F")
        )
        gains = None if data.get("gains") is None else ControllerGains.from_dict(data["gains"])
    except (ValueError, KeyError, TypeError) as exc:
        raise BadInput(f"simulation input: {exc}") from exc
    traj = _closed_loop_run(plant, gains, cfg, data.get("psi"), data.get("phi"))
    files = _write_trajectory(cfg.out, "trajectory", traj, "simulated states")
    ratio = decay_ratio(traj)
    _write_json(
        cfg.out / "summary.json",
        {
            "decay_ratio": ratio,
            "constraint_residual": traj.constraint_residual(plant),
            "t_end": float(traj.times[-1]),
            "dt": traj.dt,
            "files": files,
        },
    )
    emit("simulate", decay_ratio=ratio)
    return EXIT_OK


def cmd_reproduce_example(cfg: JobConfig) -> int:
    from .examples import published_gains, reference_problem
    from .synthesis import DECAY_GATE

    prob = reference_problem(int(cfg.get("degree", 2)), eps_min=float(cfg.get("eps_min", 1e-6)))
    out = cfg.out
    pub = _closed_loop_run(prob.plant(), published_gains(), cfg)
    pub_ratio = decay_ratio(pub)
    pub_files = _write_trajectory(out, "published_closed_loop", pub, "closed loop, published controller")
    code, rep = _run_synthesis(prob, cfg, out, stem="synthesized_closed_loop")
    summary = {
        "published_controller": {"decay_ratio": pub_ratio, "passed": pub_ratio <= DECAY_GATE, "files": pub_files},
        "synthesis": rep,
        "decay_gate": DECAY_GATE,
    }
    _write_json(out / "example.json", summary)
    emit("reproduce-example", published_decay_ratio=pub_ratio, synthesis=rep.get("status"))
    if code != EXIT_OK or pub_ratio > DECAY_GATE:
        return EXIT_FAILED
    return EXIT_OK


HANDLERS = {
    "invert": cmd_invert,
    "check-invariance": cmd_check_invariance,
    "synthesize": cmd_synthesize,
    "simulate": cmd_simulate,
    "reproduce-example": cmd_reproduce_example,
}


def run(cfg: JobConfig) -> int:
    """Execute one job; returns the exit status."""
    try:
        cfg.out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        emit("error", kind="output", message=str(exc))
        return EXIT_BAD_INPUT
    try:
        return HANDLERS[cfg.command](cfg)
    except BadInput as exc:
        emit("error", kind="input", message=str(exc))
        return EXIT_BAD_INPUT
    except SingularMatrixError as exc:
        _write_json(cfg.out / "report.json", {"status": "singular", "message": str(exc)})
        emit("error", kind="singular", message=str(exc))
        return EXIT_FAILED
    except LKDelayError as exc:
        _write_json(cfg.out / "report.json", {"status": "error", "message": str(exc)})
        emit("error", kind=type(exc).__name__, message=str(exc))
        return EXIT_FAILED


# self-test


def self_test() -> int:
    """Built-in oracle suite; no files needed."""
    from .ddesim import PlantModel as _Plant
    from .lkoperator.sampling import random_separable
    from .lkoperator import KernelOperator
    from .positivity import sample_positivity

    checks = []

    iv = Interval(1.0)
    op = SeparableKernelOperator(
        np.eye(1), np.eye(1), np.eye(1), PolyMat1.constant(np.eye(1), iv), 0
    )
    inv = invert_separable(op)
    err = max(abs(inv.Phat[0, 0] - 2), abs(inv.Hhat[0, 0] + 1), abs(inv.Gammahat[0, 0]))
    checks.append(("scalar_inverse", err, err <= 1e-12))

    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(5):
        sep = random_separable(2, 1, 1, 1.0, rng, constant_S=True)
        worst = max(worst, composition_residual(sep, invert_separable(sep), samples=5))
    checks.append(("composition_residual", worst, worst <= 1e-9))

    ident = KernelOperator.identity(2, 1, iv)
    dev = abs(sample_positivity(ident, n_samples=200) - 1.0)
    checks.append(("identity_positivity", dev, dev <= 1e-12))

    plant = _Plant(-np.eye(1), np.zeros((1, 1)), np.zeros((1, 1)), np.zeros((1, 1)), 1.0)
    traj = simulate(plant, None, np.ones(1), np.zeros(1), t_end=1.0, dt=0.005)
    e = abs(traj.x[-1, 0] - np.exp(-1.0))
    checks.append(("rk4_exponential", e, e <= 1e-6))

    ok = True
    for name, value, passed in checks:
        emit("self-test", check=name, value=float(value), passed=bool(passed))
        ok = ok and bool(passed)
    return EXIT_OK if ok else EXIT_FAILED


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lkdelay", description="LK-functional analysis and synthesis for delay systems")
    p.add_argument("command", nargs="?", choices=COMMANDS, help="job to run (overrides the job file's command)")
    p.add_argument("--config", type=Path, help="JSON job file")
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--seed", type=int, help="random seed for sampled checks")
    p.add_argument("--self-test", action="store_true", help="run the built-in oracle suite")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.self_test:
        return self_test()
    try:
        if args.config is not None:
            cfg_path = args.config
            data = _read_json(cfg_path)
            if isinstance(data, dict) and args.command is not None:
                data = {**data, "command": args.command}
            cfg = JobConfig.from_dict(data, cfg_path.parent)
        elif args.command is not None:
            cfg = JobConfig(command=args.command)
        else:
            raise BadInput("give a command, --config or --self-test")
        if args.out is not None:
            cfg.out = args.out
        if args.seed is not None:
            cfg.overrides["seed"] = args.seed
    except BadInput as exc:
        emit("error", kind="input", message=str(exc))
        return EXIT_BAD_INPUT
    return run(cfg)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
