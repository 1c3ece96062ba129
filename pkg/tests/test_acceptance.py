"""Acceptance criteria 1-9.

Each test prints one ``PASS``/``FAIL`` line; the lines are repeated in the
pytest terminal summary.  Run standalone with ``python tests/test_acceptance.py``.
"""

import doctest
import json
import time

import numpy as np
import pytest

from lkdelay import cli, synthesis
from lkdelay.ddesim import PlantModel, decay_ratio, simulate
from lkdelay.examples import published_gains, reference_plant, reference_problem
from lkdelay.lkoperator import (
    BoundaryData,
    SeparableKernelOperator,
    composition_residual,
    invariance_residual,
    inverse_invariance_residual,
    invert_separable,
)
from lkdelay.lkoperator.sampling import random_invariant_separable, random_separable
from lkdelay.polyalg import Interval, PolyMat1
from lkdelay.positivity import (
    XiCertificate,
    gram_side,
    op_from_multiplier,
    sample_positivity,
    weighted_side,
    xi_expand,
)

RESULTS: list[str] = []


def record(number: int, passed: bool, detail: str) -> None:
    line = f"{'PASS' if passed else 'FAIL'} criterion {number}: {detail}"
    RESULTS.append(line)
    print(line)
    assert passed, line


def test_criterion_1_inversion_identity():
    rng = np.random.default_rng(101)
    worst = {True: 0.0, False: 0.0}
    t0 = time.perf_counter()
    for k in range(100):
        n, m, d = int(rng.integers(1, 5)), int(rng.integers(1, 4)), int(rng.integers(0, 4))
        constant = k % 2 == 0
        op = random_separable(n, m, d, float(rng.uniform(0.5, 2.0)), rng, constant_S=constant)
        res = composition_residual(op, invert_separable(op), samples=10, seed=k)
        worst[constant] = max(worst[constant], res)
    ok = worst[True] <= 1e-9 and worst[False] <= 1e-7
    record(
        1,
        ok,
        f"worst residual {worst[True]:.2e} (constant S, tol 1e-9), "
        f"{worst[False]:.2e} (polynomial S, tol 1e-7), {time.perf_counter() - t0:.1f} s",
    )


def test_criterion_2_scalar_closed_form():
    iv = Interval(1.0)
    inv = invert_separable(SeparableKernelOperator([[1.0]], [[1.0]], [[1.0]], PolyMat1.constant([[1.0]], iv), 0))
    got = {
        "K": inv.K,
        "T": inv.T,
        "Hhat": inv.Hhat,
        "Phat": inv.Phat,
        "Gammahat": inv.Gammahat,
    }
    want = {"K": 1.0, "T": 1.0, "Hhat": -1.0, "Phat": 2.0, "Gammahat": 0.0}
    err = max(abs(float(np.asarray(got[k]).ravel()[0]) - v) for k, v in want.items())
    record(2, err <= 1e-12, f"max deviation from (K,T,Hhat,Phat,Gammahat)=(1,1,-1,2,0) is {err:.1e} (tol 1e-12)")


def _random_boundary(n, m, rng):
    C = rng.standard_normal((m, n))
    D = rng.standard_normal((m, m))
    D *= rng.uniform(0.0, 0.9) / max(1e-12, np.abs(np.linalg.eigvals(D)).max())
    return BoundaryData(C, D)


def test_criterion_3_invariance_propagation():
    rng = np.random.default_rng(303)
    worst_fwd = worst_inv = 0.0
    for k in range(100):
        n, m, d = int(rng.integers(1, 5)), int(rng.integers(1, 4)), int(rng.integers(0, 4))
        bd = _random_boundary(n, m, rng)
        op = random_invariant_separable(bd, d, float(rng.uniform(0.5, 2.0)), rng, constant_S=k % 2 == 0)
        worst_fwd = max(worst_fwd, max(invariance_residual(op, bd)))
        worst_inv = max(worst_inv, inverse_invariance_residual(invert_separable(op), bd, seed=k))
    ok = worst_fwd <= 1e-9 and worst_inv <= 1e-7
    record(3, ok, f"forward residual {worst_fwd:.2e} (tol 1e-9), inverse residual {worst_inv:.2e} (tol 1e-7)")


def test_criterion_4_xi_soundness():
    rng = np.random.default_rng(404)
    worst = np.inf
    for k in range(200):
        d, kk = int(rng.integers(0, 4)), int(rng.integers(1, 4))
        vec = int(rng.integers(0, kk))
        iv = Interval(float(rng.uniform(0.5, 2.0)))
        side = gram_side(d, kk, vec)
        G = rng.standard_normal((side, int(rng.integers(1, side + 1))))
        W = None
        if d:
            w = rng.standard_normal((weighted_side(d, kk),) * 2)
            W = w @ w.T
        M, N = xi_expand(XiCertificate(G @ G.T, d, kk, iv, vec_dim=vec, weighted_gram=W))
        worst = min(worst, sample_positivity(op_from_multiplier(M, N, vec), n_samples=1000, seed=k))
    record(4, worst >= -1e-10, f"min sampled normalized form {worst:.2e} over 200 x 1000 (tol -1e-10)")


def test_criterion_5_published_controller():
    plant = reference_plant()
    psi = np.ones(plant.n)
    y0 = plant.C @ psi
    t0 = time.perf_counter()
    traj = simulate(plant, published_gains(), psi, lambda s: np.tile(y0, (len(s), 1)), t_end=40.0, dt=1.6 / 200)
    elapsed = time.perf_counter() - t0
    ratio = decay_ratio(traj)
    record(5, ratio <= 0.05 and elapsed < 1.0, f"decay ratio {ratio:.4f} (gate 0.05), runtime {elapsed:.2f} s (< 1 s)")


@pytest.fixture(scope="module")
def example(tmp_path_factory):
    out = tmp_path_factory.mktemp("example")
    t0 = time.perf_counter()
    code = cli.main(["reproduce-example", "--out", str(out)])
    elapsed = time.perf_counter() - t0
    return code, json.loads((out / "example.json").read_text()), elapsed


def test_criterion_6_synthesis(example):
    code, data, elapsed = example
    syn = data["synthesis"]
    gains = syn.get("gains", {})
    ok = (
        code == 0
        and syn.get("status") == "feasible"
        and syn.get("eps", 0.0) > 0
        and syn.get("decay_ratio", np.inf) <= 0.05
        and gains.get("K0_shape") == [1, 6]
        and gains.get("K1_shape") == [1, 2]
        and gains.get("K2_fit_degree", 99) <= 4
        and np.isfinite(float(gains.get("K2_fit_max_error", np.nan)))
    )
    record(
        6,
        ok,
        f"status {syn.get('status')}, eps {syn.get('eps', float('nan')):.3e}, decay ratio "
        f"{syn.get('decay_ratio', float('nan')):.2e}, K2 fit degree {gains.get('K2_fit_degree')} "
        f"(fit error {gains.get('K2_fit_max_error')}), {elapsed:.1f} s",
    )


def test_criterion_7_lyapunov(example):
    _, data, _ = example
    lyap = data["synthesis"].get("lyapunov", {})
    vmin = lyap.get("V_min", -np.inf)
    slope = lyap.get("Vdot_max_interior", np.inf)
    record(7, vmin > 0 and slope <= 1e-6, f"min V {vmin:.2e} (> 0), max interior slope {slope:.2e} (<= 1e-6)")


def test_criterion_8_simulator_accuracy():
    z = np.zeros((1, 1))
    plant = PlantModel(-np.eye(1), z, z, z, 1.0)
    errs = [abs(simulate(plant, None, np.ones(1), 0.0, t_end=1.0, dt=dt).x[-1, 0] - np.exp(-1.0)) for dt in (0.005, 0.0025)]
    ratio = errs[0] / errs[1]
    record(8, errs[0] <= 1e-6 and ratio >= 8.0, f"error {errs[0]:.2e} at dt 0.005 (tol 1e-6), halving ratio {ratio:.1f} (>= 8)")


def test_criterion_9_block_dimensions():
    finder = doctest.DocTestFinder()
    runner = doctest.DocTestRunner()
    for t in finder.find(synthesis.assemble, "assemble", globs=vars(synthesis).copy()):
        runner.run(t)
    res = runner.summarize(verbose=False)
    meta = synthesis.assemble(reference_problem(2)).sdp.metadata
    ok = res.failed == 0 and res.attempted > 0 and meta["operator_block_dim"] == meta["n"] + 2 * meta["m"] == 10
    record(9, ok, f"doctest {res.attempted - res.failed}/{res.attempted} passed; operator block dim {meta['operator_block_dim']} = n+2m")


if __name__ == "__main__":  # pragma: no cover
    import sys

    sys.exit(pytest.main([__file__, "-q", "-s"]))
