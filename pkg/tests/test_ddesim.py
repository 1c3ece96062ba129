import numpy as np
import pytest

from lkdelay.ddesim import (
    PlantModel,
    decay_ratio,
    evaluate_V_along,
    gnuplot_script,
    simulate,
    spectral_radius,
    steps_per_delay,
)
from lkdelay.errors import NonFiniteState
from lkdelay.examples import published_gains, reference_plant
from lkdelay.lkoperator import KernelOperator
from lkdelay.polyalg import Interval, PolyMat1
from lkdelay.synthesis import ControllerGains


def decay_plant(r=1.0):
    z = np.zeros((1, 1))
    return PlantModel(-np.eye(1), z, z, z, r)


def const_phi(y0):
    y0 = np.atleast_1d(np.asarray(y0, dtype=float))
    return lambda s: np.tile(y0, (len(np.atleast_1d(s)), 1))


def test_spectral_radius_examples():
    assert spectral_radius(np.zeros((2, 2))) == 0.0
    assert spectral_radius(0.5 * np.eye(2)) == pytest.approx(0.5)
    assert spectral_radius(np.array([[0.0, 1.0], [0.0, 0.0]])) == 0.0


def test_steps_per_delay():
    assert steps_per_delay(1.6, 1.6 / 200) == 200
    with pytest.raises(ValueError):
        steps_per_delay(1.0, 0.3)


def test_exponential_decay_accuracy_and_order():
    errs = []
    for dt in (0.01, 0.005, 0.0025):
        traj = simulate(decay_plant(), None, np.ones(1), 0.0, t_end=1.0, dt=dt)
        errs.append(abs(traj.x[-1, 0] - np.exp(-1.0)))
    assert errs[1] <= 1e-6
    assert errs[0] / errs[1] >= 8.0
    assert errs[1] / errs[2] >= 8.0


def test_pure_difference_channel():
    z = np.zeros((1, 1))
    plant = PlantModel(z, z, z, 0.5 * np.eye(1), 1.0)
    traj = simulate(plant, None, np.zeros(1), 1.0, t_end=2.0, dt=0.01)
    t = traj.times
    first = (t >= 0) & (t < 1 - 1e-12)
    second = (t >= 1 - 1e-12) & (t < 2 - 1e-12)
    np.testing.assert_allclose(traj.y[first, 0], 0.5)
    np.testing.assert_allclose(traj.y[second, 0], 0.25)
    assert traj.constraint_residual(plant) <= 1e-9


def test_method_of_steps_delayed_feedback():
    # x' = y(t - 1), y = x, history 1: x = 1 + t on [0, 1], 2 + (t^2 - 1)/2 on [1, 2]
    one = np.eye(1)
    plant = PlantModel(np.zeros((1, 1)), one, one, np.zeros((1, 1)), 1.0)
    traj = simulate(plant, None, np.ones(1), 1.0, t_end=2.0, dt=0.01)
    assert traj.x[100, 0] == pytest.approx(2.0, abs=1e-12)
    assert traj.x[-1, 0] == pytest.approx(3.5, abs=1e-10)
    assert traj.constraint_residual(plant) <= 1e-12


def test_distributed_kernel_converges():
    one = np.eye(1)
    H = PolyMat1.constant(one, Interval(1.0))
    plant = PlantModel(-2 * one, np.zeros((1, 1)), one, np.zeros((1, 1)), 1.0, H=H)
    ref = simulate(plant, None, np.ones(1), 1.0, t_end=2.0, dt=0.0025).x[-1, 0]
    coarse = simulate(plant, None, np.ones(1), 1.0, t_end=2.0, dt=0.01).x[-1, 0]
    assert abs(coarse - ref) <= 1e-4


def test_stable_open_loop_eventually_decreasing():
    A = np.array([[-1.0, 2.0], [0.0, -0.5]])
    plant = PlantModel(A, np.zeros((2, 1)), np.array([[1.0, 0.0]]), np.zeros((1, 1)), 1.0)
    traj = simulate(plant, None, np.ones(2), const_phi([1.0]), t_end=30.0, dt=0.01)
    norms = np.linalg.norm(traj.x, axis=1)
    tail = norms[len(norms) // 2 :]
    assert np.all(np.diff(tail) < 0)


def test_published_controller_decays():
    plant = reference_plant()
    psi = np.ones(6)
    traj = simulate(plant, published_gains(), psi, const_phi(plant.C @ psi), t_end=40.0, dt=1.6 / 200)
    assert decay_ratio(traj) <= 0.05
    assert traj.constraint_residual(plant) <= 1e-9
    assert traj.u.shape == (len(traj.times), 1)


def test_controller_terms_enter_input():
    iv = Interval(1.0)
    gains = ControllerGains.from_polynomial([[2.0]], [[3.0]], PolyMat1.constant([[4.0]], iv))
    one = np.eye(1)
    plant = PlantModel(np.zeros((1, 1)), np.zeros((1, 1)), np.zeros((1, 1)), np.zeros((1, 1)), 1.0, F=one)
    traj = simulate(plant, gains, np.ones(1), 1.0, t_end=0.01, dt=0.01)
    # u(0) = 2*1 + 3*phi(-1) + int 4 y(s) ds with y = 1 on [-1, 0) and y(0) = 0
    assert traj.u[0, 0] == pytest.approx(2.0 + 3.0 + 4.0 * (1.0 - 0.005), abs=1e-12)


def test_nonfinite_state_raises():
    z = np.zeros((1, 1))
    plant = PlantModel(np.array([[400.0]]), z, z, z, 1.0)
    with pytest.raises(NonFiniteState) as info:
        simulate(plant, None, np.ones(1), 0.0, t_end=10.0, dt=0.01)
    assert info.value.t > 0


def test_V_along_zero_and_identity():
    z = np.zeros((1, 1))
    plant = PlantModel(z, z, z, z, 1.0)
    op = KernelOperator.identity(1, 1, Interval(1.0))
    traj = simulate(plant, None, np.zeros(1), 0.0, t_end=1.0, dt=0.01)
    _, V, _ = evaluate_V_along(traj, op)
    assert np.all(V == 0.0)
    traj = simulate(plant, None, np.ones(1), 0.0, t_end=1.0, dt=0.01)
    _, V, Vdot = evaluate_V_along(traj, op)
    np.testing.assert_allclose(V, 1.0, atol=1e-12)
    assert np.abs(Vdot).max() <= 1e-10


def test_csv_and_plot_script():
    traj = simulate(decay_plant(), None, np.ones(1), 0.0, t_end=0.1, dt=0.01)
    text = traj.to_csv()
    lines = text.strip().splitlines()
    assert lines[0].split(",")[:2] == ["t", "x1"]
    assert len(lines) == len(traj.times) + 1
    value = lines[-1].split(",")[1]
    assert float(value) == traj.x[-1, 0]
    script = gnuplot_script("run.csv", 1)
    assert "run.csv" in script and "using 1:2" in script


def test_dt_must_divide_delay():
    with pytest.raises(ValueError):
        simulate(decay_plant(), None, np.ones(1), 0.0, t_end=1.0, dt=0.3)
