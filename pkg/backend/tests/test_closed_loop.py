import numpy as np
import pytest

from app.closed_loop import compare_modes, rk4_integrate, simulate, single_branch_intervals
from app.steering import fishhook, get_profile, straight

PHI3 = -4796.2


def test_straight_run_stays_level(cfg):
    result = simulate(cfg, PHI3, straight(), np.linspace(0.0, 1.5, 151))
    assert result.all_satisfied
    assert result.rollover_event is None
    assert np.max(np.abs(result.rollover)) < 1e-9
    assert result.summary["violation_intervals"] == {"left": [], "right": []}
    assert result.max_force() < 1e-6


def test_recorded_force_follows_yaw_rate(cfg):
    result = simulate(cfg, PHI3, fishhook(), np.linspace(0.0, 1.0, 501))
    assert np.array_equal(result.controls[:, 0], PHI3 * result.states[:, 9])
    assert np.array_equal(result.controls[:, 1], -result.controls[:, 0])
    assert result.max_force() > 0.0


def test_identical_inputs_identical_runs(cfg):
    grid = np.linspace(0.0, 1.0, 501)
    first = simulate(cfg, PHI3, fishhook(), grid)
    second = simulate(cfg, PHI3, fishhook(), grid)
    assert np.array_equal(first.states, second.states)
    assert first.summary == second.summary


def test_integrators_agree(cfg):
    grid = np.linspace(0.0, 1.5, 1501)
    profile = get_profile("fishhook_fast")
    alpha = simulate(cfg, PHI3, profile, grid, integrator="alpha")
    rk4 = simulate(cfg, PHI3, profile, grid, integrator="rk4")
    assert alpha.rollover_event is None and rk4.rollover_event is None
    scale = np.max(np.abs(rk4.states), axis=0)
    assert np.all(np.abs(alpha.states - rk4.states) <= 1e-3 * scale + 1e-6)


def test_rk4_on_linear_decay():
    grid = np.linspace(0.0, 1.0, 11)
    states = rk4_integrate(lambda t, x: -x, [1.0], grid)
    assert states[-1, 0] == pytest.approx(np.exp(-1.0), abs=1e-5)


def test_identical_gains_identical_reports(cfg):
    report = compare_modes(cfg, PHI3, PHI3, fishhook(), np.linspace(0.0, 0.8, 401))
    assert report["disjunctive"] == report["conservative"]
    assert report["force_ratio"] == 1.0


def test_invalid_inputs(cfg):
    with pytest.raises(ValueError):
        simulate(cfg, float("nan"), straight(), np.linspace(0.0, 1.0, 11))
    with pytest.raises(ValueError):
        simulate(cfg, PHI3, straight(), np.linspace(0.0, 1.0, 11), integrator="euler")


def test_single_branch_intervals():
    times = np.array([0.0, 0.5, 1.0, 1.5])
    branches = np.array([
        [-1000.0, -1.0, -1000.0, -1.0],
        [-1000.0, 2.0, 500.0, -1.0],
        [-1000.0, 2.0, 500.0, -1.0],
        [2000.0, 2.0, -1.0, -1.0],
    ])
    spans = single_branch_intervals(times, branches)
    assert spans["left"] == [(0.5, 1.0)]
    assert spans["right"] == [(0.5, 1.0)]


@pytest.mark.slow
@pytest.mark.parametrize("name", ["fishhook", "fishhook_fast", "fishhook_severe"])
def test_library_maneuvers_satisfied(cfg, name):
    result = simulate(cfg, PHI3, get_profile(name), np.linspace(0.0, 1.5, 1501), profile=name)
    assert result.rollover_event is None
    assert result.all_satisfied
    assert result.summary["violation_intervals"] == {"left": [], "right": []}
    assert result.summary["max_abs_theta_x"] < np.pi / 2


@pytest.mark.slow
def test_severe_maneuver_leans_on_one_branch(cfg):
    result = simulate(cfg, PHI3, get_profile("fishhook_severe"), np.linspace(0.0, 1.5, 1501))
    spans = result.summary["single_branch_intervals"]
    assert spans["left"] or spans["right"]


@pytest.mark.slow
def test_gains_of_both_modes_need_similar_force(cfg):
    report = compare_modes(cfg, PHI3, -4761.2, fishhook(), np.linspace(0.0, 1.5, 1501))
    assert report["disjunctive"]["all_satisfied"]
    assert report["conservative"]["all_satisfied"]
    assert 1.0 / 1.5 <= report["force_ratio"] <= 1.5
