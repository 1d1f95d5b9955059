import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from app.alpha_method import AlphaIntegrator, AlphaParams, AlphaStep, alpha_params, integrate, step_residual
from app.errors import AlphaParameterError, StepError, StepFailureError


def decay(t, x):
    return -x


def test_alpha_params():
    assert alpha_params(0.0) == (1.5, 1.0)
    gamma, beta = alpha_params(0.5)
    assert gamma == pytest.approx(5.0 / 6.0)
    assert beta == pytest.approx(4.0 / 9.0)
    for rho in (0.0, 0.3, 0.9, 0.999):
        assert AlphaParams(rho).gamma > 0.5


@pytest.mark.parametrize("rho", [1.0, -0.1, 1.5])
def test_rho_outside_half_open_interval(rho):
    with pytest.raises(AlphaParameterError):
        alpha_params(rho)


def test_stationary_step_has_zero_residual():
    step = AlphaStep(x_n=np.ones(3), x_next=np.ones(3), a_n=np.zeros(3), a_next=np.zeros(3), h=0.1)
    state, aux = step_residual(AlphaParams(0.5), np.zeros(3), np.zeros(3), step)
    assert_allclose(state, 0.0)
    assert_allclose(aux, 0.0)


def test_constant_rate_step_is_exact():
    step = AlphaStep(x_n=np.array([0.0]), x_next=np.array([0.1]), a_n=np.zeros(1), a_next=np.zeros(1), h=0.1)
    state, aux = step_residual(AlphaParams(0.5), np.ones(1), np.ones(1), step)
    assert_allclose(state, 0.0, atol=1e-15)
    assert_allclose(aux, 0.0, atol=1e-15)


def test_non_positive_step_rejected():
    step = AlphaStep(x_n=np.zeros(1), x_next=np.zeros(1), a_n=np.zeros(1), a_next=np.zeros(1), h=0.0)
    with pytest.raises(StepError):
        step_residual(AlphaParams(0.5), np.zeros(1), np.zeros(1), step)
    with pytest.raises(StepError):
        AlphaIntegrator(AlphaParams(0.5), decay).integrate([1.0], [0.0, 0.0, 1.0])


def test_single_step_matches_scalar_root():
    params = AlphaParams(0.8)
    h, x0, a0 = 0.01, 1.0, 1.0
    q, gamma = params.q, params.gamma
    # the state residual is linear in x1 for x' = -x
    x1 = (x0 - (1 - q) * h * x0 + (0.5 - q) * h * h * a0) / (1 + q * h)
    a1 = (-x1 + x0) / (h * gamma) + (1 - 1 / gamma) * a0

    stepper = AlphaIntegrator(params, decay)
    x, a, f = stepper.step(0.0, np.array([x0]), np.array([a0]), np.array([-x0]), h, 1)
    assert x[0] == pytest.approx(x1, abs=1e-12)
    assert a[0] == pytest.approx(a1, abs=1e-8)
    assert f[0] == pytest.approx(-x1, abs=1e-12)


def test_exponential_decay_accuracy():
    grid = np.linspace(0.0, 1.0, 101)
    result = integrate(AlphaParams(0.8), decay, [1.0], grid)
    assert abs(result.states[-1, 0] - math.exp(-1.0)) < 1e-3
    assert_allclose(result.times, grid)


@pytest.mark.parametrize("rho", [0.0, 0.5, 0.9])
def test_second_order_convergence(rho):
    errors = []
    for n in (40, 80, 160):
        grid = np.linspace(0.0, 1.0, n + 1)
        result = integrate(AlphaParams(rho), decay, [1.0], grid, a0=[1.0])
        errors.append(np.max(np.abs(result.states[:, 0] - np.exp(-grid))))
    order = math.log2(errors[-2] / errors[-1])
    assert 1.7 <= order <= 2.3


@pytest.mark.parametrize("h", [0.1, 1.0])
def test_stiff_decay_is_monotone(h):
    def stiff(t, x):
        return -1000.0 * x

    grid = np.arange(11) * h
    states = integrate(AlphaParams(0.5), stiff, [1.0], grid, a0=[0.0]).states[:, 0]
    magnitudes = np.abs(states)
    assert np.all(np.diff(magnitudes) <= 1e-12)


def test_stiff_decay_small_step_is_bounded():
    def stiff(t, x):
        return -1000.0 * x

    # complex discrete eigenvalues at h lambda = -10: decaying envelope, no monotonicity
    grid = np.arange(31) * 0.01
    states = integrate(AlphaParams(0.5), stiff, [1.0], grid, a0=[0.0]).states[:, 0]
    assert np.all(np.abs(states) <= 1.0)
    assert abs(states[-1]) < 1e-6


def test_constant_solution():
    grid = np.linspace(0.0, 2.0, 21)
    result = integrate(AlphaParams(0.5), lambda t, x: np.zeros_like(x), [3.0, -1.0], grid)
    assert_allclose(result.states, np.tile([3.0, -1.0], (21, 1)))
    assert_allclose(result.aux, 0.0)


def test_trajectory_satisfies_step_residuals():
    def oscillator(t, x):
        return np.array([x[1], -4.0 * x[0] - 0.1 * x[1] + math.sin(t)])

    grid = np.linspace(0.0, 2.0, 41)
    params = AlphaParams(0.5)
    result = integrate(params, oscillator, [1.0, 0.0], grid)
    step = AlphaStep(x_n=result.states[:-1], x_next=result.states[1:], a_n=result.aux[:-1],
                     a_next=result.aux[1:], h=grid[1] - grid[0])
    state, aux = step_residual(params, result.rhs[:-1], result.rhs[1:], step)
    assert np.max(np.abs(state)) < 1e-9
    assert np.max(np.abs(aux)) < 1e-9


def test_failure_reports_grid_index():
    def failing(t, x):
        if t > 0.55:
            raise ValueError("outside the model domain")
        return -x

    with pytest.raises(StepFailureError) as info:
        integrate(AlphaParams(0.5), failing, [1.0], np.linspace(0.0, 1.0, 11), a0=[1.0])
    assert info.value.index == 6
