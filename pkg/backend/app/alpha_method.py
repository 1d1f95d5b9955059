"""
Implicit one-step alpha-method for first-order systems x' = f(t, x).

With gamma = 2/(rho+1) - 1/2, beta = 1/(rho+1)^2 and q = beta/gamma one step reads

    x1 = x0 + (1 - q) h f0 + q h f1 + (1/2 - q) h^2 a0
    a1 = (f1 - f0) / (h gamma) + (1 - 1/gamma) a0

where ``a`` is an auxiliary acceleration-like variable. ``rho`` in [0, 1)
sets the high-frequency damping. ``step_residual`` is vectorised over a
leading interval axis and is reused by the transcription defects.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .errors import AlphaParameterError, RolloverError, StepError, StepFailureError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AlphaParams:
    rho: float = 0.5

    def __post_init__(self):
        if not (0.0 <= self.rho < 1.0):
            raise AlphaParameterError(f"rho must lie in [0, 1), got {self.rho}")

    @property
    def gamma(self) -> float:
        return 2.0 / (self.rho + 1.0) - 0.5

    @property
    def beta(self) -> float:
        return 1.0 / (self.rho + 1.0) ** 2

    @property
    def q(self) -> float:
        return self.beta / self.gamma


def alpha_params(rho: float) -> Tuple[float, float]:
    """(gamma, beta) for ``rho`` in [0, 1)"""
    params = AlphaParams(rho)
    return params.gamma, params.beta


@dataclass
class AlphaStep:
    """One step (or a stack of steps along a leading axis) of the recursion"""

    x_n: np.ndarray
    x_next: np.ndarray
    a_n: np.ndarray
    a_next: np.ndarray
    h: float


def step_residual(params: AlphaParams, f_n, f_next, step: AlphaStep) -> Tuple[np.ndarray, np.ndarray]:
    """(state residual, auxiliary residual); both vanish at a valid step"""
    h = np.asarray(step.h, dtype=float)
    if np.any(h <= 0):
        raise StepError(f"step size must be positive, got {h}")
    if h.ndim:
        h = h[..., None]
    f_n = np.asarray(f_n, dtype=float)
    f_next = np.asarray(f_next, dtype=float)
    q, gamma = params.q, params.gamma
    a_n = np.asarray(step.a_n, dtype=float)

    state = step.x_next - step.x_n - (1.0 - q) * h * f_n - q * h * f_next - (0.5 - q) * h ** 2 * a_n
    auxiliary = step.a_next - (f_next - f_n) / (h * gamma) - (1.0 - 1.0 / gamma) * a_n
    return state, auxiliary


@dataclass
class AlphaTrajectory:
    times: np.ndarray
    states: np.ndarray
    aux: np.ndarray
    rhs: np.ndarray  # f at every node


Rhs = Callable[[float, np.ndarray], np.ndarray]


class AlphaIntegrator:
    """Fixed-grid alpha-method integrator with a Newton solve per step"""

    def __init__(self, params: AlphaParams, rhs: Rhs, tol: float = 1e-10, max_newton: int = 50,
                 fd_step: float = 1e-6):
        self.params = params
        self.rhs = rhs
        self.tol = tol
        self.max_newton = max_newton
        self.fd_step = fd_step

    def _eval(self, t: float, x: np.ndarray, index: int) -> np.ndarray:
        try:
            value = np.atleast_1d(np.asarray(self.rhs(t, x), dtype=float))
        except (RolloverError, ArithmeticError, ValueError) as e:
            logger.error(f"Right-hand side failed at t={t:.6g}: {e}")
            raise StepFailureError(f"right-hand side failed: {e}", index) from e
        if not np.all(np.isfinite(value)):
            raise StepFailureError(f"non-finite right-hand side at t={t:.6g}", index)
        return value

    def _jacobian(self, t: float, y: np.ndarray, f_y: np.ndarray, index: int) -> np.ndarray:
        jac = np.empty((y.size, y.size))
        for j in range(y.size):
            eps = self.fd_step * (1.0 + abs(y[j]))
            shifted = y.copy()
            shifted[j] += eps
            jac[:, j] = (self._eval(t, shifted, index) - f_y) / eps
        return jac

    def initial_aux(self, t0: float, x0: np.ndarray, f0: np.ndarray) -> np.ndarray:
        """a0 ~ df/dt at t0 by a forward difference along the flow"""
        eps = self.fd_step
        return (self._eval(t0 + eps, x0 + eps * f0, 0) - f0) / eps

    def start(self, t0: float, x0: np.ndarray, a0: Optional[np.ndarray] = None) -> Tuple[np.ndarray, np.ndarray]:
        """(f0, a0) at the first node; a0 from the flow unless given"""
        f = self._eval(t0, x0, 0)
        a = self.initial_aux(t0, x0, f) if a0 is None else np.atleast_1d(np.array(a0, dtype=float))
        return f, a

    def step(self, t: float, x: np.ndarray, a: np.ndarray, f: np.ndarray, h: float,
             index: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Advance one step of size ``h``; ``index`` is the grid index reached"""
        if h <= 0:
            raise StepError(f"step size must be positive, got {h}")
        q, gamma = self.params.q, self.params.gamma
        t_next = t + h
        known = x + (1.0 - q) * h * f + (0.5 - q) * h ** 2 * a
        y = x + h * f
        identity = np.eye(x.size)

        for _ in range(self.max_newton):
            f_y = self._eval(t_next, y, index)
            residual = y - known - q * h * f_y
            scale = 1.0 + np.max(np.abs(y))
            if np.max(np.abs(residual)) <= self.tol * scale:
                break
            lu = lu_factor(identity - q * h * self._jacobian(t_next, y, f_y, index))
            delta = lu_solve(lu, -residual)
            y = y + delta
            if np.max(np.abs(delta)) <= self.tol * scale:
                f_y = self._eval(t_next, y, index)
                break
        else:
            logger.error(f"Newton iteration stalled at grid index {index}")
            raise StepFailureError(f"Newton iteration did not converge in {self.max_newton} iterations", index)

        a_next = (f_y - f) / (h * gamma) + (1.0 - 1.0 / gamma) * a
        return y, a_next, f_y

    def integrate(self, x0, grid, a0: Optional[np.ndarray] = None) -> AlphaTrajectory:
        grid = np.asarray(grid, dtype=float)
        if grid.ndim != 1 or grid.size < 2 or np.any(np.diff(grid) <= 0):
            raise StepError("grid must be strictly increasing with at least two points")
        x = np.atleast_1d(np.array(x0, dtype=float))
        f, a = self.start(grid[0], x, a0)

        states = np.empty((grid.size, x.size))
        aux = np.empty_like(states)
        rhs = np.empty_like(states)
        states[0], aux[0], rhs[0] = x, a, f
        for n in range(grid.size - 1):
            x, a, f = self.step(grid[n], x, a, f, grid[n + 1] - grid[n], n + 1)
            states[n + 1], aux[n + 1], rhs[n + 1] = x, a, f
        return AlphaTrajectory(times=grid.copy(), states=states, aux=aux, rhs=rhs)


def integrate(params: AlphaParams, rhs: Rhs, x0, grid, a0: Optional[np.ndarray] = None) -> AlphaTrajectory:
    return AlphaIntegrator(params, rhs).integrate(x0, grid, a0)
