"""
Closed-loop validation of the reduced law F_l = phi3 theta_z_dot, F_r = -F_l.

The full model is integrated with the exact tire switch. At every node
the anti-roll branch functions are evaluated and a disjunction counts as
satisfied when min(f1, f2) <= tol, with f1 in kN as in the transcription.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from .alpha_method import AlphaIntegrator, AlphaParams
from .errors import RollSingularityError, StepFailureError
from .rollover import intervals, rollover_index
from .schemas import VehicleConfig
from .transcription import KN, control_law
from .vehicle_model import THETA_X, antiroll_branch_functions, dynamics_rhs, initial_state, wheel_reactions

logger = logging.getLogger(__name__)


def rk4_step(rhs: Callable, t: float, x: np.ndarray, h: float) -> np.ndarray:
    k1 = rhs(t, x)
    k2 = rhs(t + h / 2, x + h / 2 * k1)
    k3 = rhs(t + h / 2, x + h / 2 * k2)
    k4 = rhs(t + h, x + h * k3)
    return x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def rk4_integrate(rhs: Callable, x0, grid) -> np.ndarray:
    """Classical fixed-step RK4 on ``grid``"""
    grid = np.asarray(grid, dtype=float)
    states = np.empty((grid.size, np.size(x0)))
    states[0] = x0
    for n in range(grid.size - 1):
        states[n + 1] = rk4_step(rhs, grid[n], states[n], grid[n + 1] - grid[n])
    return states


def single_branch_intervals(times, branch_values, tol: float = 1e-6) -> Dict[str, List[Tuple[float, float]]]:
    """Spans where exactly one branch of a disjunction holds, per side"""
    terms = np.asarray(branch_values, dtype=float).copy()
    terms[:, [0, 2]] /= KN
    holds = terms <= tol
    return {
        "left": intervals(times, holds[:, 0] ^ holds[:, 1]),
        "right": intervals(times, holds[:, 2] ^ holds[:, 3]),
    }


@dataclass
class SimulationResult:
    times: np.ndarray
    states: np.ndarray
    controls: np.ndarray
    wheel_loads: np.ndarray
    branch_values: np.ndarray
    satisfied: np.ndarray        # (N, 2) left / right
    rollover: np.ndarray
    steering_deg: np.ndarray
    phi3: float
    integrator: str
    tolerance: float
    profile: str = "custom"
    rollover_event: Optional[float] = None
    summary: Dict = field(default_factory=dict)

    @property
    def all_satisfied(self) -> bool:
        return bool(np.all(self.satisfied)) and self.rollover_event is None

    def violation_intervals(self) -> Dict[str, List[Tuple[float, float]]]:
        return {"left": intervals(self.times, ~self.satisfied[:, 0]),
                "right": intervals(self.times, ~self.satisfied[:, 1])}

    def single_branch_intervals(self) -> Dict[str, List[Tuple[float, float]]]:
        return single_branch_intervals(self.times, self.branch_values, self.tolerance)

    def max_force(self) -> float:
        return float(np.max(np.abs(self.controls[:, 0])))


def _feedback_rhs(cfg: VehicleConfig, phi3: float, steering: Callable) -> Callable:
    def rhs(t, x):
        return dynamics_rhs(cfg, x, control_law(cfg, phi3, x), steering, t)
    return rhs


def _integrate(cfg: VehicleConfig, rhs: Callable, grid: np.ndarray, integrator: str,
               rho: float) -> Tuple[np.ndarray, Optional[float]]:
    """States on the grid up to the first roll singularity, and its time if one occurred"""
    x = initial_state(cfg)
    states = [x]
    if integrator == "rk4":
        for n in range(grid.size - 1):
            try:
                x = rk4_step(rhs, grid[n], x, grid[n + 1] - grid[n])
            except RollSingularityError:
                return np.array(states), float(grid[n + 1])
            states.append(x)
            if abs(x[THETA_X]) >= math.pi / 2:
                return np.array(states[:-1]), float(grid[n + 1])
        return np.array(states), None

    stepper = AlphaIntegrator(AlphaParams(rho), rhs)
    f, a = stepper.start(grid[0], x)
    for n in range(grid.size - 1):
        try:
            x, a, f = stepper.step(grid[n], x, a, f, grid[n + 1] - grid[n], n + 1)
        except StepFailureError as e:
            if isinstance(e.__cause__, RollSingularityError):
                return np.array(states), float(grid[n + 1])
            raise
        states.append(x)
    return np.array(states), None


def simulate(cfg: VehicleConfig, phi3: float, steering: Callable, grid, integrator: str = "alpha",
             rho: float = 0.5, tol: float = 1e-6, profile: str = "custom") -> SimulationResult:
    """Closed-loop run with F_l = phi3 theta_z_dot, F_r = -F_l"""
    if not math.isfinite(phi3):
        raise ValueError(f"phi3 must be finite, got {phi3}")
    if integrator not in ("alpha", "rk4"):
        raise ValueError(f"unknown integrator '{integrator}'")
    grid = np.asarray(grid, dtype=float)
    logger.info(f"Closed-loop run '{profile}': phi3={phi3:.4f}, {grid.size} nodes, integrator={integrator}")

    states, event = _integrate(cfg, _feedback_rhs(cfg, phi3, steering), grid, integrator, rho)
    times = grid[:states.shape[0]]
    if event is not None:
        logger.warning(f"Roll singularity at t={event:.4f} s: vehicle rolled over")

    deltas = np.array([float(steering(t)) for t in times])
    controls = control_law(cfg, phi3, states)
    rhs = dynamics_rhs(cfg, states, controls, deltas)
    branches = antiroll_branch_functions(cfg, states, controls, rhs)
    terms = branches.copy()
    terms[:, [0, 2]] /= KN
    satisfied = np.stack([np.minimum(terms[:, 0], terms[:, 1]) <= tol,
                          np.minimum(terms[:, 2], terms[:, 3]) <= tol], axis=1)
    loads = wheel_reactions(cfg, states, controls)

    result = SimulationResult(
        times=times, states=states, controls=controls, wheel_loads=loads, branch_values=branches,
        satisfied=satisfied, rollover=np.asarray(rollover_index(loads)), steering_deg=np.degrees(deltas),
        phi3=phi3, integrator=integrator, tolerance=tol, profile=profile, rollover_event=event,
    )
    result.summary = {
        "profile": profile,
        "phi3": phi3,
        "integrator": integrator,
        "all_satisfied": result.all_satisfied,
        "violation_intervals": result.violation_intervals(),
        "single_branch_intervals": result.single_branch_intervals(),
        "max_abs_F_l": result.max_force(),
        "max_abs_R": float(np.max(np.abs(result.rollover))),
        "max_abs_theta_x": float(np.max(np.abs(states[:, THETA_X]))),
        "rollover_event": event,
    }
    logger.info(f"'{profile}': satisfied={result.all_satisfied}, max|F_l|={result.max_force():.1f} N, "
                f"max|R|={result.summary['max_abs_R']:.4f}")
    return result


def compare_modes(cfg: VehicleConfig, phi3_disjunctive: float, phi3_conservative: float, steering: Callable, grid,
                  integrator: str = "alpha", tol: float = 1e-6) -> Dict:
    """Both gains on the same maneuver, side by side"""
    runs = {
        "disjunctive": simulate(cfg, phi3_disjunctive, steering, grid, integrator, tol=tol, profile="disjunctive"),
        "conservative": simulate(cfg, phi3_conservative, steering, grid, integrator, tol=tol, profile="conservative"),
    }
    report = {name: {key: run.summary[key] for key in
                     ("phi3", "max_abs_F_l", "all_satisfied", "max_abs_R", "max_abs_theta_x", "rollover_event")}
              for name, run in runs.items()}
    conservative_force = runs["conservative"].max_force()
    report["force_ratio"] = (runs["disjunctive"].max_force() / conservative_force
                             if conservative_force > 0 else None)
    return report
