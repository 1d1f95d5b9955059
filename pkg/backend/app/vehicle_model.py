"""
Roll-plane vehicle model: wheel reactions, magic-formula lateral tire forces,
equations of motion, the unactuated reference path and the path constraints
(travel limits, force limits, anti-roll disjunction branches and the
conservative no-lift-off pair).

All functions accept states shaped ``(..., 10)`` and controls shaped
``(..., 2)`` so a whole transcription grid is evaluated in one call.
Constraint-like outputs follow the "<= 0 is feasible" convention.
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np
from scipy.integrate import solve_ivp
from scipy.special import expit

from .errors import (
    DegenerateSpeedError,
    GeometricSingularityError,
    InvalidStateError,
    ReferenceIntegrationError,
    RollSingularityError,
    TireSingularityError,
)
from .schemas import VehicleConfig, WheelLoads

logger = logging.getLogger(__name__)

# canonical state indices
X, Y, Z, THETA_X, THETA_Z, X_DOT, Y_DOT, Z_DOT, THETA_X_DOT, THETA_Z_DOT = range(10)
PLANAR = [X, Y, THETA_Z, X_DOT, Y_DOT, THETA_Z_DOT]

# loads below this are replaced inside the smoothed formula chain
_MIN_EVAL_LOAD = 1.0

Steering = Union[Callable[[float], float], float, np.ndarray]


def _first_bad(mask) -> Optional[int]:
    """Leading index of the first flagged node, None for a single state"""
    mask = np.asarray(mask)
    if mask.ndim == 0:
        return None
    hits = np.argwhere(mask)
    return int(hits[0][0]) if hits.size else None


def _as_state(state) -> np.ndarray:
    s = np.asarray(state, dtype=float)
    if s.shape[-1] != 10:
        raise InvalidStateError(f"state must have 10 components in canonical order, got shape {s.shape}")
    if not np.all(np.isfinite(s)):
        bad = _first_bad(~np.all(np.isfinite(s), axis=-1))
        raise InvalidStateError(f"non-finite state at node {bad}", node=bad)
    return s


def _as_control(control) -> np.ndarray:
    u = np.asarray(control, dtype=float)
    if u.shape[-1] != 2:
        raise InvalidStateError(f"control must be (F_l, F_r), got shape {u.shape}")
    if not np.all(np.isfinite(u)):
        raise InvalidStateError("non-finite control forces")
    return u


def _scalar_or_array(value: np.ndarray):
    return float(value) if np.ndim(value) == 0 else value


def initial_state(cfg: VehicleConfig) -> np.ndarray:
    """Straight run at the nominal ride height and the default entry speed"""
    s = np.zeros(10)
    s[Z] = cfg.z0
    s[X_DOT] = cfg.initial_speed
    return s


def wheel_reactions(cfg: VehicleConfig, state, control) -> np.ndarray:
    """Vertical reactions F_Z1..F_Z4 (front-left, front-right, rear-left, rear-right)"""
    s = _as_state(state)
    u = _as_control(control)
    half = cfg.track / 2.0
    z, th, z_dot, th_dot = s[..., Z], s[..., THETA_X], s[..., Z_DOT], s[..., THETA_X_DOT]

    left = cfg.stiffness * (cfg.z0 - (z + half * th)) - cfg.damping * (z_dot + half * th_dot)
    right = cfg.stiffness * (cfg.z0 - (z - half * th)) - cfg.damping * (z_dot - half * th_dot)
    f_l, f_r = u[..., 0], u[..., 1]
    static = cfg.static_loads
    return np.stack([
        f_l + static[0] + left,
        f_r + static[1] + right,
        f_l + static[2] + left,
        f_r + static[3] + right,
    ], axis=-1)


def _slip_angles(cfg: VehicleConfig, s: np.ndarray, deltas: np.ndarray) -> np.ndarray:
    """Slip angles in degrees for all four wheels; ``deltas`` shaped (..., 4) in radians"""
    x_dot = s[..., X_DOT, None]
    y_dot = s[..., Y_DOT, None]
    th_z = s[..., THETA_Z, None]
    th_z_dot = s[..., THETA_Z_DOT, None]
    numerator = x_dot * np.sin(th_z) - y_dot * np.cos(th_z) - cfg.r_x * th_z_dot
    denominator = x_dot * np.cos(th_z) + y_dot * np.sin(th_z) - cfg.r_y * th_z_dot
    degenerate = np.abs(denominator) < cfg.speed_eps
    if np.any(degenerate):
        bad = _first_bad(np.any(degenerate, axis=-1))
        raise DegenerateSpeedError(
            f"longitudinal wheel speed below {cfg.speed_eps} m/s, slip angle undefined", node=bad
        )
    return np.degrees(-deltas - np.arctan(numerator / denominator))


def slip_angle(cfg: VehicleConfig, state, delta: float, wheel: int) -> float:
    """Slip angle (deg) of wheel ``wheel`` in 1..4 for steer angle ``delta`` (rad)"""
    if wheel not in (1, 2, 3, 4):
        raise ValueError(f"wheel index must be 1..4, got {wheel}")
    s = _as_state(state)
    deltas = np.zeros(s.shape[:-1] + (4,))
    deltas[..., wheel - 1] = delta
    return _scalar_or_array(_slip_angles(cfg, s, deltas)[..., wheel - 1])


def tire_lateral_force(cfg: VehicleConfig, fz, alpha, smoothing_width: Optional[float] = None):
    """Lateral force of one tire for vertical load ``fz`` (N) and slip ``alpha`` (deg).

    Without ``smoothing_width`` the force is exactly zero for ``fz <= 0``. With it,
    the switch becomes the logistic factor ``expit(fz / w)``.
    """
    fz = np.asarray(fz, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    tc = cfg.tire
    loaded = fz > 0
    if smoothing_width is None:
        fz_eval = np.where(loaded, fz, _MIN_EVAL_LOAD)
    else:
        fz_eval = np.maximum(fz, _MIN_EVAL_LOAD)
    fzk = fz_eval / 1000.0

    d = tc.a1 * fzk ** 2 + tc.a2 * fzk
    b_num = tc.a3 * np.sin(tc.a4 * np.arctan(tc.a5 * fzk))
    singular = (d == 0) | (b_num == 0)
    if smoothing_width is None:
        singular = singular & loaded
    if np.any(singular):
        raise TireSingularityError(f"magic-formula peak factor vanishes at load {float(np.min(fz[singular])):.6g} N")
    b = b_num / (tc.c_t * d)
    e = tc.a6 * fzk ** 2 + tc.a7 * fzk + tc.a8
    shifted = alpha + tc.delta_sh
    phi = (1.0 - e) * shifted + (e / b) * np.arctan(b * shifted)
    fy = d * np.sin(tc.c_t * np.arctan(b * phi))

    if smoothing_width is None:
        fy = np.where(loaded, fy, 0.0)
    else:
        fy = fy * expit(fz / smoothing_width)
    return _scalar_or_array(fy)


def _steer_angles(steering: Steering, t, batch_shape) -> np.ndarray:
    delta = steering(t) if callable(steering) else steering
    delta = np.broadcast_to(np.asarray(delta, dtype=float), batch_shape)
    zero = np.zeros(batch_shape)
    return np.stack([delta, delta, zero, zero], axis=-1)


def wheel_loads(cfg: VehicleConfig, state, control, steering: Steering, t=0.0,
                tire_smoothing: Optional[float] = None):
    """(F_Z, F_Y) arrays shaped (..., 4)"""
    s = _as_state(state)
    fz = wheel_reactions(cfg, s, control)
    alpha = _slip_angles(cfg, s, _steer_angles(steering, t, s.shape[:-1]))
    fy = np.asarray(tire_lateral_force(cfg, fz, alpha, tire_smoothing))
    return fz, fy


def wheel_loads_record(cfg: VehicleConfig, state, control, steering: Steering, t=0.0) -> WheelLoads:
    fz, fy = wheel_loads(cfg, state, control, steering, t)
    return WheelLoads(fz=tuple(float(v) for v in fz), fy=tuple(float(v) for v in fy))


def dynamics_rhs(cfg: VehicleConfig, state, control, steering: Steering, t=0.0,
                 tire_smoothing: Optional[float] = None) -> np.ndarray:
    """State derivative [X_dot, Y_dot, Z_dot, thx_dot, thz_dot, X_ddot, Y_ddot, Z_ddot, thx_ddot, thz_ddot]"""
    s = _as_state(state)
    u = _as_control(control)
    th_x = s[..., THETA_X]
    rolled_over = np.abs(th_x) >= math.pi / 2
    if np.any(rolled_over):
        raise RollSingularityError("roll angle reached pi/2", node=_first_bad(rolled_over))

    deltas = _steer_angles(steering, t, s.shape[:-1])
    fz = wheel_reactions(cfg, s, u)
    alpha = _slip_angles(cfg, s, deltas)
    lateral = cfg.friction * np.asarray(tire_lateral_force(cfg, fz, alpha, tire_smoothing))

    th_z = s[..., THETA_Z]
    heading = th_z[..., None] + deltas
    x_ddot = np.sum(lateral * np.sin(heading), axis=-1) / cfg.mass
    y_ddot = np.sum(-lateral * np.cos(heading), axis=-1) / cfg.mass
    th_z_ddot = np.sum(-lateral * np.cos(deltas) * cfg.r_x - lateral * np.sin(deltas) * cfg.r_y,
                       axis=-1) / cfg.inertia_zz

    total = np.sum(fz, axis=-1)
    z = s[..., Z]
    z_ddot = (total - cfg.mass * cfg.gravity) / cfg.mass
    roll_moment = (
        (fz[..., 0] - fz[..., 1] + fz[..., 2] - fz[..., 3]) * cfg.track / 2.0
        + total * z * np.tan(th_x)
        + cfg.mass * z * (y_ddot * np.cos(th_z) - x_ddot * np.sin(th_z))
    )
    th_x_ddot = roll_moment / cfg.inertia_xx

    return np.stack([
        s[..., X_DOT], s[..., Y_DOT], s[..., Z_DOT], s[..., THETA_X_DOT], s[..., THETA_Z_DOT],
        x_ddot, y_ddot, z_ddot, th_x_ddot, th_z_ddot,
    ], axis=-1)


def path_constraint_residuals(cfg: VehicleConfig, state, control, rhs=None) -> np.ndarray:
    """Travel limits (4) then force limits (4), feasible when <= 0"""
    s = _as_state(state)
    u = _as_control(control)
    half = cfg.track / 2.0
    left = s[..., Z] + half * s[..., THETA_X]
    right = s[..., Z] - half * s[..., THETA_X]
    f_l, f_r = u[..., 0], u[..., 1]
    return np.stack([
        left - cfg.z_max,
        right - cfg.z_max,
        cfg.z_min - left,
        cfg.z_min - right,
        f_l - cfg.f_max,
        -f_l - cfg.f_max,
        f_r - cfg.f_max,
        -f_r - cfg.f_max,
    ], axis=-1)


def lateral_load_ratio(cfg: VehicleConfig, state, rhs) -> np.ndarray:
    """(Y_ddot cos thz - X_ddot sin thz) / g"""
    s = _as_state(state)
    rhs = np.asarray(rhs, dtype=float)
    th_z = s[..., THETA_Z]
    return (rhs[..., Y_DOT] * np.cos(th_z) - rhs[..., X_DOT] * np.sin(th_z)) / cfg.gravity


def antiroll_branch_functions(cfg: VehicleConfig, state, control, rhs) -> np.ndarray:
    """(f1_left, f2_left, f1_right, f2_right) of the two anti-roll disjunctions.

    Accelerations are read from ``rhs``, the output of :func:`dynamics_rhs`.
    """
    s = _as_state(state)
    z = s[..., Z]
    too_low = z <= cfg.height_eps
    if np.any(too_low):
        raise GeometricSingularityError(f"Z below {cfg.height_eps} m, T/(2Z) undefined", node=_first_bad(too_low))
    fz = wheel_reactions(cfg, s, control)
    ratio = lateral_load_ratio(cfg, s, rhs)
    lever = cfg.track / (2.0 * z)
    return np.stack([
        -fz[..., 0] - fz[..., 2],
        ratio - lever,
        -fz[..., 1] - fz[..., 3],
        -ratio - lever,
    ], axis=-1)


def conservative_constraints(cfg: VehicleConfig, state, control) -> np.ndarray:
    """(-F_Z1 - F_Z3, -F_Z2 - F_Z4): no wheel may lift off"""
    fz = wheel_reactions(cfg, state, control)
    return np.stack([-fz[..., 0] - fz[..., 2], -fz[..., 1] - fz[..., 3]], axis=-1)


@dataclass
class ReferencePath:
    times: np.ndarray
    states: np.ndarray  # (N, 10), suspension frozen

    @property
    def x(self) -> np.ndarray:
        return self.states[:, X]

    @property
    def y(self) -> np.ndarray:
        return self.states[:, Y]


def _frozen_state(cfg: VehicleConfig, planar: np.ndarray) -> np.ndarray:
    s = np.zeros(planar.shape[:-1] + (10,))
    s[..., PLANAR] = planar
    s[..., Z] = cfg.z0
    return s


def reference_trajectory(cfg: VehicleConfig, steering: Steering, t0: float, tf: float, grid,
                         start: Optional[np.ndarray] = None) -> ReferencePath:
    """Unactuated planar path (X_bar, Y_bar) sampled on ``grid``.

    The suspension is frozen at zero deflection (Z = Z0, theta_x = 0, rates
    zero) and F_l = F_r = 0, so wheel loads equal the static shares.
    """
    grid = np.asarray(grid, dtype=float)
    if not (math.isclose(grid[0], t0, abs_tol=1e-12) and math.isclose(grid[-1], tf, abs_tol=1e-9)):
        raise ReferenceIntegrationError(f"grid [{grid[0]}, {grid[-1]}] does not cover [{t0}, {tf}]")
    s0 = initial_state(cfg) if start is None else np.asarray(start, dtype=float)
    zero_force = np.zeros(2)

    def planar_rhs(t, p):
        return dynamics_rhs(cfg, _frozen_state(cfg, p), zero_force, steering, t)[PLANAR]

    max_step = float(np.min(np.diff(grid))) if grid.size > 1 else np.inf
    logger.info(f"Integrating reference path on [{t0}, {tf}] with {grid.size} samples")
    result = solve_ivp(planar_rhs, (t0, tf), s0[PLANAR], method="DOP853", t_eval=grid,
                       rtol=1e-10, atol=1e-10, max_step=max_step)
    if not result.success:
        logger.error(f"Reference integration failed: {result.message}")
        raise ReferenceIntegrationError(f"reference integration failed: {result.message}")
    return ReferencePath(times=grid.copy(), states=_frozen_state(cfg, result.y.T))
