"""Rollover index R = ((F_Z2 + F_Z4) - (F_Z1 + F_Z3)) / sum(F_Z) and lift-off classification."""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Tuple

import numpy as np

from .errors import UndefinedIndexError
from .vehicle_model import THETA_X

logger = logging.getLogger(__name__)

VERDICT_LABEL = "stabilized (roll-angle proxy)"


def rollover_index(fz1, fz2=None, fz3=None, fz4=None):
    """R from the four vertical reactions, or from one array shaped (..., 4)"""
    if fz2 is None:
        loads = np.asarray(fz1, dtype=float)
    else:
        loads = np.stack(np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (fz1, fz2, fz3, fz4))), axis=-1)
    total = np.sum(loads, axis=-1)
    if np.any(total == 0):
        raise UndefinedIndexError("rollover index undefined: total vertical load is zero")
    index = ((loads[..., 1] + loads[..., 3]) - (loads[..., 0] + loads[..., 2])) / total
    return float(index) if np.ndim(index) == 0 else index


def intervals(times: np.ndarray, mask: np.ndarray) -> List[Tuple[float, float]]:
    """Contiguous [start, end] time spans where ``mask`` holds"""
    spans = []
    start = None
    for t, flag in zip(times, mask):
        if flag and start is None:
            start = t
            last = t
        elif flag:
            last = t
        elif start is not None:
            spans.append((float(start), float(last)))
            start = None
    if start is not None:
        spans.append((float(start), float(last)))
    return spans


@dataclass
class RolloverSeries:
    times: np.ndarray
    index: np.ndarray
    lift_off: np.ndarray = field(init=False)
    summary: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.lift_off = np.abs(self.index) > 1.0

    @property
    def magnitude(self) -> np.ndarray:
        return np.abs(self.index)

    @property
    def stabilized(self) -> bool:
        return bool(self.summary.get("stabilized", False))


def classify(trajectory, theta_cap: float = 0.35) -> RolloverSeries:
    """Rollover series and summary of a trajectory exposing ``times``, ``states`` and ``wheel_loads``.

    The verdict is a roll-angle proxy: max |theta_x| stays below ``theta_cap``
    and, when a wheel lifted off, the terminal roll angle is smaller than the
    roll angle at the peak of |R|.
    """
    times = np.asarray(trajectory.times, dtype=float)
    states = np.asarray(trajectory.states, dtype=float)
    index = np.asarray(rollover_index(np.asarray(trajectory.wheel_loads, dtype=float)))
    series = RolloverSeries(times=times, index=index)

    roll = np.abs(states[:, THETA_X])
    peak = int(np.argmax(np.abs(index)))
    lifted = bool(np.any(series.lift_off))
    stabilized = bool(roll.max() < theta_cap)
    if lifted:
        stabilized = stabilized and bool(roll[-1] < roll[peak])

    series.summary = {
        "max_abs_R": float(np.abs(index).max()),
        "time_of_max_abs_R": float(times[peak]),
        "lift_off": lifted,
        "lift_off_intervals": intervals(times, series.lift_off),
        "max_abs_theta_x": float(roll.max()),
        "terminal_abs_theta_x": float(roll[-1]),
        "theta_cap": theta_cap,
        "stabilized": stabilized,
        "verdict": VERDICT_LABEL if stabilized else "not stabilized (roll-angle proxy)",
    }
    logger.info(f"Rollover: max|R|={series.summary['max_abs_R']:.4f}, lift-off={lifted}, "
                f"max|theta_x|={roll.max():.4f} rad, stabilized={stabilized}")
    return series
