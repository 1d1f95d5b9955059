"""Front-wheel steering profiles delta(t).

Profiles are stored as piecewise-linear breakpoints in degrees and evaluated
in radians. The named library below holds repository conventions; the
maneuver figures they imitate carry no numeric data.
"""

import logging
from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigError
from .schemas import FishhookParams, SteeringSection

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SteeringProfile:
    """Piecewise-linear steer angle of the front wheels; rear wheels are never steered"""

    times: Tuple[float, ...]
    angles_deg: Tuple[float, ...]
    name: str = "custom"

    def __post_init__(self):
        if len(self.times) != len(self.angles_deg) or len(self.times) < 2:
            raise ConfigError("steering profile needs at least two (time, angle) breakpoints", field="steering.breakpoints")
        if np.any(np.diff(self.times) <= 0):
            raise ConfigError("steering breakpoint times must be strictly increasing", field="steering.breakpoints")
        if not np.all(np.isfinite(self.angles_deg)):
            raise ConfigError("steering angles must be finite", field="steering.breakpoints")

    @classmethod
    def from_breakpoints(cls, breakpoints: Sequence[Tuple[float, float]], name: str = "custom") -> "SteeringProfile":
        times = tuple(float(t) for t, _ in breakpoints)
        angles = tuple(float(a) for _, a in breakpoints)
        return cls(times=times, angles_deg=angles, name=name)

    def covers(self, t0: float, tf: float) -> bool:
        return self.times[0] <= t0 and self.times[-1] >= tf

    def angle_deg(self, t):
        return np.interp(t, self.times, self.angles_deg)

    def __call__(self, t):
        """Steer angle in radians (scalar or array)"""
        return np.deg2rad(self.angle_deg(t))

    def scaled(self, amplitude: float = 1.0, time_scale: float = 1.0, name: str = None) -> "SteeringProfile":
        return SteeringProfile(
            times=tuple(t * time_scale for t in self.times),
            angles_deg=tuple(a * amplitude for a in self.angles_deg),
            name=name or self.name,
        )


def straight(t_end: float = 10.0) -> SteeringProfile:
    return SteeringProfile(times=(0.0, t_end), angles_deg=(0.0, 0.0), name="straight")


def fishhook(start: float = 0.1, ramp_time: float = 0.25, peak_deg: float = 6.0, dwell: float = 0.25,
             reversal_time: float = 0.3, reverse_deg: float = -6.0, hold: Optional[float] = None,
             recovery_time: float = 0.3, t_end: float = 10.0, name: str = "fishhook") -> SteeringProfile:
    """Steer to ``peak_deg``, hold for ``dwell`` and counter-steer to ``reverse_deg``.

    The counter-steer is held to the end unless ``hold`` is given, in which
    case the wheel returns to center over ``recovery_time`` after ``hold``.
    """
    t1 = start + ramp_time
    t2 = t1 + dwell
    t3 = t2 + reversal_time
    times = [0.0, start, t1, t2, t3]
    angles = [0.0, 0.0, peak_deg, peak_deg, reverse_deg]
    if hold is None:
        times.append(max(t_end, t3 + 1.0))
        angles.append(reverse_deg)
    else:
        t5 = t3 + hold + recovery_time
        times += [t3 + hold, t5, max(t_end, t5 + 1.0)]
        angles += [reverse_deg, 0.0, 0.0]
    if start == 0.0:
        times, angles = times[1:], angles[1:]
    return SteeringProfile(times=tuple(times), angles_deg=tuple(angles), name=name)


def double_lane_change(start: float = 0.1, period: float = 1.2, amplitude_deg: float = 4.0,
                       t_end: float = 10.0, name: str = "double_lane_change") -> SteeringProfile:
    """Two opposite steer pulses of one ``period`` total, built from linear segments"""
    q = period / 4.0
    times = [0.0, start, start + q / 2, start + q, start + 2 * q, start + 3 * q, start + 3 * q + q / 2,
             start + 4 * q, max(t_end, start + period + 1.0)]
    angles = [0.0, 0.0, amplitude_deg, 0.0, -amplitude_deg, 0.0, amplitude_deg / 2, 0.0, 0.0]
    return SteeringProfile(times=tuple(times), angles_deg=tuple(angles), name=name)


PROFILE_LIBRARY = {
    "straight": lambda: straight(),
    "fishhook": lambda: fishhook(),
    # faster steering rate, counter-steer released after 0.3 s
    "fishhook_fast": lambda: fishhook(ramp_time=0.15, dwell=0.25, reversal_time=0.2, hold=0.3,
                                      name="fishhook_fast"),
    "fishhook_severe": lambda: fishhook(ramp_time=0.15, peak_deg=7.5, dwell=0.2, reversal_time=0.2,
                                        reverse_deg=-7.5, hold=0.3, name="fishhook_severe"),
    # counter-steer held to the end; beyond what the reduced yaw-rate law keeps satisfied
    "fishhook_extreme": lambda: fishhook(ramp_time=0.1, peak_deg=8.5, dwell=0.2, reversal_time=0.12,
                                         reverse_deg=-8.5, name="fishhook_extreme"),
    "double_lane_change": lambda: double_lane_change(),
}


def get_profile(name: str) -> SteeringProfile:
    try:
        return PROFILE_LIBRARY[name]()
    except KeyError:
        raise ConfigError(f"Unknown steering profile '{name}'. Available: {sorted(PROFILE_LIBRARY)}",
                          field="steering.profile")


def fishhook_from_params(params: FishhookParams, name: str = "fishhook") -> SteeringProfile:
    return fishhook(start=params.start, ramp_time=params.ramp_time, peak_deg=params.peak_deg,
                    dwell=params.dwell, reversal_time=params.reversal_time, reverse_deg=params.reverse_deg,
                    hold=params.hold, recovery_time=params.recovery_time, name=name)


def resolve_steering(section: SteeringSection, t0: Optional[float] = None, tf: Optional[float] = None) -> SteeringProfile:
    """Build the profile a config section asks for; with ``t0``/``tf`` the profile must cover the window"""
    if section.breakpoints:
        logger.info(f"Using {len(section.breakpoints)} steering breakpoints from config")
        profile = SteeringProfile.from_breakpoints(section.breakpoints)
    elif section.fishhook is not None:
        logger.info(f"Using parametric fishhook: {section.fishhook.model_dump()}")
        profile = fishhook_from_params(section.fishhook, name="fishhook_params")
    elif section.profile:
        logger.info(f"Using steering profile '{section.profile}'")
        profile = get_profile(section.profile)
    else:
        raise ConfigError("No steering profile, breakpoints or fishhook parameters given", field="steering")
    if t0 is not None and tf is not None:
        check_coverage(profile, t0, tf)
    return profile


def check_coverage(profile: SteeringProfile, t0: float, tf: float) -> SteeringProfile:
    if not profile.covers(t0, tf):
        raise ConfigError(f"steering profile '{profile.name}' spans [{profile.times[0]:g}, {profile.times[-1]:g}] s, "
                          f"which does not cover the time window [{t0:g}, {tf:g}] s", field="steering.breakpoints")
    return profile


def sweep_profile(base: FishhookParams, parameter: str, value: float, mirror_reverse: bool = True) -> SteeringProfile:
    """Fishhook with one parameter replaced; ``peak_deg`` also mirrors the reverse angle when asked"""
    fields: Dict[str, float] = base.model_dump()
    if parameter not in fields:
        raise ConfigError(f"Unknown fishhook parameter '{parameter}'. Available: {sorted(fields)}",
                          field="sweep.parameter")
    fields[parameter] = value
    if parameter == "peak_deg" and mirror_reverse:
        fields["reverse_deg"] = -value
    return fishhook_from_params(FishhookParams(**fields), name=f"fishhook[{parameter}={value:g}]")
