"""
Sensor-based control synthesis.

The left actuator force is parameterised as

    F_l = phi1 theta_x + phi2 theta_x_dot + phi3 theta_z_dot + phi4 (Z - Z0) + phi5 Z_dot,   F_r = -F_l

and the gains are decision variables of the transcription. After the full
fit the yaw-rate term dominates, so a reduced law with only phi3 is
re-solved. Gains found over a maneuver sweep are stored in a look-up table.
"""

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigError
from .schemas import PhiCoefficients, ScenarioConfig, SimulationSection, SolverOptions, VehicleConfig
from .transcription import TrajectorySolution, phi_terms, solve_scenario

logger = logging.getLogger(__name__)

TERM_NAMES = ("theta_x", "theta_x_dot", "theta_z_dot", "Z-Z0", "Z_dot")
LUT_COLUMNS = ("parameter", "value", "phi3", "status", "objective")

# below this yaw-rate excursion phi3 has no effect on the trajectory
IDENTIFIABILITY_THRESHOLD = 1e-9


def _with_force_mode(scenario: ScenarioConfig, mode: str) -> ScenarioConfig:
    if scenario.force_mode == mode:
        return scenario
    logger.info(f"Switching force mode '{scenario.force_mode}' -> '{mode}' for synthesis")
    return scenario.model_copy(update={"force_mode": mode})


def synthesize(cfg: VehicleConfig, scenario: ScenarioConfig, steering: Callable, simulation: SimulationSection,
               options: SolverOptions, phi_guess: Optional[Sequence[float]] = None,
               trajectory: Optional[dict] = None) -> Tuple[PhiCoefficients, TrajectorySolution]:
    """Solve for all five gains as global decision variables"""
    scenario = _with_force_mode(scenario, "phi-parameterized")
    if phi_guess is not None:
        scenario = scenario.model_copy(update={"phi_guess": tuple(float(p) for p in phi_guess)})
    solution = solve_scenario(cfg, scenario, steering, simulation, options, trajectory)
    phi = PhiCoefficients.from_array(solution.phi)
    logger.info(f"Synthesized gains: {phi.model_dump()}")
    return phi, solution


def resynthesize_phi3(cfg: VehicleConfig, scenario: ScenarioConfig, steering: Callable,
                      simulation: SimulationSection, options: SolverOptions,
                      guess: Optional[float] = None) -> Tuple[float, TrajectorySolution]:
    """Solve the reduced law F_l = phi3 theta_z_dot"""
    scenario = _with_force_mode(scenario, "phi3-only")
    if guess is not None:
        phi_guess = list(scenario.phi_guess)
        phi_guess[2] = float(guess)
        scenario = scenario.model_copy(update={"phi_guess": tuple(phi_guess)})
    solution = solve_scenario(cfg, scenario, steering, simulation, options)
    phi3 = float(solution.phi[2])
    if not identifiable(solution):
        logger.warning("Yaw rate stays at zero: phi3 is unidentifiable for this maneuver")
    logger.info(f"Reduced-law gain phi3 = {phi3:.4f}")
    return phi3, solution


def identifiable(solution) -> bool:
    """Whether the yaw-rate term is excited at all"""
    return bool(np.max(np.abs(solution.states[:, 9])) > IDENTIFIABILITY_THRESHOLD)


@dataclass
class TermMagnitude:
    name: str
    max_abs: float
    rms: float
    rank: int


@dataclass
class Dominance:
    terms: List[TermMagnitude]
    tie: bool

    @property
    def leading(self) -> Optional[str]:
        return None if self.tie else self.terms[0].name

    def as_dict(self) -> dict:
        return {"tie": self.tie, "leading": self.leading,
                "terms": [{"name": t.name, "max_abs": t.max_abs, "rms": t.rms, "rank": t.rank} for t in self.terms]}


def dominant_term(phi, trajectory, cfg: Optional[VehicleConfig] = None) -> Dominance:
    """Per-term max |phi_i * q_i(t)| and RMS over the trajectory, ranked by RMS"""
    cfg = cfg or VehicleConfig()
    gains = phi.to_array() if isinstance(phi, PhiCoefficients) else np.asarray(phi, dtype=float)
    contributions = phi_terms(cfg, trajectory.states) * gains
    max_abs = np.max(np.abs(contributions), axis=0)
    rms = np.sqrt(np.mean(contributions ** 2, axis=0))
    order = np.argsort(-rms, kind="stable")
    terms = [TermMagnitude(TERM_NAMES[i], float(max_abs[i]), float(rms[i]), rank + 1)
             for rank, i in enumerate(order)]
    tie = bool(len(order) > 1 and rms[order[0]] == rms[order[1]])
    return Dominance(terms=terms, tie=tie)


def fit_phi_least_squares(cfg: VehicleConfig, trajectory) -> PhiCoefficients:
    """Gains whose linear combination best approximates the trajectory's F_l"""
    terms = phi_terms(cfg, trajectory.states)
    target = np.asarray(trajectory.controls, dtype=float)[:, 0]
    gains, *_ = np.linalg.lstsq(terms, target, rcond=None)
    logger.info(f"Least-squares gains: {np.array2string(gains, precision=4)}")
    return PhiCoefficients.from_array(gains)


def write_lookup_table(path, rows: Sequence[dict]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=LUT_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow({key: (f"{row[key]:.17g}" if isinstance(row.get(key), float) else row.get(key, ""))
                             for key in LUT_COLUMNS})
    logger.info(f"Wrote {len(rows)} look-up table rows to {path}")
    return path


def read_lookup_table(path) -> List[dict]:
    try:
        with open(path, newline="", encoding="utf-8") as f:
            rows = list(csv.DictReader(f))
    except OSError as e:
        raise ConfigError(f"Cannot read look-up table {path}: {e}", field="validation.lookup_table")
    for row in rows:
        for key in ("value", "phi3", "objective"):
            row[key] = float(row[key]) if row.get(key) not in (None, "") else float("nan")
    return rows


def lookup_phi3(rows: Sequence[dict], key: float) -> float:
    """phi3 at maneuver parameter ``key``, linear between table rows, clamped at the ends"""
    usable = sorted((r["value"], r["phi3"]) for r in rows if np.isfinite(r["phi3"]))
    if not usable:
        raise ConfigError("look-up table has no usable phi3 rows", field="validation.lookup_table")
    values, gains = zip(*usable)
    return float(np.interp(key, values, gains))
