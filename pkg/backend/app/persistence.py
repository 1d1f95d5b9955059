"""Trajectory CSV, JSON run report and plot-script writers."""

import json
import logging
import math
import os
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np

from .errors import ConfigError
from .schemas import STATE_NAMES, RunConfig

logger = logging.getLogger(__name__)

TRAJECTORY_COLUMNS = (
    ("t",) + STATE_NAMES
    + ("F_l", "F_r", "lambda_left", "lambda_right", "f1_left", "f2_left", "f1_right", "f2_right", "R")
    + ("delta_deg", "theta_x_deg", "theta_z_deg")
)


def load_schema() -> Dict[str, Any]:
    """Report schema from backend/schema.json"""
    try:
        schema_path = os.path.normpath(os.path.join(os.path.dirname(os.path.dirname(__file__)), "schema.json"))
        with open(schema_path, "r", encoding="utf-8") as f:
            return json.load(f)
    except Exception as e:
        logger.error(f"Error loading schema: {str(e)}")
        return {}


def report_fields() -> tuple:
    schema = load_schema()
    return tuple(schema.get("report", {}).get("required", ()))


def trajectory_table(trajectory) -> np.ndarray:
    """One row per node in ``TRAJECTORY_COLUMNS`` order.

    ``trajectory`` is a transcription solution or a closed-loop result;
    missing hull weights or rollover values become NaN.
    """
    times = np.asarray(trajectory.times, dtype=float)
    n = times.size
    states = np.asarray(trajectory.states, dtype=float)
    weights = trajectory.hull_weights() if hasattr(trajectory, "hull_weights") else None
    if weights is None:
        weights = np.full((n, 2), np.nan)
    rollover = getattr(trajectory, "rollover", None)
    rollover = np.full(n, np.nan) if rollover is None else np.asarray(rollover, dtype=float)
    return np.column_stack([
        times,
        states,
        np.asarray(trajectory.controls, dtype=float),
        np.asarray(weights, dtype=float),
        np.asarray(trajectory.branch_values, dtype=float),
        rollover,
        np.asarray(trajectory.steering_deg, dtype=float),
        np.degrees(states[:, 3]),
        np.degrees(states[:, 4]),
    ])


def write_trajectory_csv(path, trajectory) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    table = trajectory_table(trajectory)
    np.savetxt(path, table, fmt="%.17g", delimiter=",", header=",".join(TRAJECTORY_COLUMNS), comments="")
    logger.info(f"Wrote {table.shape[0]}-row trajectory to {path}")
    return path


def read_trajectory(path) -> Dict[str, np.ndarray]:
    """Columns of a trajectory CSV keyed by header name"""
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            header = f.readline().strip().split(",")
        table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except (OSError, ValueError) as e:
        logger.error(f"Error reading trajectory {path}: {str(e)}")
        raise ConfigError(f"cannot read trajectory {path}: {e}") from e
    missing = [name for name in ("t",) + STATE_NAMES + ("F_l", "F_r") if name not in header]
    if missing:
        raise ConfigError(f"trajectory {path} lacks columns {missing}")
    return {name: table[:, i].copy() for i, name in enumerate(header)}


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer, int)):
        return int(value)
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if math.isfinite(value) else None
    if hasattr(value, "model_dump"):
        return _jsonable(value.model_dump())
    return value


def build_report(verb: str, config: RunConfig, config_source: Optional[str] = None, **fields) -> Dict[str, Any]:
    """Report dict with the schema's full field set; fields not given are None"""
    names = report_fields()
    unknown = set(fields) - set(names)
    if unknown:
        logger.warning(f"Dropping report fields outside the schema: {sorted(unknown)}")
    report = {name: None for name in names}
    report.update({
        "verb": verb,
        "status": "ok",
        "exit_code": 0,
        "created": datetime.now().strftime("%Y-%m-%d %H:%M:%S"),
        "config_source": config_source,
        "seed": config.seed,
        "simulation": config.simulation,
        "steering": config.steering,
        "scenario": config.scenario,
        "vehicle": config.vehicle,
    })
    report.update({k: v for k, v in fields.items() if k in names})
    return report


def write_report(path, report: Dict[str, Any]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(_jsonable(report), f, indent=2)
    logger.info(f"Wrote report to {path}")
    return path


def read_report(path) -> Dict[str, Any]:
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


PLOT_TEMPLATE = '''"""Figures for {csv_name}; run with python {script_name}"""

import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

here = Path(__file__).resolve().parent
source = here / "{csv_name}"
data = np.genfromtxt(source, delimiter=",", names=True)
t = data["t"]

fig, axes = plt.subplots(2, 2, figsize=(12, 8), sharex=True)

ax = axes[0, 0]
ax.plot(t, data["Z"], label="Z [m]")
ax.plot(t, data["theta_x_deg"], label="theta_x [deg]")
ax.plot(t, data["theta_z_dot"], label="theta_z_dot [rad/s]")
ax.plot(t, data["delta_deg"], "k--", label="steer [deg]")
ax.set_title("States")
ax.legend()

ax = axes[0, 1]
ax.plot(t, data["F_l"], label="F_l")
ax.plot(t, data["F_r"], label="F_r")
ax.set_ylabel("force [N]")
ax.set_title("Active suspension forces")
ax.legend()

ax = axes[1, 0]
ax.plot(t, np.minimum(data["f1_left"] / 1000.0, data["f2_left"]), label="left")
ax.plot(t, np.minimum(data["f1_right"] / 1000.0, data["f2_right"]), label="right")
ax.axhline(0.0, color="k", linewidth=0.8)
ax.set_ylabel("min(f1 [kN], f2)")
ax.set_title("Satisfaction of disjunctive constraints (<= 0 holds)")
ax.legend()

ax = axes[1, 1]
ax.plot(t, data["R"])
ax.axhline(1.0, color="r", linestyle=":")
ax.axhline(-1.0, color="r", linestyle=":")
ax.set_ylabel("R")
ax.set_title("Rollover index")

for ax in axes[1]:
    ax.set_xlabel("t [s]")
fig.tight_layout()
target = here / "{png_name}"
fig.savefig(target, dpi=150)
print(f"Saved {{target}}")
if "--show" in sys.argv:
    plt.show()
'''


def write_plot_script(directory, verb: str, csv_name: str) -> Path:
    """Matplotlib script reproducing states, forces, constraint satisfaction and R from ``csv_name``"""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    script_name = f"plot_{verb}.py"
    path = directory / script_name
    path.write_text(PLOT_TEMPLATE.format(csv_name=csv_name, script_name=script_name,
                                         png_name=f"{Path(csv_name).stem}.png"), encoding="utf-8")
    logger.info(f"Wrote plot script {path}")
    return path
