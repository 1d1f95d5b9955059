"""
Command-line entry point.

    python -m app.main optimize   --config config_fishhook.yml --out results
    python -m app.main synthesize --config config_fishhook.yml
    python -m app.main validate   --config config_fishhook.yml
    python -m app.main sweep      --config config_sweep.yml
    python -m app.main analyze    --config config_example.yml

Every verb writes ``report.json`` (field set fixed by schema.json), a
trajectory CSV and a plot script into the output directory and exits with
0 on success, 2 on configuration errors, 3 on solver failures and 4 on
model singularities.
"""

import logging
import sys
from concurrent.futures import ProcessPoolExecutor, as_completed
from datetime import datetime
from pathlib import Path
from types import SimpleNamespace
from typing import Callable, Dict, List, Optional

import click
import numpy as np
from tqdm import tqdm

from .closed_loop import compare_modes, simulate
from .config import apply_overrides, load_config
from .errors import ConfigError, RolloverError, SolverFailure, UndefinedIndexError
from .persistence import build_report, read_trajectory, write_plot_script, write_report, write_trajectory_csv
from .rollover import classify
from .schemas import STATE_NAMES, FishhookParams, RunConfig
from .steering import SteeringProfile, check_coverage, get_profile, resolve_steering, sweep_profile
from .synthesis import (
    LUT_COLUMNS,
    dominant_term,
    fit_phi_least_squares,
    lookup_phi3,
    read_lookup_table,
    resynthesize_phi3,
    synthesize,
    write_lookup_table,
)
from .transcription import solve_scenario
from .vehicle_model import wheel_reactions

LOG_FORMAT = '%(asctime)s - %(levelname)s - %(name)s - %(message)s'


# Configure logging with a formatter that marks the start of every run
class CustomFormatter(logging.Formatter):
    def format(self, record):
        formatted_message = super().format(record)
        # On first message of a new run, add separator
        if getattr(self, 'first_message', True):
            now = datetime.now().strftime('%Y-%m-%d %H:%M:%S')
            separator = f"\n\n{'=' * 80}\n{now} - NEW RUN\n{'=' * 80}\n\n"
            self.first_message = False
            return separator + formatted_message
        return formatted_message


logging.basicConfig(
    level=logging.INFO,
    format=LOG_FORMAT,
    handlers=[
        logging.StreamHandler()  # Console handler
    ]
)

logger = logging.getLogger(__name__)


def set_console_level(quiet: bool):
    for handler in logging.getLogger().handlers:
        if type(handler) is logging.StreamHandler:
            handler.setLevel(logging.WARNING if quiet else logging.INFO)


def attach_log_file(out_dir: Path) -> logging.FileHandler:
    """Persistent run log at <out>/logs/rollover.log"""
    log_dir = Path(out_dir) / "logs"
    log_dir.mkdir(parents=True, exist_ok=True)
    file_handler = logging.FileHandler(log_dir / "rollover.log", encoding='utf-8', mode='a')
    formatter = CustomFormatter(LOG_FORMAT)
    formatter.first_message = True
    file_handler.setFormatter(formatter)
    file_handler.setLevel(logging.INFO)
    logging.getLogger().addHandler(file_handler)
    return file_handler


# artifacts


def write_artifacts(out_dir: Path, name: str, trajectory, formats) -> Dict[str, str]:
    artifacts = {}
    if "csv" in formats or "plot" in formats:
        csv_path = write_trajectory_csv(out_dir / f"{name}.csv", trajectory)
        artifacts[f"{name}_csv"] = csv_path.name
        if "plot" in formats:
            artifacts[f"{name}_plot"] = write_plot_script(out_dir, name, csv_path.name).name
    return artifacts


def solver_summary(solution) -> dict:
    return solution.report.model_dump(exclude={"merit_history"})


def rollover_summary(trajectory, theta_cap: float) -> Optional[dict]:
    try:
        return classify(trajectory, theta_cap).summary
    except UndefinedIndexError as e:
        logger.warning(f"Rollover index not available: {e}")
        return None


def solution_status(*solutions) -> tuple:
    """(status, exit code) of one or more transcription solves"""
    for solution in solutions:
        if not solution.converged:
            return solution.report.status, 3
    return "ok", 0


# runs


def run_optimize(config: RunConfig, out_dir: Path, source: Optional[str] = None) -> dict:
    steering = resolve_steering(config.steering, config.simulation.t0, config.simulation.tf)
    trajectory = None
    if config.scenario.initial_guess.kind == "trajectory":
        trajectory = read_trajectory(config.scenario.initial_guess.path)
    solution = solve_scenario(config.vehicle, config.scenario, steering, config.simulation, config.solver, trajectory)
    artifacts = write_artifacts(out_dir, "optimize", solution, config.output.formats)
    status, exit_code = solution_status(solution)
    return build_report(
        "optimize", config, source,
        status=status, exit_code=exit_code, message=solution.report.message,
        solver=solver_summary(solution),
        objective=solution.objective,
        phi=None if solution.phi is None else dict(zip(("phi1", "phi2", "phi3", "phi4", "phi5"), solution.phi)),
        rollover=rollover_summary(solution, config.analysis.theta_cap),
        artifacts=artifacts,
    )


def run_synthesize(config: RunConfig, out_dir: Path, source: Optional[str] = None) -> dict:
    steering = resolve_steering(config.steering, config.simulation.t0, config.simulation.tf)
    args = (config.vehicle, config.scenario, steering, config.simulation, config.solver)
    phi, full = synthesize(*args)
    dominance = dominant_term(phi, full, config.vehicle)
    logger.info(f"Leading term by RMS: {dominance.leading}")
    phi3, reduced = resynthesize_phi3(*args, guess=phi.phi3)

    artifacts = write_artifacts(out_dir, "synthesize", full, config.output.formats)
    artifacts.update(write_artifacts(out_dir, "synthesize_phi3", reduced, config.output.formats))
    status, exit_code = solution_status(full, reduced)
    return build_report(
        "synthesize", config, source,
        status=status, exit_code=exit_code, message=reduced.report.message,
        solver=solver_summary(reduced),
        objective=reduced.objective,
        phi=phi, phi3=phi3,
        dominance=dominance.as_dict(),
        rollover=rollover_summary(reduced, config.analysis.theta_cap),
        artifacts=artifacts,
    )


def validation_gain(config: RunConfig) -> float:
    section = config.validation
    if section.lookup_table:
        if section.lookup_key is None:
            raise ConfigError("lookup_table needs a lookup_key", field="validation.lookup_key")
        phi3 = lookup_phi3(read_lookup_table(section.lookup_table), section.lookup_key)
        logger.info(f"phi3 = {phi3:.4f} from look-up table {section.lookup_table} at {section.lookup_key:g}")
        return phi3
    if section.phi3 is None:
        raise ConfigError("no gain to validate: set phi3 or lookup_table", field="validation.phi3")
    return section.phi3


def validation_grid(config: RunConfig) -> np.ndarray:
    t0, tf = config.simulation.t0, config.simulation.tf
    steps = max(int(round((tf - t0) / config.validation.step)), 1)
    return np.linspace(t0, tf, steps + 1)


def validation_profiles(config: RunConfig) -> List[SteeringProfile]:
    """The configured maneuver first, then the library profiles not already covered by it"""
    t0, tf = config.simulation.t0, config.simulation.tf
    profiles = [resolve_steering(config.steering, t0, tf)]
    for name in config.validation.profiles:
        if name != profiles[0].name:
            profiles.append(check_coverage(get_profile(name), t0, tf))
    return profiles


def run_validate(config: RunConfig, out_dir: Path, source: Optional[str] = None) -> dict:
    section = config.validation
    phi3 = validation_gain(config)
    grid = validation_grid(config)
    profiles = validation_profiles(config)

    summaries, artifacts = [], {}
    for profile in profiles:
        result = simulate(config.vehicle, phi3, profile, grid, section.integrator, rho=config.simulation.rho,
                          tol=section.tolerance, profile=profile.name)
        summaries.append(result.summary)
        artifacts.update(write_artifacts(out_dir, f"validate_{profile.name}", result, config.output.formats))

    comparison = None
    if section.phi3_conservative is not None:
        comparison = compare_modes(config.vehicle, phi3, section.phi3_conservative, profiles[0], grid,
                                   section.integrator, section.tolerance)

    violated = [s["profile"] for s in summaries if not s["all_satisfied"]]
    if violated:
        logger.warning(f"Disjunctions violated on: {violated}")
    return build_report(
        "validate", config, source,
        status="ok" if not violated else "violations",
        message=None if not violated else f"violations on {', '.join(violated)}",
        phi3=phi3, validation=summaries, comparison=comparison, artifacts=artifacts,
    )


def sweep_member(config: RunConfig, value: float, member_dir: str) -> dict:
    """One look-up table row; runs in a worker process"""
    section = config.sweep
    base = config.steering.fishhook or FishhookParams()
    row = {"parameter": section.parameter, "value": float(value), "phi3": float("nan"),
           "status": "error", "objective": float("nan")}
    try:
        steering = sweep_profile(base, section.parameter, value, section.mirror_reverse)
        phi3, solution = resynthesize_phi3(config.vehicle, config.scenario, steering, config.simulation,
                                           config.solver)
        write_artifacts(Path(member_dir), "sweep_member", solution, config.output.formats)
        row.update(phi3=phi3, status=solution.report.status, objective=solution.objective)
    except RolloverError as e:
        logger.error(f"Sweep member {section.parameter}={value:g} failed: {e}")
    return row


def run_sweep(config: RunConfig, out_dir: Path, source: Optional[str] = None) -> dict:
    section = config.sweep
    if section.profile != "fishhook":
        raise ConfigError(f"sweeps run over the fishhook family, got '{section.profile}'", field="sweep.profile")
    sweep_profile(config.steering.fishhook or FishhookParams(), section.parameter, section.values[0])

    members = [(value, str(out_dir / f"{section.parameter}_{value:g}")) for value in section.values]
    rows: List[dict] = []
    if section.parallelism == 1:
        for value, member_dir in tqdm(members, desc="sweep"):
            rows.append(sweep_member(config, value, member_dir))
    else:
        with ProcessPoolExecutor(max_workers=section.parallelism) as executor:
            futures = [executor.submit(sweep_member, config, value, member_dir) for value, member_dir in members]
            for future in tqdm(as_completed(futures), total=len(futures), desc="sweep"):
                rows.append(future.result())
    rows.sort(key=lambda row: row["value"])

    table = write_lookup_table(out_dir / "lookup_table.csv", rows)
    failed = [row["value"] for row in rows if row["status"] != "converged"]
    return build_report(
        "sweep", config, source,
        status="ok" if not failed else "partial",
        exit_code=0 if not failed else 3,
        message=None if not failed else f"members without convergence: {failed}",
        sweep=[{key: row[key] for key in LUT_COLUMNS} for row in rows],
        artifacts={"lookup_table": table.name},
    )


def run_analyze(config: RunConfig, out_dir: Path, source: Optional[str] = None) -> dict:
    if not config.analysis.trajectory:
        raise ConfigError("analyze needs a trajectory CSV", field="analysis.trajectory")
    columns = read_trajectory(config.analysis.trajectory)
    states = np.stack([columns[name] for name in STATE_NAMES], axis=1)
    controls = np.stack([columns["F_l"], columns["F_r"]], axis=1)
    trajectory = SimpleNamespace(times=columns["t"], states=states, controls=controls,
                                 wheel_loads=wheel_reactions(config.vehicle, states, controls))
    phi = fit_phi_least_squares(config.vehicle, trajectory)
    return build_report(
        "analyze", config, source,
        rollover=rollover_summary(trajectory, config.analysis.theta_cap),
        phi=phi, phi3=phi.phi3,
        dominance=dominant_term(phi, trajectory, config.vehicle).as_dict(),
    )


RUNS: Dict[str, Callable] = {
    "optimize": run_optimize,
    "synthesize": run_synthesize,
    "validate": run_validate,
    "sweep": run_sweep,
    "analyze": run_analyze,
}


def execute(verb: str, config_path: Optional[str], out: Optional[str], seed: Optional[int], quiet: bool) -> int:
    """Load the config, run ``verb``, write the report; returns the exit code"""
    set_console_level(quiet)
    out_dir = Path(out) if out else None
    file_handler = None
    config = None
    try:
        config = apply_overrides(load_config(config_path), out=out, seed=seed)
        out_dir = Path(config.output.directory)
        out_dir.mkdir(parents=True, exist_ok=True)
        file_handler = attach_log_file(out_dir)
        logger.info(f"Running '{verb}' into {out_dir} (seed {config.seed})")
        np.random.seed(config.seed)
        report = RUNS[verb](config, out_dir, config_path)
    except RolloverError as e:
        logger.error(f"'{verb}' failed: {e}")
        out_dir = out_dir or Path(RunConfig().output.directory)
        report = build_report(verb, config or RunConfig(), config_path, status="error",
                              exit_code=e.exit_code, message=str(e))
    except Exception as e:
        logger.error(f"'{verb}' failed unexpectedly: {e}", exc_info=True)
        out_dir = out_dir or Path(RunConfig().output.directory)
        report = build_report(verb, config or RunConfig(), config_path, status="error",
                              exit_code=SolverFailure.exit_code, message=f"{type(e).__name__}: {e}")
    finally:
        if file_handler is not None:
            logging.getLogger().removeHandler(file_handler)
            file_handler.close()

    write_report(out_dir / "report.json", report)
    if report["exit_code"]:
        logger.error(f"'{verb}' finished with status '{report['status']}' (exit {report['exit_code']})")
    else:
        logger.info(f"'{verb}' finished with status '{report['status']}'")
    return report["exit_code"]


def run_options(func):
    func = click.option("--quiet", is_flag=True, help="Only warnings and errors on the console")(func)
    func = click.option("--seed", type=int, default=None, help="Seed for randomized utilities")(func)
    func = click.option("--out", "out", type=click.Path(file_okay=False), default=None,
                        help="Output directory (overrides output.directory)")(func)
    func = click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None,
                        help="YAML run configuration")(func)
    return func


@click.group()
def cli():
    """Rollover-preventive active suspension: trajectory optimization, control synthesis and validation."""


def _command(verb: str, help_text: str):
    @cli.command(name=verb, help=help_text)
    @run_options
    def command(config_path, out, seed, quiet):
        sys.exit(execute(verb, config_path, out, seed, quiet))
    return command


optimize = _command("optimize", "Solve the optimal control problem of the configured scenario.")
synthesize_cmd = _command("synthesize", "Fit the sensor-based gains and the reduced phi3 law.")
validate = _command("validate", "Closed-loop simulation of a phi3 gain on steering profiles.")
sweep = _command("sweep", "phi3 over a fishhook parameter grid, written as a look-up table.")
analyze = _command("analyze", "Rollover index and gain fit of a stored trajectory CSV.")


if __name__ == "__main__":
    cli()
