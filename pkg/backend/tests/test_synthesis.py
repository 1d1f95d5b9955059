from types import SimpleNamespace

import numpy as np
import pytest
from numpy.testing import assert_allclose

from app.errors import ConfigError
from app.schemas import PhiCoefficients, ScenarioConfig, SimulationSection, SolverOptions
from app.steering import fishhook
from app.synthesis import (
    dominant_term,
    fit_phi_least_squares,
    identifiable,
    lookup_phi3,
    read_lookup_table,
    resynthesize_phi3,
    synthesize,
    write_lookup_table,
)
from app.transcription import phi_terms


def synthetic_trajectory(cfg, rng, n=200):
    states = np.zeros((n, 10))
    states[:, 2] = cfg.z0 + 0.01 * rng.normal(size=n)
    states[:, 3] = 0.02 * rng.normal(size=n)
    states[:, 7] = 0.05 * rng.normal(size=n)
    states[:, 8] = 0.1 * rng.normal(size=n)
    states[:, 9] = 0.3 * rng.normal(size=n)
    return SimpleNamespace(states=states)


def test_least_squares_recovers_gains(cfg, rng):
    trajectory = synthetic_trajectory(cfg, rng)
    gains = np.array([120.0, -35.0, -4796.2, 800.0, 15.0])
    f_l = phi_terms(cfg, trajectory.states) @ gains
    trajectory.controls = np.stack([f_l, -f_l], axis=1)
    phi = fit_phi_least_squares(cfg, trajectory)
    assert_allclose(phi.to_array(), gains, rtol=1e-8)


def test_yaw_rate_term_dominates(cfg, rng):
    trajectory = synthetic_trajectory(cfg, rng)
    phi = PhiCoefficients(phi1=100.0, phi2=10.0, phi3=-4796.2, phi4=500.0, phi5=20.0)
    dominance = dominant_term(phi, trajectory, cfg)
    assert dominance.leading == "theta_z_dot"
    assert [t.rank for t in dominance.terms] == [1, 2, 3, 4, 5]
    assert dominance.as_dict()["terms"][0]["name"] == "theta_z_dot"


def test_equal_contributions_are_a_tie(cfg):
    states = np.zeros((4, 10))
    states[:, 2] = cfg.z0
    states[:, 3] = [0.1, -0.1, 0.1, -0.1]
    states[:, 8] = [0.1, -0.1, 0.1, -0.1]
    dominance = dominant_term([1.0, 1.0, 0.0, 0.0, 0.0], SimpleNamespace(states=states), cfg)
    assert dominance.tie
    assert dominance.leading is None


def test_identifiable():
    states = np.zeros((5, 10))
    assert not identifiable(SimpleNamespace(states=states))
    states[2, 9] = 0.01
    assert identifiable(SimpleNamespace(states=states))


def test_lookup_table_round_trip(tmp_path):
    rows = [
        {"parameter": "peak_deg", "value": 5.0, "phi3": -4500.0, "status": "converged", "objective": 0.1},
        {"parameter": "peak_deg", "value": 7.0, "phi3": -5100.0, "status": "converged", "objective": 0.2},
        {"parameter": "peak_deg", "value": 6.0, "phi3": float("nan"), "status": "failed", "objective": None},
    ]
    path = write_lookup_table(tmp_path / "lut" / "lookup_table.csv", rows)
    loaded = read_lookup_table(path)
    assert [r["value"] for r in loaded] == [5.0, 7.0, 6.0]
    assert loaded[1]["phi3"] == -5100.0
    assert np.isnan(loaded[2]["objective"])
    assert lookup_phi3(loaded, 6.0) == pytest.approx(-4800.0)
    assert lookup_phi3(loaded, 4.0) == -4500.0
    assert lookup_phi3(loaded, 9.0) == -5100.0


def test_lookup_table_errors(tmp_path):
    with pytest.raises(ConfigError):
        read_lookup_table(tmp_path / "missing.csv")
    with pytest.raises(ConfigError):
        lookup_phi3([{"value": 1.0, "phi3": float("nan")}], 1.0)


@pytest.mark.slow
def test_synthesis_on_fishhook(cfg):
    simulation = SimulationSection(n_nodes=121)
    options = SolverOptions(engine="trust-constr", max_iter=3000)
    phi, full = synthesize(cfg, ScenarioConfig(), fishhook(), simulation, options)
    assert full.converged, full.report.message
    assert dominant_term(phi, full, cfg).leading == "theta_z_dot"

    phi3, reduced = resynthesize_phi3(cfg, ScenarioConfig(), fishhook(), simulation, options, guess=phi.phi3)
    assert reduced.converged, reduced.report.message
    assert reduced.scenario.force_mode == "phi3-only"
    assert np.array_equal(reduced.controls[:, 0], -reduced.controls[:, 1])
    assert -7200.0 <= phi3 <= -2400.0
