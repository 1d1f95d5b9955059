"""
Direct transcription of the roll-stabilisation optimal control problem.

Decision vector, node by node::

    [x_n (10), a_n (10), F_l,n F_r,n (free / anti-symmetric), lam_left,n lam_right,n (disjunctive)]

followed by the global gains (five for ``phi-parameterized``, one for
``phi3-only``). Equality rows are the initial condition, the start
condition on a_0, the alpha-method defects of every interval and, in
anti-symmetric mode, F_l + F_r = 0. Inequality rows are node-local: travel
limits, force limits of the phi modes, and either the two hull rows or the
two no-lift-off rows. Force-type branch functions enter those rows in kN.
"""

import logging
from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional, Tuple

import numpy as np
import scipy.sparse as sp

from .alpha_method import AlphaParams, AlphaStep, step_residual
from .disjunction import feasible_weight
from .errors import BuildError, EvaluationError, ModelSingularityError, RolloverError
from .nlp_solver import NlpProblem, get_solver
from .rollover import rollover_index
from .schemas import STATE_NAMES, ScenarioConfig, SimulationSection, SolveReport, SolverOptions, VehicleConfig
from .vehicle_model import (
    THETA_X,
    THETA_X_DOT,
    THETA_Z_DOT,
    X,
    Y,
    Z,
    Z_DOT,
    ReferencePath,
    antiroll_branch_functions,
    conservative_constraints,
    dynamics_rhs,
    initial_state,
    path_constraint_residuals,
    reference_trajectory,
    wheel_reactions,
)

logger = logging.getLogger(__name__)

KN = 1000.0
FD_STEP = 1e-6

# characteristic magnitudes used to scale the NLP
STATE_SCALE = np.array([10.0, 10.0, 1.0, 0.1, 0.1, 10.0, 1.0, 0.1, 1.0, 1.0])
AUX_SCALE = np.array([10.0, 10.0, 1.0, 1.0, 1.0, 10.0, 10.0, 10.0, 10.0, 10.0])
FORCE_SCALE = 1000.0
PHI_SCALE = 1000.0
TRAVEL_SCALE = 0.1


@dataclass(frozen=True)
class Grid:
    t0: float
    tf: float
    n: int

    def __post_init__(self):
        if self.n < 2:
            raise BuildError(f"grid needs at least two nodes, got {self.n}")
        if self.tf <= self.t0:
            raise BuildError(f"grid end {self.tf} must exceed start {self.t0}")

    @property
    def h(self) -> float:
        return (self.tf - self.t0) / (self.n - 1)

    @property
    def times(self) -> np.ndarray:
        return np.linspace(self.t0, self.tf, self.n)

    @classmethod
    def from_times(cls, times) -> "Grid":
        times = np.asarray(times, dtype=float)
        grid = cls(float(times[0]), float(times[-1]), int(times.size))
        if not np.allclose(times, grid.times, rtol=0.0, atol=1e-9 * max(1.0, abs(grid.tf))):
            raise BuildError("reference samples are not on a uniform grid")
        return grid

    @classmethod
    def from_simulation(cls, section: SimulationSection) -> "Grid":
        return cls(section.t0, section.tf, section.n_nodes)


class Parts(NamedTuple):
    states: np.ndarray
    aux: np.ndarray
    controls: Optional[np.ndarray]
    weights: Optional[np.ndarray]
    phi: Optional[np.ndarray]


@dataclass(frozen=True)
class Layout:
    n_nodes: int
    n_controls: int = 2
    n_weights: int = 2
    n_phi: int = 0

    @classmethod
    def for_scenario(cls, n_nodes: int, scenario: ScenarioConfig) -> "Layout":
        n_phi = {"phi-parameterized": 5, "phi3-only": 1}.get(scenario.force_mode, 0)
        return cls(
            n_nodes=n_nodes,
            n_controls=0 if scenario.uses_phi else 2,
            n_weights=2 if scenario.constraint_mode == "disjunctive" else 0,
            n_phi=n_phi,
        )

    @property
    def per_node(self) -> int:
        return 20 + self.n_controls + self.n_weights

    @property
    def size(self) -> int:
        return self.n_nodes * self.per_node + self.n_phi

    @property
    def phi_offset(self) -> int:
        return self.n_nodes * self.per_node

    def columns(self, offset: int) -> np.ndarray:
        """Column of per-node slot ``offset`` at every node"""
        return np.arange(self.n_nodes) * self.per_node + offset

    def pack(self, states, aux, controls=None, weights=None, phi=None) -> np.ndarray:
        blocks = [np.asarray(states, dtype=float), np.asarray(aux, dtype=float)]
        if self.n_controls:
            blocks.append(np.asarray(controls, dtype=float).reshape(self.n_nodes, 2))
        if self.n_weights:
            blocks.append(np.asarray(weights, dtype=float).reshape(self.n_nodes, 2))
        z = np.concatenate(blocks, axis=1).ravel()
        if self.n_phi:
            z = np.concatenate([z, np.asarray(phi, dtype=float).reshape(self.n_phi)])
        return z

    def unpack(self, z) -> Parts:
        z = np.asarray(z, dtype=float)
        if z.shape != (self.size,):
            raise BuildError(f"decision vector has shape {z.shape}, expected ({self.size},)")
        nodes = z[:self.phi_offset].reshape(self.n_nodes, self.per_node)
        controls = nodes[:, 20:22] if self.n_controls else None
        start = 20 + self.n_controls
        weights = nodes[:, start:start + 2] if self.n_weights else None
        phi = z[self.phi_offset:] if self.n_phi else None
        return Parts(nodes[:, :10], nodes[:, 10:20], controls, weights, phi)


def phi_terms(cfg: VehicleConfig, states) -> np.ndarray:
    """Sensed quantities (theta_x, theta_x_dot, theta_z_dot, Z - Z0, Z_dot), shaped (..., 5)"""
    s = np.asarray(states, dtype=float)
    return np.stack([s[..., THETA_X], s[..., THETA_X_DOT], s[..., THETA_Z_DOT], s[..., Z] - cfg.z0,
                     s[..., Z_DOT]], axis=-1)


def expand_phi(phi) -> np.ndarray:
    """Five gains from either five or the single theta_z_dot gain"""
    phi = np.atleast_1d(np.asarray(phi, dtype=float))
    if phi.size == 1:
        return np.array([0.0, 0.0, phi[0], 0.0, 0.0])
    return phi.reshape(5)


def control_law(cfg: VehicleConfig, phi, states) -> np.ndarray:
    """(F_l, F_r) with F_l = phi . terms and F_r = -F_l"""
    f_l = phi_terms(cfg, states) @ expand_phi(phi)
    return np.stack([f_l, -f_l], axis=-1)


@dataclass
class TrajectorySolution:
    times: np.ndarray
    states: np.ndarray
    aux: np.ndarray
    controls: np.ndarray
    weights: Optional[np.ndarray]
    branch_values: np.ndarray    # (N, 4): f1_left, f2_left, f1_right, f2_right; f1 in N
    path_residuals: np.ndarray   # (N, 8)
    wheel_loads: np.ndarray      # (N, 4)
    steering_deg: np.ndarray
    objective: float
    report: SolveReport
    scenario: ScenarioConfig
    equality_violation: float = 0.0
    phi: Optional[np.ndarray] = None
    rollover: Optional[np.ndarray] = None

    @property
    def converged(self) -> bool:
        return self.report.converged

    def hull_terms(self) -> np.ndarray:
        """Branch values on the solver's scale (force-type branches in kN)"""
        values = self.branch_values.copy()
        values[:, [0, 2]] /= KN
        return values

    def canonical_weights(self) -> np.ndarray:
        """Weight on the first branch per node from the most-negative rule; NaN where no weight certifies"""
        terms = self.hull_terms()
        out = np.full((terms.shape[0], 2), np.nan)
        for n, row in enumerate(terms):
            for side in range(2):
                lam = feasible_weight(row[2 * side:2 * side + 2])
                if lam is not None:
                    out[n, side] = lam[0]
        return out

    def hull_weights(self) -> np.ndarray:
        return self.weights if self.weights is not None else self.canonical_weights()

    def disjunction_margin(self) -> np.ndarray:
        """min(f1, f2) per node for (left, right) on the solver's scale"""
        terms = self.hull_terms()
        return np.stack([np.minimum(terms[:, 0], terms[:, 1]), np.minimum(terms[:, 2], terms[:, 3])], axis=-1)


class TranscribedProblem:
    """Finite-dimensional NLP of one scenario on one uniform grid"""

    def __init__(self, cfg: VehicleConfig, scenario: ScenarioConfig, steering: Callable, reference: ReferencePath,
                 grid: Grid, params: AlphaParams):
        if reference.states.shape[0] != grid.n:
            raise BuildError(f"reference has {reference.states.shape[0]} samples, grid has {grid.n} nodes")
        self.cfg = cfg
        self.scenario = scenario
        self.steering = steering
        self.reference = reference
        self.grid = grid
        self.params = params
        self.layout = Layout.for_scenario(grid.n, scenario)
        self.times = grid.times
        self.deltas = np.array([float(steering(t)) for t in self.times])
        self.x_init = initial_state(cfg)
        self.smoothing = scenario.tire_smoothing

        weights = np.full(grid.n, grid.h)
        weights[[0, -1]] = grid.h / 2.0
        self.quadrature = weights

        self._eq_nodes, self._eq_linear = self._equality_structure()
        self.n_ineq_per_node = 4 + (2 if scenario.uses_phi else 0) + 2
        self.lower, self.upper = self._bounds()
        self._cache_key = None
        self._cache_value = None
        logger.info(f"Built transcription: N={grid.n}, {self.layout.size} variables, "
                    f"{self._eq_nodes.shape[0]} equalities, {grid.n * self.n_ineq_per_node} inequalities "
                    f"({scenario.constraint_mode}, {scenario.force_mode})")

    @property
    def dimension(self) -> int:
        return self.layout.size

    @property
    def n_eq(self) -> int:
        return self._eq_nodes.shape[0]

    @property
    def n_ineq(self) -> int:
        return self.grid.n * self.n_ineq_per_node

    def _equality_structure(self) -> Tuple[np.ndarray, np.ndarray]:
        """(row -> (node_a, node_b or -1), row is linear)"""
        n = self.grid.n
        nodes = [np.tile([0, -1], (10, 1)), np.tile([0, 1], (10, 1))]
        linear = [np.ones(10, bool), np.zeros(10, bool)]
        interval = np.repeat(np.arange(n - 1), 20)
        nodes.append(np.stack([interval, interval + 1], axis=1))
        linear.append(np.zeros(interval.size, bool))
        if self.scenario.force_mode == "anti-symmetric":
            nodes.append(np.stack([np.arange(n), np.full(n, -1)], axis=1))
            linear.append(np.ones(n, bool))
        return np.concatenate(nodes), np.concatenate(linear)

    def _bounds(self) -> Tuple[np.ndarray, np.ndarray]:
        lay, cfg = self.layout, self.cfg
        lower = np.full(lay.size, -np.inf)
        upper = np.full(lay.size, np.inf)
        roll_limit = np.pi / 2 - 0.1
        lower[lay.columns(THETA_X)] = -roll_limit
        upper[lay.columns(THETA_X)] = roll_limit
        lower[lay.columns(Z)] = cfg.z_min
        upper[lay.columns(Z)] = cfg.z_max
        for k in range(lay.n_controls):
            lower[lay.columns(20 + k)] = -cfg.f_max
            upper[lay.columns(20 + k)] = cfg.f_max
        for k in range(lay.n_weights):
            cols = lay.columns(20 + lay.n_controls + k)
            lower[cols] = 0.0
            upper[cols] = 1.0
        if lay.n_phi:
            lower[lay.phi_offset:] = -self.scenario.phi_bound
            upper[lay.phi_offset:] = self.scenario.phi_bound
        return lower, upper

    # evaluation

    def forces(self, parts: Parts) -> np.ndarray:
        if parts.phi is not None:
            return control_law(self.cfg, parts.phi, parts.states)
        return parts.controls

    def _model(self, parts: Parts) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        forces = self.forces(parts)
        try:
            rhs = dynamics_rhs(self.cfg, parts.states, forces, self.deltas, tire_smoothing=self.smoothing)
            branches = antiroll_branch_functions(self.cfg, parts.states, forces, rhs)
        except ModelSingularityError as e:
            raise EvaluationError(f"model evaluation failed: {e}", node=e.node) from e
        return forces, rhs, branches

    def objective(self, states: np.ndarray) -> float:
        ref = self.reference.states
        err = (states[:, X] - ref[:, X]) ** 2 + (states[:, Y] - ref[:, Y]) ** 2
        return float(self.quadrature @ err)

    def objective_gradient(self, z) -> np.ndarray:
        parts = self.layout.unpack(z)
        ref = self.reference.states
        grad = np.zeros(self.layout.size)
        grad[self.layout.columns(X)] = 2.0 * self.quadrature * (parts.states[:, X] - ref[:, X])
        grad[self.layout.columns(Y)] = 2.0 * self.quadrature * (parts.states[:, Y] - ref[:, Y])
        return grad

    def objective_hessian_diagonal(self) -> np.ndarray:
        diag = np.zeros(self.layout.size)
        diag[self.layout.columns(X)] = 2.0 * self.quadrature
        diag[self.layout.columns(Y)] = 2.0 * self.quadrature
        return diag

    def _equalities(self, parts: Parts, forces: np.ndarray, rhs: np.ndarray) -> np.ndarray:
        states, aux, h = parts.states, parts.aux, self.grid.h
        r1, r2 = step_residual(self.params, rhs[:-1], rhs[1:],
                               AlphaStep(states[:-1], states[1:], aux[:-1], aux[1:], h))
        rows = [states[0] - self.x_init, aux[0] - (rhs[1] - rhs[0]) / h,
                np.concatenate([r1, r2], axis=1).ravel()]
        if self.scenario.force_mode == "anti-symmetric":
            rows.append(forces[:, 0] + forces[:, 1])
        return np.concatenate(rows)

    def _inequalities(self, parts: Parts, forces: np.ndarray, branches: np.ndarray) -> np.ndarray:
        path = path_constraint_residuals(self.cfg, parts.states, forces)
        blocks = [path[:, :4]]
        if self.scenario.uses_phi:
            blocks.append(path[:, 4:6])
        if self.scenario.constraint_mode == "disjunctive":
            lam = parts.weights
            left = lam[:, 0] * branches[:, 0] / KN + (1.0 - lam[:, 0]) * branches[:, 1]
            right = lam[:, 1] * branches[:, 2] / KN + (1.0 - lam[:, 1]) * branches[:, 3]
            blocks.append(np.stack([left, right], axis=1))
        else:
            blocks.append(conservative_constraints(self.cfg, parts.states, forces) / KN)
        return np.concatenate(blocks, axis=1).ravel()

    def evaluate(self, z) -> Tuple[float, np.ndarray, np.ndarray]:
        """(objective, equality residuals, inequality residuals) at ``z``"""
        z = np.asarray(z, dtype=float)
        key = z.tobytes()
        if key == self._cache_key:
            return self._cache_value
        parts = self.layout.unpack(z)
        forces, rhs, branches = self._model(parts)
        value = (self.objective(parts.states), self._equalities(parts, forces, rhs),
                 self._inequalities(parts, forces, branches))
        self._cache_key, self._cache_value = key, value
        return value

    def jacobian(self, z) -> Tuple[np.ndarray, sp.csr_matrix, sp.csr_matrix]:
        """(objective gradient, equality Jacobian, inequality Jacobian) by grouped forward differences"""
        z = np.asarray(z, dtype=float).copy()
        _, base_eq, base_in = self.evaluate(z)
        lay, n = self.layout, self.grid.n
        node_a, node_b = self._eq_nodes[:, 0], self._eq_nodes[:, 1]
        nonlinear = ~self._eq_linear
        in_node = np.arange(self.n_ineq) // self.n_ineq_per_node
        eq_entries, in_entries = [], []

        def perturbed(zp, column):
            try:
                _, ce, ci = self.evaluate(zp)
            except EvaluationError as e:
                raise EvaluationError(f"evaluation failed while differencing: {e}", node=e.node, column=column) from e
            return ce, ci

        for parity in (0, 1):
            nodes = np.arange(parity, n, 2)
            for offset in range(lay.per_node):
                cols = nodes * lay.per_node + offset
                eps = np.zeros(n)
                eps[nodes] = FD_STEP * (1.0 + np.abs(z[cols]))
                zp = z.copy()
                zp[cols] += eps[nodes]
                ce, ci = perturbed(zp, int(cols[0]))
                d_eq, d_in = ce - base_eq, ci - base_in
                for owner in (node_a, node_b):
                    rows = np.flatnonzero(nonlinear & (owner >= 0) & (owner % 2 == parity))
                    eq_entries.append((rows, owner[rows] * lay.per_node + offset, d_eq[rows] / eps[owner[rows]]))
                rows = np.flatnonzero(in_node % 2 == parity)
                in_entries.append((rows, in_node[rows] * lay.per_node + offset, d_in[rows] / eps[in_node[rows]]))

        for k in range(lay.n_phi):
            col = lay.phi_offset + k
            eps = FD_STEP * (1.0 + abs(z[col]))
            zp = z.copy()
            zp[col] += eps
            ce, ci = perturbed(zp, col)
            rows = np.flatnonzero(nonlinear)
            eq_entries.append((rows, np.full(rows.size, col), (ce - base_eq)[rows] / eps))
            rows = np.arange(self.n_ineq)
            in_entries.append((rows, np.full(rows.size, col), (ci - base_in) / eps))

        eq_entries.append(self._linear_entries())
        self.evaluate(z)
        return (self.objective_gradient(z), self._assemble(eq_entries, self.n_eq),
                self._assemble(in_entries, self.n_ineq))

    def _linear_entries(self):
        """Exact rows: initial condition and anti-symmetry"""
        lay = self.layout
        rows = [np.arange(10)]
        cols = [np.arange(10)]
        vals = [np.ones(10)]
        if self.scenario.force_mode == "anti-symmetric":
            start = self.n_eq - self.grid.n
            node_rows = start + np.arange(self.grid.n)
            rows += [node_rows, node_rows]
            cols += [lay.columns(20), lay.columns(21)]
            vals += [np.ones(self.grid.n), np.ones(self.grid.n)]
        return np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)

    def _assemble(self, entries, n_rows: int) -> sp.csr_matrix:
        rows = np.concatenate([e[0] for e in entries])
        cols = np.concatenate([e[1] for e in entries])
        vals = np.concatenate([e[2] for e in entries])
        keep = vals != 0.0
        return sp.csr_matrix((vals[keep], (rows[keep], cols[keep])), shape=(n_rows, self.layout.size))

    # scaling and solver interface

    def variable_scale(self) -> np.ndarray:
        lay = self.layout
        per_node = np.concatenate([STATE_SCALE, AUX_SCALE, np.full(lay.n_controls, FORCE_SCALE),
                                   np.ones(lay.n_weights)])
        return np.concatenate([np.tile(per_node, lay.n_nodes), np.full(lay.n_phi, PHI_SCALE)])

    def constraint_scales(self) -> Tuple[np.ndarray, np.ndarray]:
        n = self.grid.n
        eq = [STATE_SCALE, AUX_SCALE, np.tile(np.concatenate([STATE_SCALE, AUX_SCALE]), n - 1)]
        if self.scenario.force_mode == "anti-symmetric":
            eq.append(np.full(n, FORCE_SCALE))
        per_node = [np.full(4, TRAVEL_SCALE)]
        if self.scenario.uses_phi:
            per_node.append(np.full(2, FORCE_SCALE))
        per_node.append(np.ones(2))
        return np.concatenate(eq), np.tile(np.concatenate(per_node), n)

    def to_nlp(self) -> NlpProblem:
        """Scaled NLP in variables z / variable_scale()"""
        scale = self.variable_scale()
        eq_scale, in_scale = self.constraint_scales()
        col_scale = sp.diags(scale)
        eq_rows = sp.diags(1.0 / eq_scale)
        in_rows = sp.diags(1.0 / in_scale)
        jac_cache = {}

        def jac(zs):
            key = zs.tobytes()
            if key not in jac_cache:
                jac_cache.clear()
                _, je, ji = self.jacobian(zs * scale)
                jac_cache[key] = ((eq_rows @ je @ col_scale).tocsr(), (in_rows @ ji @ col_scale).tocsr())
            return jac_cache[key]

        hessian = sp.diags(self.objective_hessian_diagonal() * scale ** 2)
        return NlpProblem(
            n=self.layout.size,
            objective=lambda zs: self.evaluate(zs * scale)[0],
            gradient=lambda zs: self.objective_gradient(zs * scale) * scale,
            eq=lambda zs: self.evaluate(zs * scale)[1] / eq_scale,
            eq_jacobian=lambda zs: jac(zs)[0],
            ineq=lambda zs: self.evaluate(zs * scale)[2] / in_scale,
            ineq_jacobian=lambda zs: jac(zs)[1],
            lower=self.lower / scale,
            upper=self.upper / scale,
            hessian=lambda zs: hessian,
        )

    # initial guess and solution

    def initial_guess(self, trajectory: Optional[dict] = None) -> np.ndarray:
        """Decision vector from the reference path and the scenario's force guess.

        ``trajectory`` holds CSV columns (see ``persistence.read_trajectory``)
        and is required for the ``trajectory`` guess kind.
        """
        guess = self.scenario.initial_guess
        n = self.grid.n
        states = self.reference.states.copy()
        forces = np.zeros((n, 2))
        lam = None
        if guess.kind == "constant":
            forces[:] = guess.value
        elif guess.kind == "antisymmetric":
            forces[:, 0] = -guess.value
            forces[:, 1] = guess.value
        elif guess.kind == "trajectory":
            if trajectory is None:
                raise BuildError("trajectory guess requested without trajectory data")
            states, forces, lam = self._guess_from_columns(trajectory)

        phi = None
        if self.layout.n_phi:
            phi = np.asarray(self.scenario.phi_guess, dtype=float)
            phi = phi[[2]] if self.layout.n_phi == 1 else phi
            forces = control_law(self.cfg, phi, states)
        try:
            rhs = dynamics_rhs(self.cfg, states, forces, self.deltas, tire_smoothing=self.smoothing)
            aux = np.gradient(rhs, self.grid.h, axis=0)
        except ModelSingularityError as e:
            logger.warning(f"Initial guess not evaluable ({e}), auxiliary guess set to zero")
            rhs, aux = None, np.zeros_like(states)

        weights = None
        if self.layout.n_weights:
            weights = self._weight_guess(states, forces, rhs) if lam is None else lam
        return self.layout.pack(states, aux, forces, weights, phi)

    def _guess_from_columns(self, columns: dict):
        source = np.asarray(columns["t"], dtype=float)

        def interp(name):
            return np.interp(self.times, source, np.asarray(columns[name], dtype=float))

        states = np.stack([interp(name) for name in STATE_NAMES], axis=1)
        forces = np.stack([interp("F_l"), interp("F_r")], axis=1)
        lam = None
        if "lambda_left" in columns and np.all(np.isfinite(columns["lambda_left"])):
            lam = np.clip(np.stack([interp("lambda_left"), interp("lambda_right")], axis=1), 0.0, 1.0)
        logger.info(f"Initial guess interpolated from a {source.size}-row trajectory")
        return states, forces, lam

    def _weight_guess(self, states, forces, rhs) -> np.ndarray:
        weights = np.full((self.grid.n, 2), 0.5)
        if rhs is None:
            return weights
        branches = antiroll_branch_functions(self.cfg, states, forces, rhs)
        branches[:, [0, 2]] /= KN
        for n, row in enumerate(branches):
            for side in range(2):
                lam = feasible_weight(row[2 * side:2 * side + 2])
                if lam is not None:
                    weights[n, side] = lam[0]
        return weights

    def solution(self, z, report: SolveReport) -> TrajectorySolution:
        parts = self.layout.unpack(z)
        forces, rhs, branches = self._model(parts)
        _, ce, _ = self.evaluate(z)
        fz = wheel_reactions(self.cfg, parts.states, forces)
        try:
            index = rollover_index(fz)
        except RolloverError:
            index = None
        phi = expand_phi(parts.phi) if parts.phi is not None else None
        return TrajectorySolution(
            times=self.times.copy(),
            states=parts.states.copy(),
            aux=parts.aux.copy(),
            controls=np.array(forces, dtype=float),
            weights=None if parts.weights is None else parts.weights.copy(),
            branch_values=branches,
            path_residuals=path_constraint_residuals(self.cfg, parts.states, forces),
            wheel_loads=fz,
            steering_deg=np.degrees(self.deltas),
            objective=self.objective(parts.states),
            report=report,
            scenario=self.scenario,
            equality_violation=float(np.max(np.abs(ce), initial=0.0)),
            phi=phi,
            rollover=index,
        )


def build(cfg: VehicleConfig, scenario: ScenarioConfig, steering: Callable, reference: ReferencePath,
          rho: float = 0.5, grid: Optional[Grid] = None) -> TranscribedProblem:
    """Transcribed problem on the reference's sampling grid"""
    if grid is not None and grid.n != reference.states.shape[0]:
        raise BuildError(f"grid has {grid.n} nodes but the reference has {reference.states.shape[0]} samples")
    grid = grid or Grid.from_times(reference.times)
    return TranscribedProblem(cfg, scenario, steering, reference, grid, AlphaParams(rho))


def solve_transcription(problem: TranscribedProblem, options: SolverOptions,
                        z0: Optional[np.ndarray] = None, trajectory: Optional[dict] = None) -> TrajectorySolution:
    """Run the configured engine on the scaled NLP and unscale the result"""
    z0 = problem.initial_guess(trajectory) if z0 is None else np.asarray(z0, dtype=float)
    scale = problem.variable_scale()
    solver = get_solver(options)
    logger.info(f"Solving transcription with N={problem.grid.n} using engine '{solver.name}'")
    zs, report = solver.solve(problem.to_nlp(), z0 / scale)
    if not report.converged:
        logger.warning(f"Solver ended with status '{report.status}': {report.message}")
    return problem.solution(zs * scale, report)


def solve_scenario(cfg: VehicleConfig, scenario: ScenarioConfig, steering: Callable, simulation: SimulationSection,
                   options: SolverOptions, trajectory: Optional[dict] = None) -> TrajectorySolution:
    """Reference path, transcription and solve for one scenario"""
    grid = Grid.from_simulation(simulation)
    reference = reference_trajectory(cfg, steering, grid.t0, grid.tf, grid.times)
    problem = build(cfg, scenario, steering, reference, rho=simulation.rho, grid=grid)
    return solve_transcription(problem, options, trajectory=trajectory)
