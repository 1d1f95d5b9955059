"""
Nonlinear programming engines.

Problem convention::

    min f(z)  s.t.  c_E(z) = 0,  c_I(z) <= 0,  lower <= z <= upper

Multipliers follow grad f + J_E^T lam + J_I^T mu - nu_lower + nu_upper = 0
with mu, nu_lower, nu_upper >= 0.

Two engines are registered: the built-in SQP (damped BFGS, dual active-set QP
subproblem, l1 merit line search) and an adapter over scipy's
``trust-constr`` for large sparse transcriptions.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Tuple, Type

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import lsqr
from scipy import linalg
from scipy.linalg import LinAlgError, cho_factor, lstsq
from scipy.optimize import BFGS, Bounds, NonlinearConstraint, minimize

from .errors import ConfigError, RolloverError
from .schemas import SolveReport, SolverOptions

logger = logging.getLogger(__name__)

Vector = np.ndarray


def _dense(matrix, rows: int, cols: int) -> np.ndarray:
    if matrix is None:
        return np.zeros((rows, cols))
    if sp.issparse(matrix):
        return matrix.toarray()
    return np.asarray(matrix, dtype=float).reshape(rows, cols)


@dataclass
class NlpProblem:
    """Callbacks and bounds of one NLP; constraint callbacks may be omitted"""

    n: int
    objective: Callable[[Vector], float]
    gradient: Callable[[Vector], Vector]
    eq: Optional[Callable[[Vector], Vector]] = None
    eq_jacobian: Optional[Callable[[Vector], object]] = None
    ineq: Optional[Callable[[Vector], Vector]] = None
    ineq_jacobian: Optional[Callable[[Vector], object]] = None
    lower: Optional[Vector] = None
    upper: Optional[Vector] = None
    hessian: Optional[Callable[[Vector], object]] = None  # objective only, used by trust-constr

    def __post_init__(self):
        self.lower = np.full(self.n, -np.inf) if self.lower is None else np.asarray(self.lower, dtype=float)
        self.upper = np.full(self.n, np.inf) if self.upper is None else np.asarray(self.upper, dtype=float)
        if self.lower.shape != (self.n,) or self.upper.shape != (self.n,):
            raise ValueError(f"bounds must have shape ({self.n},)")
        if np.any(self.lower > self.upper):
            raise ValueError("lower bound exceeds upper bound")
        if (self.eq is None) != (self.eq_jacobian is None) or (self.ineq is None) != (self.ineq_jacobian is None):
            raise ValueError("every constraint callback needs its Jacobian callback")

    def constraints(self, z: Vector) -> Tuple[Vector, Vector]:
        ce = np.zeros(0) if self.eq is None else np.atleast_1d(np.asarray(self.eq(z), dtype=float))
        ci = np.zeros(0) if self.ineq is None else np.atleast_1d(np.asarray(self.ineq(z), dtype=float))
        return ce, ci

    def jacobians(self, z: Vector, ce: Vector, ci: Vector) -> Tuple[np.ndarray, np.ndarray]:
        je = _dense(None if self.eq_jacobian is None else self.eq_jacobian(z), ce.size, self.n)
        ji = _dense(None if self.ineq_jacobian is None else self.ineq_jacobian(z), ci.size, self.n)
        return je, ji


@dataclass
class Multipliers:
    eq: Vector
    ineq: Vector
    lower: Vector
    upper: Vector

    @classmethod
    def zeros(cls, n: int, m_eq: int, m_ineq: int) -> "Multipliers":
        return cls(np.zeros(m_eq), np.zeros(m_ineq), np.zeros(n), np.zeros(n))

    def max_abs(self) -> float:
        parts = [np.abs(p).max() for p in (self.eq, self.ineq, self.lower, self.upper) if p.size]
        return float(max(parts)) if parts else 0.0


def _bound_violation(problem: NlpProblem, z: Vector) -> Vector:
    return np.maximum(np.maximum(problem.lower - z, z - problem.upper), 0.0)


def _violation(problem: NlpProblem, z: Vector) -> float:
    ce, ci = problem.constraints(z)
    return float(max(np.max(np.abs(ce), initial=0.0), np.max(np.maximum(ci, 0.0), initial=0.0),
                     np.max(_bound_violation(problem, z), initial=0.0)))


def _lagrangian_gradient(grad: Vector, je: np.ndarray, ji: np.ndarray, mult: Multipliers) -> Vector:
    return grad + je.T @ mult.eq + ji.T @ mult.ineq - mult.lower + mult.upper


def kkt_residuals(problem: NlpProblem, z: Vector, multipliers: Multipliers) -> Tuple[float, float, float]:
    """(stationarity, feasibility, complementarity) infinity norms at ``z``"""
    z = np.asarray(z, dtype=float)
    ce, ci = problem.constraints(z)
    je, ji = problem.jacobians(z, ce, ci)
    grad = np.asarray(problem.gradient(z), dtype=float)

    stationarity = float(np.max(np.abs(_lagrangian_gradient(grad, je, ji, multipliers)), initial=0.0))
    feasibility = float(max(
        np.max(np.abs(ce), initial=0.0),
        np.max(np.maximum(ci, 0.0), initial=0.0),
        np.max(_bound_violation(problem, z), initial=0.0),
    ))

    terms = [np.abs(multipliers.ineq * ci), np.maximum(-multipliers.ineq, 0.0),
             np.maximum(-multipliers.lower, 0.0), np.maximum(-multipliers.upper, 0.0)]
    finite_lower = np.isfinite(problem.lower)
    finite_upper = np.isfinite(problem.upper)
    terms.append(np.abs(multipliers.lower[finite_lower] * (z - problem.lower)[finite_lower]))
    terms.append(np.abs(multipliers.upper[finite_upper] * (problem.upper - z)[finite_upper]))
    # multipliers on infinite bounds must vanish
    terms.append(np.abs(multipliers.lower[~finite_lower]))
    terms.append(np.abs(multipliers.upper[~finite_upper]))
    complementarity = float(max(np.max(t, initial=0.0) for t in terms))
    return stationarity, feasibility, complementarity


# Quadratic subproblem


@dataclass
class QpResult:
    d: Vector
    eq: Vector
    ineq: Vector
    lower: Vector
    upper: Vector
    status: str  # "optimal" | "infeasible" | "max-iterations" | "singular"
    iterations: int = 0


def _positive_definite(g: np.ndarray) -> np.ndarray:
    g = 0.5 * (g + g.T)
    try:
        cho_factor(g)
        return g
    except LinAlgError:
        pass
    shift = 1e-8 * max(1.0, float(np.max(np.abs(np.diag(g)), initial=0.0)))
    identity = np.eye(g.shape[0])
    for _ in range(30):
        try:
            cho_factor(g + shift * identity)
            logger.warning(f"QP model Hessian not positive definite, regularised with shift {shift:.3g}")
            return g + shift * identity
        except LinAlgError:
            shift *= 10.0
    raise LinAlgError("could not regularise the QP Hessian")


def _kkt_solve(g: np.ndarray, normals: np.ndarray, rhs_top: Vector, rhs_bottom: Vector) -> Tuple[Vector, Vector]:
    n, m = g.shape[0], normals.shape[0]
    if m == 0:
        return linalg.solve(g, rhs_top, assume_a="pos"), np.zeros(0)
    kkt = np.block([[g, normals.T], [normals, np.zeros((m, m))]])
    rhs = np.concatenate([rhs_top, rhs_bottom])
    try:
        sol = linalg.solve(kkt, rhs, assume_a="sym")
    except LinAlgError:
        sol = lstsq(kkt, rhs)[0]
    return sol[:n], sol[n:]


def solve_qp(g: np.ndarray, c: Vector, a_eq: Optional[np.ndarray] = None, b_eq: Optional[Vector] = None,
             a_in: Optional[np.ndarray] = None, b_in: Optional[Vector] = None,
             lower: Optional[Vector] = None, upper: Optional[Vector] = None,
             tol: float = 1e-10, max_iter: Optional[int] = None) -> QpResult:
    """Strictly convex QP  min 1/2 d^T G d + c^T d  s.t.  A_eq d = b_eq, A_in d <= b_in, lower <= d <= upper.

    Dual active-set method: start at the equality-constrained minimiser and
    add the most violated inequality until none is violated, dropping
    constraints whose multiplier would turn negative.
    """
    c = np.asarray(c, dtype=float)
    n = c.size
    g = _positive_definite(np.asarray(g, dtype=float))
    a_eq = np.zeros((0, n)) if a_eq is None else np.asarray(a_eq, dtype=float).reshape(-1, n)
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float)
    a_in = np.zeros((0, n)) if a_in is None else np.asarray(a_in, dtype=float).reshape(-1, n)
    b_in = np.zeros(0) if b_in is None else np.asarray(b_in, dtype=float)
    lower = np.full(n, -np.inf) if lower is None else np.asarray(lower, dtype=float)
    upper = np.full(n, np.inf) if upper is None else np.asarray(upper, dtype=float)

    # every inequality as a row of C d <= e
    lower_idx = np.flatnonzero(np.isfinite(lower))
    upper_idx = np.flatnonzero(np.isfinite(upper))
    identity = np.eye(n)
    rows = np.vstack([a_in, -identity[lower_idx], identity[upper_idx]])
    limits = np.concatenate([b_in, -lower[lower_idx], upper[upper_idx]])
    m_e, m_i = a_eq.shape[0], rows.shape[0]
    max_iter = max_iter or 10 * (m_i + n) + 100

    def unpack(d, u_eq, active, u_act, status, iterations):
        mu = np.zeros(m_i)
        mu[active] = u_act
        k = a_in.shape[0]
        nu_lower = np.zeros(n)
        nu_upper = np.zeros(n)
        nu_lower[lower_idx] = mu[k:k + lower_idx.size]
        nu_upper[upper_idx] = mu[k + lower_idx.size:]
        return QpResult(d=d, eq=-u_eq, ineq=mu[:k], lower=nu_lower, upper=nu_upper,
                        status=status, iterations=iterations)

    d, w = _kkt_solve(g, a_eq, -c, b_eq)
    u_eq = -w
    active: List[int] = []
    u_act = np.zeros(0)
    iterations = 0

    while True:
        slack = limits - rows @ d
        if active:
            slack[active] = np.inf
        if m_i == 0:
            break
        p = int(np.argmin(slack))
        if slack[p] >= -tol * (1.0 + abs(limits[p])):
            break
        normal_p = -rows[p]
        u_p = 0.0
        while True:
            iterations += 1
            if iterations > max_iter:
                logger.warning(f"QP active-set loop hit {max_iter} iterations")
                return unpack(d, u_eq, active, u_act, "max-iterations", iterations)
            normals = np.vstack([a_eq, -rows[active]]) if active else a_eq
            z, r = _kkt_solve(g, normals, normal_p, np.zeros(normals.shape[0]))
            r_eq, r_act = r[:m_e], r[m_e:]

            t1, block = np.inf, None
            for j in np.flatnonzero(r_act > 1e-12):
                ratio = u_act[j] / r_act[j]
                if ratio < t1:
                    t1, block = ratio, int(j)
            curvature = float(z @ normal_p)
            if curvature > 1e-12 * max(1.0, float(normal_p @ normal_p)):
                t2 = -(limits[p] - rows[p] @ d) / curvature
            else:
                t2 = np.inf
            t = min(t1, t2)
            if not np.isfinite(t):
                return unpack(d, u_eq, active, u_act, "infeasible", iterations)

            d = d + t * z if np.isfinite(t2) else d
            u_eq = u_eq - t * r_eq
            u_act = u_act - t * r_act
            u_p += t
            if t2 <= t1:
                active.append(p)
                u_act = np.append(u_act, u_p)
                break
            active.pop(block)
            u_act = np.delete(u_act, block)

    return unpack(d, u_eq, active, np.maximum(u_act, 0.0), "optimal", iterations)


# Engines


class NlpSolver:
    """Engine interface: ``solve(problem, z0) -> (z, SolveReport)``"""

    name = "base"

    def __init__(self, options: Optional[SolverOptions] = None):
        self.options = options or SolverOptions(engine=self.name)
        self.multipliers: Optional[Multipliers] = None

    def solve(self, problem: NlpProblem, z0: Vector) -> Tuple[Vector, SolveReport]:
        raise NotImplementedError

    def _start(self, problem: NlpProblem, z0: Vector) -> Vector:
        z0 = np.asarray(z0, dtype=float)
        if z0.shape != (problem.n,):
            raise ValueError(f"initial point has shape {z0.shape}, expected ({problem.n},)")
        z = np.clip(z0, problem.lower, problem.upper)
        if not np.array_equal(z, z0):
            logger.warning(f"Initial point clipped to bounds in {int(np.sum(z != z0))} components")
        return z


@dataclass
class _Point:
    z: Vector
    f: float
    grad: Vector
    ce: Vector
    ci: Vector
    je: np.ndarray
    ji: np.ndarray

    def violation(self) -> float:
        return float(np.sum(np.abs(self.ce)) + np.sum(np.maximum(self.ci, 0.0)))


class SqpSolver(NlpSolver):
    """Line-search SQP with a damped BFGS Hessian and l1 merit function"""

    name = "sqp"
    armijo = 1e-4
    min_step = 1e-10
    max_line_search_failures = 3

    def _evaluate(self, problem: NlpProblem, z: Vector) -> Optional[_Point]:
        try:
            f = float(problem.objective(z))
            ce, ci = problem.constraints(z)
            if not (np.isfinite(f) and np.all(np.isfinite(ce)) and np.all(np.isfinite(ci))):
                return None
            grad = np.asarray(problem.gradient(z), dtype=float)
            je, ji = problem.jacobians(z, ce, ci)
        except (RolloverError, ArithmeticError, LinAlgError) as e:
            logger.warning(f"Evaluation failed: {e}")
            return None
        return _Point(z=z, f=f, grad=grad, ce=ce, ci=ci, je=je, ji=ji)

    def _merit_only(self, problem: NlpProblem, z: Vector, penalty: float) -> float:
        try:
            f = float(problem.objective(z))
            ce, ci = problem.constraints(z)
        except (RolloverError, ArithmeticError, LinAlgError):
            return np.inf
        value = f + penalty * (np.sum(np.abs(ce)) + np.sum(np.maximum(ci, 0.0)))
        return float(value) if np.isfinite(value) else np.inf

    def _subproblem(self, problem: NlpProblem, point: _Point, hessian: np.ndarray) -> QpResult:
        try:
            return solve_qp(hessian, point.grad, point.je, -point.ce, point.ji, -point.ci,
                            problem.lower - point.z, problem.upper - point.z)
        except LinAlgError as e:
            logger.warning(f"QP subproblem failed: {e}")
            n = problem.n
            return QpResult(d=np.zeros(n), eq=np.zeros(point.ce.size), ineq=np.zeros(point.ci.size),
                            lower=np.zeros(n), upper=np.zeros(n), status="singular")

    def _restore(self, problem: NlpProblem, point: _Point) -> Optional[_Point]:
        """Least-norm Gauss-Newton step on the linearised violated constraints"""
        violated = point.ci > -self.options.feas_tol
        rows = np.vstack([point.je, point.ji[violated]])
        rhs = -np.concatenate([point.ce, point.ci[violated]])
        if rows.shape[0] == 0:
            return None
        step = lstsq(rows, rhs)[0]
        before = point.violation()
        alpha = 1.0
        while alpha >= self.min_step:
            z_new = np.clip(point.z + alpha * step, problem.lower, problem.upper)
            candidate = self._evaluate(problem, z_new)
            if candidate is not None and candidate.violation() < before:
                logger.info(f"Restoration step reduced violation {before:.3e} -> {candidate.violation():.3e}")
                return candidate
            alpha *= 0.5
        return None

    @staticmethod
    def _bfgs_update(hessian: np.ndarray, s: Vector, y: Vector) -> np.ndarray:
        hs = hessian @ s
        shs = float(s @ hs)
        if shs <= 1e-16 * max(1.0, float(s @ s)):
            return hessian
        sy = float(s @ y)
        if sy < 0.2 * shs:
            theta = 0.8 * shs / (shs - sy)
            y = theta * y + (1.0 - theta) * hs
            sy = float(s @ y)
        return hessian + np.outer(y, y) / sy - np.outer(hs, hs) / shs

    def _multipliers(self, qp: QpResult) -> Multipliers:
        return Multipliers(eq=qp.eq, ineq=qp.ineq, lower=qp.lower, upper=qp.upper)

    def _residuals(self, problem: NlpProblem, point: _Point, mult: Multipliers) -> Tuple[float, float, float]:
        stationarity = float(np.max(np.abs(_lagrangian_gradient(point.grad, point.je, point.ji, mult)), initial=0.0))
        feasibility = float(max(np.max(np.abs(point.ce), initial=0.0),
                                np.max(np.maximum(point.ci, 0.0), initial=0.0),
                                np.max(_bound_violation(problem, point.z), initial=0.0)))
        complementarity = float(max(
            np.max(np.abs(mult.ineq * point.ci), initial=0.0),
            np.max(np.abs(mult.lower * np.where(np.isfinite(problem.lower), point.z - problem.lower, 0.0)),
                   initial=0.0),
            np.max(np.abs(mult.upper * np.where(np.isfinite(problem.upper), problem.upper - point.z, 0.0)),
                   initial=0.0),
        ))
        return stationarity, feasibility, complementarity

    def _converged(self, point: _Point, residuals: Tuple[float, float, float]) -> bool:
        stationarity, feasibility, complementarity = residuals
        scale = max(1.0, float(np.max(np.abs(point.grad), initial=0.0)))
        return (stationarity <= self.options.kkt_tol * scale
                and feasibility <= self.options.feas_tol
                and complementarity <= self.options.kkt_tol * scale)

    def solve(self, problem: NlpProblem, z0: Vector) -> Tuple[Vector, SolveReport]:
        opts = self.options
        z = self._start(problem, z0)
        point = self._evaluate(problem, z)
        if point is None:
            logger.error("Evaluation failed at the initial point")
            self.multipliers = None
            return z, SolveReport(status="evaluation-failure", engine=self.name,
                                  message="evaluation failed at the initial point")

        hessian = np.eye(problem.n)
        penalty = 0.0
        failures = 0
        history: List[Tuple[float, float]] = []
        mult = Multipliers.zeros(problem.n, point.ce.size, point.ci.size)
        residuals = (np.inf, np.inf, np.inf)
        status, message = "max-iterations", f"no convergence in {opts.max_iter} iterations"

        iteration = 0
        for iteration in range(opts.max_iter):
            qp = self._subproblem(problem, point, hessian)
            if qp.status in ("infeasible", "singular"):
                logger.warning(f"Iteration {iteration}: QP subproblem {qp.status}, restoring feasibility")
                restored = self._restore(problem, point)
                if restored is None:
                    status, message = "infeasible", f"QP subproblem {qp.status} and restoration failed"
                    break
                point = restored
                hessian = np.eye(problem.n)
                continue

            mult = self._multipliers(qp)
            residuals = self._residuals(problem, point, mult)
            if self._converged(point, residuals):
                status, message = "converged", "KKT tolerances satisfied"
                break

            penalty = max(penalty, 1.1 * mult.max_abs())
            merit = point.f + penalty * point.violation()
            slope = float(point.grad @ qp.d) - penalty * point.violation()
            alpha = 1.0
            accepted = None
            while alpha >= self.min_step:
                z_new = np.clip(point.z + alpha * qp.d, problem.lower, problem.upper)
                trial = self._merit_only(problem, z_new, penalty)
                if trial <= merit + self.armijo * alpha * min(slope, 0.0):
                    accepted = self._evaluate(problem, z_new)
                    if accepted is not None:
                        history.append((merit, trial))
                        break
                alpha *= 0.5

            if accepted is None:
                failures += 1
                logger.warning(f"Iteration {iteration}: line search failed ({failures}/{self.max_line_search_failures})")
                hessian = np.eye(problem.n)
                if failures >= self.max_line_search_failures:
                    message = "repeated line-search failure"
                    break
                continue
            failures = 0

            s = accepted.z - point.z
            y = (_lagrangian_gradient(accepted.grad, accepted.je, accepted.ji, mult)
                 - _lagrangian_gradient(point.grad, point.je, point.ji, mult))
            hessian = self._bfgs_update(hessian, s, y)
            point = accepted
            if iteration % 10 == 0:
                logger.info(f"SQP iter {iteration}: f={point.f:.6e} viol={point.violation():.3e} "
                            f"step={alpha:.3g} penalty={penalty:.3g}")
        else:
            iteration = opts.max_iter

        self.multipliers = mult
        stationarity, feasibility, complementarity = residuals
        report = SolveReport(status=status, iterations=iteration, stationarity=stationarity,
                             feasibility=feasibility, complementarity=complementarity,
                             objective=point.f, message=message, engine=self.name, merit_history=history)
        logger.info(f"SQP finished: {status} after {iteration} iterations, objective {point.f:.6e}")
        return point.z, report


class TrustConstrSolver(NlpSolver):
    """Adapter over scipy ``minimize(method='trust-constr')`` with sparse Jacobians"""

    name = "trust-constr"
    polish_steps = 5

    def solve(self, problem: NlpProblem, z0: Vector) -> Tuple[Vector, SolveReport]:
        opts = self.options
        z = self._start(problem, z0)
        try:
            ce0, ci0 = problem.constraints(z)
            f0 = float(problem.objective(z))
        except (RolloverError, ArithmeticError) as e:
            logger.error(f"Evaluation failed at the initial point: {e}")
            return z, SolveReport(status="evaluation-failure", engine=self.name, message=str(e))
        m_e, m_i = ce0.size, ci0.size

        def fun(x):
            ce, ci = problem.constraints(x)
            return np.concatenate([ce, ci])

        def jac(x):
            parts = []
            if problem.eq_jacobian is not None:
                parts.append(sp.csr_matrix(problem.eq_jacobian(x)))
            if problem.ineq_jacobian is not None:
                parts.append(sp.csr_matrix(problem.ineq_jacobian(x)))
            return sp.vstack(parts, format="csr")

        constraints = []
        if m_e + m_i:
            lb = np.concatenate([np.zeros(m_e), np.full(m_i, -np.inf)])
            ub = np.zeros(m_e + m_i)
            constraints.append(NonlinearConstraint(fun, lb, ub, jac=jac, hess=BFGS()))
        bounds = None
        if np.any(np.isfinite(problem.lower)) or np.any(np.isfinite(problem.upper)):
            bounds = Bounds(problem.lower, problem.upper)
        hess = problem.hessian if problem.hessian is not None else BFGS()

        logger.info(f"trust-constr: n={problem.n}, {m_e} equalities, {m_i} inequalities, objective {f0:.6e}")
        try:
            result = minimize(problem.objective, z, jac=problem.gradient, hess=hess, method="trust-constr",
                              constraints=constraints, bounds=bounds,
                              options={"gtol": opts.kkt_tol, "xtol": 1e-12, "maxiter": opts.max_iter,
                                       "verbose": 0})
        except (RolloverError, ArithmeticError) as e:
            logger.error(f"trust-constr aborted on an evaluation failure: {e}")
            return z, SolveReport(status="evaluation-failure", engine=self.name, message=str(e))

        x = np.asarray(result.x, dtype=float)
        v = np.concatenate([np.atleast_1d(vi) for vi in result.v]) if len(result.v) else np.zeros(0)
        lam = v[:m_e] if v.size >= m_e + m_i else np.zeros(m_e)
        mu = np.maximum(v[m_e:m_e + m_i], 0.0) if v.size >= m_e + m_i else np.zeros(m_i)
        self.multipliers = self._bound_multipliers(problem, x, lam, mu)
        stationarity, feasibility, complementarity = kkt_residuals(problem, x, self.multipliers)
        feasibility = min(feasibility, float(result.constr_violation))

        objective = float(result.fun)
        if result.status in (1, 2) and feasibility > opts.feas_tol:
            polished = self._polish(problem, x)
            if polished is not x:
                x = polished
                objective = float(problem.objective(x))
                self.multipliers = self._bound_multipliers(problem, x, lam, mu)
                stationarity, feasibility, complementarity = kkt_residuals(problem, x, self.multipliers)

        if result.status in (1, 2) and feasibility <= opts.feas_tol:
            status = "converged"
        elif result.status in (1, 2):
            status = "infeasible"
        else:
            status = "max-iterations"
        logger.info(f"trust-constr finished: {status} ({result.message}) after {result.niter} iterations")
        return x, SolveReport(status=status, iterations=int(result.niter), stationarity=float(result.optimality),
                              feasibility=feasibility, complementarity=complementarity,
                              objective=objective, message=str(result.message), engine=self.name)

    def _polish(self, problem: NlpProblem, x: Vector) -> Vector:
        """Least-norm Newton corrections on the equalities and the nearly active inequalities.

        trust-constr may stop with a violation between ``feas_tol`` and ``gtol``.
        Returns ``x`` itself when no step reduces the violation.
        """
        tol = self.options.feas_tol
        best, best_violation = x, _violation(problem, x)
        for step_count in range(self.polish_steps):
            if best_violation <= 0.1 * tol:
                break
            try:
                ce, ci = problem.constraints(best)
                active = np.flatnonzero(ci > -tol)
                rows = []
                if problem.eq_jacobian is not None:
                    rows.append(sp.csr_matrix(problem.eq_jacobian(best)))
                if problem.ineq_jacobian is not None:
                    rows.append(sp.csr_matrix(problem.ineq_jacobian(best))[active])
                if not rows:
                    break
                step = lsqr(sp.vstack(rows, format="csr"), -np.concatenate([ce, ci[active]]),
                            atol=1e-12, btol=1e-12)[0]
                candidate = np.clip(best + step, problem.lower, problem.upper)
                violation = _violation(problem, candidate)
            except (RolloverError, ArithmeticError) as e:
                logger.warning(f"Feasibility polish stopped: {e}")
                break
            if not violation < best_violation:
                break
            best, best_violation = candidate, violation
            logger.info(f"Feasibility polish step {step_count + 1}: violation {best_violation:.3e}")
        return best

    @staticmethod
    def _bound_multipliers(problem: NlpProblem, x: Vector, lam: Vector, mu: Vector) -> Multipliers:
        """Bound multipliers recovered from the Lagrangian gradient at the active bounds"""
        ce, ci = problem.constraints(x)
        je, ji = problem.jacobians(x, ce, ci)
        partial = np.asarray(problem.gradient(x), dtype=float) + je.T @ lam + ji.T @ mu
        span = np.maximum(np.abs(problem.upper - problem.lower), 1.0)
        at_lower = np.isfinite(problem.lower) & (x - problem.lower <= 1e-8 * np.where(np.isfinite(span), span, 1.0))
        at_upper = np.isfinite(problem.upper) & (problem.upper - x <= 1e-8 * np.where(np.isfinite(span), span, 1.0))
        nu_lower = np.where(at_lower, np.maximum(partial, 0.0), 0.0)
        nu_upper = np.where(at_upper, np.maximum(-partial, 0.0), 0.0)
        return Multipliers(eq=lam, ineq=mu, lower=nu_lower, upper=nu_upper)


SOLVERS: Dict[str, Type[NlpSolver]] = {
    SqpSolver.name: SqpSolver,
    TrustConstrSolver.name: TrustConstrSolver,
}


def get_solver(options: SolverOptions) -> NlpSolver:
    try:
        return SOLVERS[options.engine](options)
    except KeyError:
        raise ConfigError(f"Unknown NLP engine '{options.engine}'. Available: {sorted(SOLVERS)}",
                          field="solver.engine")


def solve(problem: NlpProblem, z0: Vector, options: Optional[SolverOptions] = None) -> Tuple[Vector, SolveReport]:
    return get_solver(options or SolverOptions()).solve(problem, z0)
