import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.linalg import LinAlgError
from scipy.optimize import minimize

from app import nlp_solver
from app.errors import ConfigError
from app.nlp_solver import (
    Multipliers,
    NlpProblem,
    SqpSolver,
    TrustConstrSolver,
    get_solver,
    kkt_residuals,
    solve,
    solve_qp,
)
from app.schemas import SolverOptions


def sphere_on_line():
    """min z1^2 + z2^2  s.t.  z1 + z2 = 1"""
    return NlpProblem(
        n=2,
        objective=lambda z: float(z @ z),
        gradient=lambda z: 2.0 * z,
        eq=lambda z: np.array([z[0] + z[1] - 1.0]),
        eq_jacobian=lambda z: np.array([[1.0, 1.0]]),
    )


def convex_with_linear_constraints():
    """(z1 - 1)^4 + (z1 - z2)^2 + exp(z3) on z1 + z2 + z3 = 1, z1 <= 0.5, z3 >= -1"""
    def objective(z):
        return float((z[0] - 1) ** 4 + (z[0] - z[1]) ** 2 + np.exp(z[2]))

    def gradient(z):
        return np.array([4 * (z[0] - 1) ** 3 + 2 * (z[0] - z[1]), -2 * (z[0] - z[1]), np.exp(z[2])])

    return NlpProblem(
        n=3,
        objective=objective,
        gradient=gradient,
        eq=lambda z: np.array([z.sum() - 1.0]),
        eq_jacobian=lambda z: np.ones((1, 3)),
        ineq=lambda z: np.array([z[0] - 0.5]),
        ineq_jacobian=lambda z: np.array([[1.0, 0.0, 0.0]]),
        lower=np.array([-np.inf, -np.inf, -1.0]),
    )


def test_clipped_unconstrained_optimum():
    problem = NlpProblem(
        n=1,
        objective=lambda z: float((z[0] - 3.0) ** 2),
        gradient=lambda z: np.array([2.0 * (z[0] - 3.0)]),
        ineq=lambda z: np.array([z[0] - 2.0]),
        ineq_jacobian=lambda z: np.array([[1.0]]),
    )
    z, report = solve(problem, np.zeros(1))
    assert report.converged
    assert z[0] == pytest.approx(2.0, abs=1e-8)


def test_equality_constrained_minimum():
    z, report = solve(sphere_on_line(), np.zeros(2))
    assert report.status == "converged"
    assert_allclose(z, [0.5, 0.5], atol=1e-8)
    assert report.objective == pytest.approx(0.5)
    assert report.engine == "sqp"


def test_kkt_residuals_at_analytic_optimum():
    problem = sphere_on_line()
    mult = Multipliers(eq=np.array([-1.0]), ineq=np.zeros(0), lower=np.zeros(2), upper=np.zeros(2))
    assert kkt_residuals(problem, np.array([0.5, 0.5]), mult) == (0.0, 0.0, 0.0)


def test_kkt_feasibility_is_max_violation():
    problem = NlpProblem(
        n=2,
        objective=lambda z: 0.0,
        gradient=lambda z: np.zeros(2),
        eq=lambda z: np.array([z[0] + z[1] - 1.0]),
        eq_jacobian=lambda z: np.array([[1.0, 1.0]]),
        ineq=lambda z: np.array([z[0] - 0.5]),
        ineq_jacobian=lambda z: np.array([[1.0, 0.0]]),
        upper=np.array([10.0, 1.0]),
    )
    _, feasibility, _ = kkt_residuals(problem, np.array([2.0, 4.0]), Multipliers.zeros(2, 1, 1))
    assert feasibility == pytest.approx(5.0)
    stationarity, _, _ = kkt_residuals(problem, np.array([0.0, 1.0]), Multipliers.zeros(2, 1, 1))
    assert stationarity == 0.0


def test_matches_independent_solver():
    problem = convex_with_linear_constraints()
    solver = SqpSolver(SolverOptions(kkt_tol=1e-8, feas_tol=1e-10))
    z, report = solver.solve(problem, np.zeros(3))
    assert report.converged

    reference = minimize(problem.objective, np.zeros(3), jac=problem.gradient, method="SLSQP",
                         bounds=[(None, None), (None, None), (-1.0, None)],
                         constraints=[{"type": "eq", "fun": problem.eq},
                                      {"type": "ineq", "fun": lambda z: 0.5 - z[0]}],
                         options={"ftol": 1e-12, "maxiter": 500})
    assert reference.success
    assert_allclose(z, reference.x, atol=1e-4)
    assert max(kkt_residuals(problem, z, solver.multipliers)) < 1e-5


def test_merit_non_increasing_and_deterministic():
    problem = convex_with_linear_constraints()
    z0 = np.array([-2.0, 3.0, 1.5])
    z1, first = solve(problem, z0)
    z2, second = solve(problem, z0)
    assert first.merit_history
    for before, after in first.merit_history:
        assert after <= before
    assert np.array_equal(z1, z2)
    assert first.iterations == second.iterations
    assert first.merit_history == second.merit_history


def test_initial_point_clipped_to_bounds():
    problem = NlpProblem(n=1, objective=lambda z: float(z[0] ** 2), gradient=lambda z: 2 * z,
                         lower=np.array([1.0]), upper=np.array([4.0]))
    z, report = solve(problem, np.array([10.0]))
    assert report.converged
    assert z[0] == pytest.approx(1.0, abs=1e-8)


def test_evaluation_failure_at_initial_point():
    def broken(z):
        return 1.0 / 0.0

    problem = NlpProblem(n=1, objective=broken, gradient=lambda z: np.zeros(1))
    z, report = solve(problem, np.array([0.5]))
    assert report.status == "evaluation-failure"
    assert not report.converged


def test_unknown_engine():
    with pytest.raises(ConfigError):
        get_solver(SolverOptions(engine="simplex"))


def test_trust_constr_engine():
    z, report = solve(sphere_on_line(), np.zeros(2), SolverOptions(engine="trust-constr", kkt_tol=1e-8))
    assert report.engine == "trust-constr"
    assert report.converged
    assert_allclose(z, [0.5, 0.5], atol=1e-5)


@pytest.mark.parametrize("seed,n", [(1, 10), (2, 17), (3, 25), (4, 38), (5, 50)])
def test_random_convex_qp(seed, n):
    rng = np.random.default_rng(seed)
    m = rng.normal(size=(n, n))
    g = m @ m.T + n * np.eye(n)
    c = rng.normal(size=n) * 10
    a_eq = rng.normal(size=(n // 5, n))
    b_eq = np.zeros(n // 5)
    a_in = rng.normal(size=(n, n))
    b_in = rng.uniform(0.1, 1.0, size=n)
    lower = -np.ones(n)
    upper = np.ones(n)

    qp = solve_qp(g, c, a_eq, b_eq, a_in, b_in, lower, upper)
    assert qp.status == "optimal"
    d = qp.d
    stationarity = g @ d + c + a_eq.T @ qp.eq + a_in.T @ qp.ineq - qp.lower + qp.upper
    assert np.max(np.abs(stationarity)) < 1e-6
    assert np.max(np.abs(a_eq @ d - b_eq)) < 1e-6
    assert np.max(a_in @ d - b_in) < 1e-6
    assert np.all(d >= lower - 1e-6) and np.all(d <= upper + 1e-6)
    for mult in (qp.ineq, qp.lower, qp.upper):
        assert np.all(mult >= -1e-9)
    assert np.max(np.abs(qp.ineq * (a_in @ d - b_in))) < 1e-6
    assert np.max(np.abs(qp.lower * (d - lower))) < 1e-6
    assert np.max(np.abs(qp.upper * (upper - d))) < 1e-6


def test_equality_qp_matches_kkt_system(rng):
    n, m = 12, 4
    a = rng.normal(size=(n, n))
    g = a @ a.T + np.eye(n)
    c = rng.normal(size=n)
    a_eq = rng.normal(size=(m, n))
    b_eq = rng.normal(size=m)
    kkt = np.block([[g, a_eq.T], [a_eq, np.zeros((m, m))]])
    expected = np.linalg.solve(kkt, np.concatenate([-c, b_eq]))
    qp = solve_qp(g, c, a_eq, b_eq)
    assert_allclose(qp.d, expected[:n], atol=1e-9)
    assert_allclose(qp.eq, expected[n:], atol=1e-9)


def test_inconsistent_qp_reported():
    qp = solve_qp(np.eye(1), np.zeros(1), a_in=np.array([[1.0], [-1.0]]), b_in=np.array([-1.0, -1.0]))
    assert qp.status == "infeasible"


def test_singular_qp_subproblem_ends_solve(monkeypatch):
    def singular(*args, **kwargs):
        raise LinAlgError("could not regularise the QP Hessian")

    monkeypatch.setattr(nlp_solver, "solve_qp", singular)
    problem = NlpProblem(n=1, objective=lambda z: float((z[0] - 3.0) ** 2),
                         gradient=lambda z: np.array([2.0 * (z[0] - 3.0)]))
    z, report = SqpSolver().solve(problem, np.zeros(1))
    assert report.status == "infeasible"
    assert "singular" in report.message
    assert z[0] == 0.0


def test_polish_drives_violation_below_tolerance():
    circle = NlpProblem(
        n=2,
        objective=lambda z: float(z @ z),
        gradient=lambda z: 2.0 * z,
        eq=lambda z: np.array([z @ z - 1.0]),
        eq_jacobian=lambda z: 2.0 * z.reshape(1, 2),
        ineq=lambda z: np.array([z[1] - 0.5]),
        ineq_jacobian=lambda z: np.array([[0.0, 1.0]]),
    )
    solver = TrustConstrSolver(SolverOptions(engine="trust-constr", feas_tol=1e-9))
    start = np.array([1.0002, 0.0])
    polished = solver._polish(circle, start)
    assert abs(polished @ polished - 1.0) <= 1e-10
    assert polished[1] == pytest.approx(0.0, abs=1e-12)
    feasible = np.array([1.0, 0.0])
    assert solver._polish(circle, feasible) is feasible
