"""Dual objective over link costs with gradient-projection solvers."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .algebra import DEFAULT_TOL, solve_mu
from .errors import StallError, UnreachableError, ValidationError
from .problem import AssignmentProblem, Trace, eta

DUAL_COLUMNS = ("iter", "elapsed_seconds", "dual_objective", "eta_c", "step_size", "restarted", "backtrack_count")
MIN_STEP = 1e-15
# round-off allowance in the backtracking test, relative to the objective size
BACKTRACK_SLACK = 1e-12
# objective noise per unit demand left by the cost-to-go solve tolerance
MU_NOISE = 10.0 * DEFAULT_TOL


def _demand_term(problem: AssignmentProblem, mu) -> float:
    q = problem.q_rows
    used = q > 0
    if np.any(~np.isfinite(mu[used])):
        raise UnreachableError("demand at a node that cannot reach its destination")
    return float(np.sum(mu[used] * q[used]))


def _mu(problem: AssignmentProblem, costs):
    p = problem.params
    if problem.method == "dial":
        return problem.load(costs).mu
    sol = solve_mu(problem.network, costs, p.theta, p.alpha, p.dest, init=problem._mu_cache)
    problem._mu_cache = sol.mu
    return sol.mu


def dual_objective(problem: AssignmentProblem, costs) -> float:
    """``-C*(c) + sum over rows of mu . q`` (the destination term vanishes since ``mu_d = 0``)."""
    costs = np.asarray(costs, float)
    conj = problem.bpr.conjugate_integral(costs)
    if problem.params.n_rows == 0:
        return -conj
    return -conj + _demand_term(problem, _mu(problem, costs))


def dual_value_and_gradient(problem: AssignmentProblem, costs):
    """Objective, gradient ``X(c) - c^{-1}(c)`` and the loaded flows at ``costs``."""
    costs = np.asarray(costs, float)
    inv = problem.bpr.inverse_cost(costs)
    conj = problem.bpr.conjugate_integral(costs)
    if problem.params.n_rows == 0:
        X = np.zeros_like(costs)
        return -conj, X - inv, X
    res = problem.load(costs)
    return -conj + _demand_term(problem, res.mu), res.X - inv, res.X


def dual_gradient(problem: AssignmentProblem, costs) -> np.ndarray:
    return dual_value_and_gradient(problem, costs)[1]


def project(problem_or_free_flow, candidate) -> np.ndarray:
    """Elementwise ``max(candidate, free-flow cost)``."""
    floor = getattr(problem_or_free_flow, "network", None)
    floor = floor.free_flow_cost if floor is not None else np.asarray(problem_or_free_flow, float)
    return np.maximum(np.asarray(candidate, float), floor)


def momentum_next(t: float) -> float:
    return (1.0 + math.sqrt(1.0 + 4.0 * t * t)) / 2.0


@dataclass
class DualState:
    costs: np.ndarray
    extrapolated: np.ndarray
    flows: np.ndarray
    objective: float
    t: float
    j: int
    step_size: float
    iterations: int
    converged: bool
    trace: Trace


def _check(max_iter, tol):
    if int(max_iter) != max_iter or max_iter < 0:
        raise ValidationError("max_iter must be a non-negative integer")
    if tol < 0:
        raise ValidationError("tolerance must be non-negative")


def solve_gp(problem: AssignmentProblem, step_size: float = 1e-5, max_iter: int = 250, tol: float = 1e-8,
             reference=None) -> DualState:
    """Projected gradient ascent ``c <- max(c + s (X(c) - c^{-1}(c)), c0)`` with a fixed step."""
    _check(max_iter, tol)
    if not step_size > 0:
        raise ValidationError("step size must be positive")
    trace = Trace(DUAL_COLUMNS, {"solver": "gp", "step_size": step_size, "max_iter": max_iter, "tol": tol})
    c = problem.network.free_flow_cost.copy()
    z, g, X = dual_value_and_gradient(problem, c)
    converged = False
    m = 0
    for m in range(1, max_iter + 1):
        c = project(problem, c + step_size * g)
        new, g, X = dual_value_and_gradient(problem, c)
        ec = eta(c, reference) if reference is not None else math.nan
        trace.add(iter=m, dual_objective=new, eta_c=ec, step_size=step_size, restarted=False, backtrack_count=0)
        change = abs(new - z) / max(abs(new), 1e-300)
        z = new
        if change <= tol:
            converged = True
            break
    return DualState(c, c, X, z, 1.0, 0, step_size, m, converged, trace)


def solve_agp(problem: AssignmentProblem, step_size: float = 1e-4, k_min: int = 50, xi: float = 0.25,
              backtracking: bool = True, max_iter: int = 250, tol: float = 1e-8, reference=None) -> DualState:
    """Accelerated projected gradient ascent with function-value restart.

    Momentum follows ``t <- (1 + sqrt(1 + 4 t^2)) / 2``. After ``k_min``
    iterations without restart, a decrease of the dual objective resets the
    momentum. With ``backtracking`` the step starts at ``step_size`` and is
    multiplied by ``xi`` until the ascent step satisfies the quadratic
    lower-model condition of the concave objective; accepted steps carry
    over, so the step size never increases.
    """
    _check(max_iter, tol)
    if not step_size > 0:
        raise ValidationError("step size must be positive")
    if not 0 < xi < 1:
        raise ValidationError("xi must lie in (0, 1)")
    if int(k_min) != k_min or k_min < 0:
        raise ValidationError("k_min must be a non-negative integer")
    trace = Trace(DUAL_COLUMNS, {"solver": "agp", "step_size": step_size, "k_min": k_min, "xi": xi,
                                 "backtracking": backtracking, "max_iter": max_iter, "tol": tol})
    c = problem.network.free_flow_cost.copy()
    b = c.copy()
    t, j, s = 1.0, 0, float(step_size)
    noise = MU_NOISE * float(np.sum(problem.q_rows))
    z = dual_objective(problem, c)
    X = np.zeros_like(c)
    converged = False
    m = 0
    for m in range(1, max_iter + 1):
        zb, g, X = dual_value_and_gradient(problem, b)
        tries = 0
        while True:
            p = project(problem, b + s * g)
            zp = dual_objective(problem, p)
            if not backtracking:
                break
            diff = p - b
            lower = zb + float(g @ diff) - float(diff @ diff) / (2.0 * s)
            if zp >= lower - BACKTRACK_SLACK * (abs(zb) + abs(zp)) - noise:
                break
            s *= xi
            tries += 1
            if s < MIN_STEP:
                err = StallError(f"backtracking step fell below {MIN_STEP:g} at iteration {m}")
                err.trace = trace
                raise err
        t_next = momentum_next(t)
        # the extrapolated point is clipped too: costs below free flow have no inverse
        b = project(problem, p + ((t - 1.0) / t_next) * (p - c))
        restarted = j >= k_min and zp < z
        if restarted:
            j, t = 0, 1.0
        else:
            j, t = j + 1, t_next
        change = abs(zp - z) / max(abs(zp), 1e-300)
        c, z = p, zp
        ec = eta(c, reference) if reference is not None else math.nan
        trace.add(iter=m, dual_objective=z, eta_c=ec, step_size=s, restarted=restarted, backtrack_count=tries)
        if change <= tol:
            converged = True
            break
    return DualState(c, b, X, z, t, j, s, m, converged, trace)
