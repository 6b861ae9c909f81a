"""Primal objective (cost integral minus scaled entropy) with MSA and partial linearization."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import xlogy

from .errors import ValidationError
from .network import Network
from .problem import AssignmentProblem, Trace, eta

PRIMAL_COLUMNS = ("iter", "elapsed_seconds", "objective", "eta_x", "gamma", "fallback")
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def entropy(network: Network, x, alpha) -> np.ndarray:
    """Node entropies ``H_i = -sum_j x_ij ln(x_ij / (alpha_ji z_i))`` with ``z_i = sum_j x_ij``.

    Works row-wise on ``(R, m)`` flows; zero flows contribute nothing.
    """
    x = np.atleast_2d(np.asarray(x, float))
    alpha = np.broadcast_to(np.asarray(alpha, float), x.shape)
    z = network.graph.segment_sum(x)
    zt = z[:, network.tail]
    pos = x > 0
    term = np.zeros_like(x)
    term[pos] = x[pos] * np.log(x[pos] / (alpha[pos] * zt[pos]))
    return -network.graph.segment_sum(term)


def _entropy_terms(problem: AssignmentProblem):
    """Per-link and per-node weights of the scaled entropy sum."""
    net, p = problem.network, problem.params
    inv_theta = 1.0 / p.theta
    link_w = inv_theta[:, net.tail]
    with np.errstate(divide="ignore"):
        log_alpha = np.where(p.alpha > 0, np.log(np.where(p.alpha > 0, p.alpha, 1.0)), 0.0)
    return link_w, link_w * log_alpha, inv_theta


def _scaled_entropy(net: Network, x, z, weights) -> float:
    """``sum_i H_i / theta_i`` written as link and node sums of ``x ln x`` terms."""
    link_w, link_wla, node_w = weights
    return float(np.sum(node_w * xlogy(z, z)) - np.sum(link_w * xlogy(x, x)) + np.sum(link_wla * x))


def primal_objective(problem: AssignmentProblem, x) -> float:
    """``C(X) - sum over rows and nodes of H_i / theta_i``."""
    x = np.atleast_2d(np.asarray(x, float))
    if x.shape[0] == 0:
        return problem.bpr.cost_integral(np.zeros(problem.network.n_links))
    z = problem.network.graph.segment_sum(x)
    return problem.bpr.cost_integral(x.sum(axis=0)) - _scaled_entropy(problem.network, x, z,
                                                                      _entropy_terms(problem))


class _SegmentObjective:
    """Primal objective along ``x + gamma d``; node outflows are linear in ``gamma``."""

    def __init__(self, problem: AssignmentProblem, x, d):
        self.problem, self.x, self.d = problem, x, d
        seg = problem.network.graph.segment_sum
        self.z, self.dz = seg(x), seg(d)
        self.X, self.dX = x.sum(axis=0), d.sum(axis=0)
        self.weights = _entropy_terms(problem)

    def __call__(self, gamma: float) -> float:
        x = np.maximum(self.x + gamma * self.d, 0.0)
        z = np.maximum(self.z + gamma * self.dz, 0.0)
        X = np.maximum(self.X + gamma * self.dX, 0.0)
        return self.problem.bpr.cost_integral(X) - _scaled_entropy(self.problem.network, x, z, self.weights)


@dataclass
class PrimalState:
    x: np.ndarray
    X: np.ndarray
    costs: np.ndarray
    objective: float
    iterations: int
    converged: bool
    trace: Trace


def golden_section(f, lo: float = 0.0, hi: float = 1.0, tol: float = 1e-3):
    """Minimize a unimodal ``f`` on ``[lo, hi]`` until the bracket is shorter than ``tol``.

    Returns ``(argmin, value)`` of the best point evaluated, including the
    interval end points.
    """
    if not tol > 0:
        raise ValidationError("line-search tolerance must be positive")
    a, b = lo, hi
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    seen = [(fc, c), (fd, d)]
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
            seen.append((fc, c))
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
            seen.append((fd, d))
    seen += [(f(lo), lo), (f(hi), hi)]
    finite = [(v, g) for v, g in seen if math.isfinite(v)]
    if not finite:
        return None, math.nan
    v, g = min(finite)
    return g, v


def _solve(problem: AssignmentProblem, max_iter: int, tol: float, reference, line_search_tol, msa: bool,
           init=None) -> PrimalState:
    if max_iter < 0:
        raise ValidationError("max_iter must be non-negative")
    trace = Trace(PRIMAL_COLUMNS, {"solver": "msa" if msa else "pl", "max_iter": max_iter, "tol": tol})
    net, bpr = problem.network, problem.bpr
    x = problem.load(net.free_flow_cost).x if init is None else np.array(init, float)
    obj = primal_objective(problem, x)
    converged = False
    m = 0
    for m in range(1, max_iter + 1):
        c = bpr.cost(x.sum(axis=0))
        y = problem.load(c).x
        d = y - x
        fallback = False
        if msa:
            gamma = 1.0 / m
        else:
            gamma, val = golden_section(_SegmentObjective(problem, x, d), tol=line_search_tol)
            if gamma is None:
                gamma, fallback = 1.0 / m, True
        x = np.maximum(x + gamma * d, 0.0)
        new = primal_objective(problem, x)
        X = x.sum(axis=0)
        ex = eta(X, reference) if reference is not None else math.nan
        trace.add(iter=m, objective=new, eta_x=ex, gamma=gamma, fallback=fallback)
        change = abs(new - obj) / max(abs(new), 1e-300)
        obj = new
        if tol > 0 and change <= tol:
            converged = True
            break
    X = x.sum(axis=0)
    return PrimalState(x, X, bpr.cost(X), obj, m, converged, trace)


def solve_msa(problem: AssignmentProblem, max_iter: int = 250, tol: float = 1e-8, reference=None,
              init=None) -> PrimalState:
    """Method of successive averages with step ``1/m`` at iteration ``m`` (``m = 1, 2, ...``)."""
    return _solve(problem, max_iter, tol, reference, None, msa=True, init=init)


def solve_pl(problem: AssignmentProblem, max_iter: int = 250, tol: float = 1e-8, reference=None,
             line_search_tol: float = 1e-3, init=None) -> PrimalState:
    """Partial linearization: loading at current costs, then golden-section line search."""
    return _solve(problem, max_iter, tol, reference, line_search_tol, msa=False, init=init)
