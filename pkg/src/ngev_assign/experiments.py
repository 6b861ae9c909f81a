"""Experiment runners behind the CLI subcommands and scripts."""

from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass

import numpy as np

from .algebra import Model, NgevParams, make_params
from .config import RunConfig
from .dual import solve_agp, solve_gp
from .errors import ValidationError
from .loading import aon_assign, assign_all, conservation_residual, modified_rows, probit_load, probit_running_means
from .network import DemandTable, Network, cyclic_example, generate_grid, load_tntp, sioux_falls
from .primal import solve_msa, solve_pl
from .problem import AssignmentProblem, eta


def rows_to_csv(rows: list[dict], columns=None) -> str:
    if not rows:
        return ""
    columns = list(columns or rows[0].keys())
    buf = io.StringIO()
    w = csv.DictWriter(buf, columns, lineterminator="\n", extrasaction="ignore")
    w.writeheader()
    for r in rows:
        w.writerow({k: (repr(float(v)) if isinstance(v, (float, np.floating)) else v) for k, v in r.items()})
    return buf.getvalue()


# --------------------------------------------------------------------------
# Instances
# --------------------------------------------------------------------------


def build_instance(cfg: RunConfig) -> tuple[Network, DemandTable]:
    if cfg.source == "sioux-falls":
        net, dem = sioux_falls()
    elif cfg.source == "tntp":
        net, dem = load_tntp(cfg.net, cfg.trips)
    elif cfg.source == "grid":
        net, dem = generate_grid(cfg.grid_k, cfg.grid_flow, cfg.grid_decay)
    else:
        net, dem = cyclic_example()
    if cfg.demand_multiplier != 1.0:
        dem = dem.scaled(cfg.demand_multiplier)
    return net, dem


def build_params(cfg: RunConfig, network: Network, demand: DemandTable) -> NgevParams:
    if cfg.model == "logit":
        return NgevParams.uniform(network, demand.destinations, cfg.theta, 1.0)
    if cfg.model == "sp":
        raise ValidationError("the shortest-path model has no NGEV parameters")
    return make_params(Model.parse(cfg.model), network, demand)


def build_problem(cfg: RunConfig) -> AssignmentProblem:
    if cfg.model == "sp":
        raise ValidationError("equilibrium needs a stochastic model (model1-4 or logit)")
    net, dem = build_instance(cfg)
    return AssignmentProblem(net, dem, method=cfg.loading, params=build_params(cfg, net, dem),
                             bpr_coefficient=cfg.bpr_coefficient)


# --------------------------------------------------------------------------
# Loading
# --------------------------------------------------------------------------


@dataclass
class LoadSummary:
    flows: np.ndarray
    per_destination: tuple[np.ndarray, np.ndarray]
    conservation: float
    diagnostics: dict


def run_load(cfg: RunConfig, costs=None) -> tuple[Network, DemandTable, LoadSummary]:
    """One flow-independent loading at free-flow (or given) costs."""
    net, dem = build_instance(cfg)
    costs = net.free_flow_cost if costs is None else np.asarray(costs, float)
    if cfg.model == "sp":
        X = aon_assign(net, costs, dem)
        per = (dem.destinations, np.zeros((0, net.n_links)))
        return net, dem, LoadSummary(X, per, float("nan"), {})
    params = build_params(cfg, net, dem)
    res = assign_all(net, costs, params, dem, cfg.loading)
    resid = conservation_residual(net, res.x, modified_rows(params.commodity_demand(dem), params.dest))
    cons = float(np.max(np.abs(resid), initial=0.0))
    return net, dem, LoadSummary(res.X, res.per_destination(), cons, res.diagnostics)


def loading_table(network: Network, demand: DemandTable, models=("model1", "model2", "model3", "model4"),
                  methods=("mta", "dial")) -> list[dict]:
    """Link flows for each (model, loading) scenario, one row per scenario."""
    labels = network.link_labels()
    rows = []
    for model in models:
        params = make_params(model, network, demand)
        for method in methods:
            X = assign_all(network, network.free_flow_cost, params, demand, method).X
            row = {"model": model, "loading": method}
            row.update(zip(labels, X))
            rows.append(row)
    return rows


# --------------------------------------------------------------------------
# Equilibrium
# --------------------------------------------------------------------------


def run_solver(problem: AssignmentProblem, cfg: RunConfig, reference=None):
    """Run the configured solver; ``reference`` is ``X*`` (primal) or ``c*`` (dual)."""
    if cfg.solver == "msa":
        return solve_msa(problem, cfg.max_iter, cfg.tol, reference)
    if cfg.solver == "pl":
        return solve_pl(problem, cfg.max_iter, cfg.tol, reference, cfg.line_search_tol)
    if cfg.solver == "gp":
        return solve_gp(problem, cfg.step, cfg.max_iter, cfg.tol, reference)
    return solve_agp(problem, cfg.step, cfg.k_min, cfg.xi, cfg.backtracking, cfg.max_iter, cfg.tol, reference)


@dataclass
class Reference:
    """Highest-accuracy solution: dual costs and the flows loaded at them."""

    costs: np.ndarray
    flows: np.ndarray
    objective: float
    iterations: int


def reference_solution(problem: AssignmentProblem, max_iter: int = 5000, xi: float = 0.25) -> Reference:
    """Long AGP run until the dual objective stops changing."""
    st = solve_agp(problem, max_iter=max_iter, tol=0.0, xi=xi)
    flows = problem.load(st.costs).X
    return Reference(st.costs, flows, st.objective, st.iterations)


def objective_gap(trace, reference_objective: float, column: str) -> np.ndarray:
    """Relative distance of the traced objective to the optimum (non-negative up to round-off)."""
    vals = trace.column(column)
    return np.abs(vals - reference_objective) / abs(reference_objective)


def time_to_gap(trace, reference_objective: float, column: str, level: float) -> tuple[float, float]:
    """``(iteration, elapsed_seconds)`` when the gap first reaches ``level``; ``inf`` if never."""
    gap = objective_gap(trace, reference_objective, column)
    hit = np.flatnonzero(gap <= level)
    if not hit.size:
        return float("inf"), float("inf")
    return float(trace.column("iter")[hit[0]]), float(trace.column("elapsed_seconds")[hit[0]])


def compare_solvers(problem: AssignmentProblem, reference: Reference, budgets: dict, agp_xi: float = 0.25,
                    gp_step: float = 1e-5) -> list[dict]:
    """Run each solver for its iteration budget; rows of (solver, iter, elapsed, gap)."""
    rows = []
    for name, iters in budgets.items():
        fresh = problem.scaled(1.0)
        if name == "msa":
            tr, col = solve_msa(fresh, iters, 0.0).trace, "objective"
        elif name == "pl":
            tr, col = solve_pl(fresh, iters, 0.0).trace, "objective"
        elif name == "gp":
            tr, col = solve_gp(fresh, gp_step, iters, 0.0).trace, "dual_objective"
        elif name == "agp":
            tr, col = solve_agp(fresh, xi=agp_xi, max_iter=iters, tol=0.0).trace, "dual_objective"
        else:
            raise ValidationError(f"unknown solver {name!r}")
        gap = objective_gap(tr, reference.objective, col)
        for it, el, obj, g in zip(tr.column("iter"), tr.column("elapsed_seconds"), tr.column(col), gap):
            rows.append({"solver": name, "iter": int(it), "elapsed_seconds": el, "objective": obj,
                         "relative_gap": g})
    return rows


# --------------------------------------------------------------------------
# Loading benchmarks and probit error
# --------------------------------------------------------------------------


def _timed(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_loading(ks=(1, 2, 4), reference_flow: float = 10000.0, draws: int = 100, repeats: int = 3,
                  seed: int = 0, logit_theta: float = 2.0) -> list[dict]:
    """Best-of-``repeats`` wall time of each loader on grids of size ``k``.

    On unit-cost grids the logit fixed point is finite only for
    ``logit_theta > ln 4`` (four successors per interior node).
    """
    rows = []
    for k in ks:
        net, dem = generate_grid(k, reference_flow)
        logit = NgevParams.uniform(net, dem.destinations, logit_theta, 1.0)
        ngev = make_params(Model.MODEL3, net, dem)
        c = net.free_flow_cost
        timings = {
            "logit_dial": _timed(lambda: assign_all(net, c, logit, dem, "dial"), repeats),
            "logit_mta": _timed(lambda: assign_all(net, c, logit, dem, "mta"), repeats),
            "ngev_dial": _timed(lambda: assign_all(net, c, ngev, dem, "dial"), repeats),
            "ngev_mta": _timed(lambda: assign_all(net, c, ngev, dem, "mta"), repeats),
            "probit": _timed(lambda: probit_load(net, c, dem, draws, seed=seed), 1),
        }
        n_dest = dem.destinations.size
        for loader, secs in timings.items():
            rows.append({"k": k, "links": net.n_links, "od_pairs": len(dem.od_pairs), "destinations": n_dest,
                         "loader": loader, "seconds": secs, "seconds_per_destination": secs / n_dest})
    return rows


def probit_error(ks=(1, 2), draws=(10, 100, 1000), reference_draws: int = 10000,
                 reference_flow: float = 10000.0, variance_scale: float = 0.3, seed: int = 0) -> list[dict]:
    """Max relative error of ``X(R)`` against ``X(reference_draws)`` from one seeded stream."""
    rows = []
    for k in ks:
        net, dem = generate_grid(k, reference_flow)
        means = probit_running_means(net, net.free_flow_cost, dem, list(draws) + [reference_draws],
                                     variance_scale=variance_scale, seed=seed)
        ref = means[reference_draws]
        for r in sorted(set(draws) | {reference_draws}):
            rows.append({"k": k, "draws": r, "max_relative_error": eta(means[r], ref)})
    return rows


def loglog_slope(x, y) -> float:
    """Least-squares slope of ``log y`` against ``log x``."""
    return float(np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)[0])


def grid_scaling(ks=(1, 2, 4), reference_flow: float = 10000.0, gap: float = 1e-5, pl_budget: int = 150,
                 agp_budget: int = 400) -> list[dict]:
    """Seconds for PL and AGP to reach a relative objective gap, per grid size.

    Each solver runs once per grid; the optimum is taken as the best dual
    value of the AGP run, which bounds the primal optimum from below.
    """
    rows = []
    for k in ks:
        net, dem = generate_grid(k, reference_flow)
        size = net.n_links * dem.destinations.size
        pl = solve_pl(AssignmentProblem(net, dem), pl_budget, tol=0.0)
        agp = solve_agp(AssignmentProblem(net, dem), max_iter=agp_budget, tol=0.0)
        best = float(np.max(agp.trace.column("dual_objective")))
        for name, tr, col in (("pl", pl.trace, "objective"), ("agp", agp.trace, "dual_objective")):
            it, secs = time_to_gap(tr, best, col, gap)
            rows.append({"k": k, "links": net.n_links, "destinations": dem.destinations.size,
                         "links_x_destinations": size, "solver": name, "iterations": it, "seconds": secs,
                         "reference_objective": best,
                         "primal_dual_gap": (float(np.min(pl.trace.column("objective"))) - best) / abs(best)})
    return rows
