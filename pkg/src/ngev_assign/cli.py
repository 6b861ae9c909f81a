"""Command-line entry point: ``ngev-assign <command> [options]``.

Every option named after a ``RunConfig`` field overrides the value read from
``--config``. Outputs are UTF-8 CSV files written to ``output_dir``. Failures
exit with status 1 and print ``error[<category>]: <message>`` to stderr.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import fields
from pathlib import Path

from . import experiments as ex
from .config import RunConfig
from .errors import AssignmentError
from .network import write_tntp

COMMANDS = ("load", "equilibrium", "compare", "bench-loading", "probit-error", "grid-gen")


def _int_list(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ngev-assign", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="key = value file; command-line options take precedence")
        for f in fields(RunConfig):
            p.add_argument("--" + f.name.replace("_", "-"), dest=f.name, default=None, metavar=f.name.upper())
        if name in ("bench-loading", "probit-error"):
            p.add_argument("--ks", type=_int_list, default=[1, 2], help="grid sizes, e.g. 1,2,4")
        if name == "bench-loading":
            p.add_argument("--repeats", type=int, default=3)
        if name == "probit-error":
            p.add_argument("--draw-levels", type=_int_list, default=[10, 100, 1000])
            p.add_argument("--reference-draws", type=int, default=10000)
        if name == "compare":
            p.add_argument("--reference-iter", type=int, default=3000,
                           help="AGP iterations for the reference objective")
    return parser


def config_from_args(args) -> RunConfig:
    overrides = {f.name: getattr(args, f.name) for f in fields(RunConfig) if getattr(args, f.name) is not None}
    if args.config:
        return RunConfig.from_file(args.config, overrides)
    return RunConfig.from_mapping(overrides)


def _write(out: Path, name: str, text: str) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    path = out / name
    path.write_text(text, encoding="utf-8")
    return path


def _link_rows(network, **columns):
    ids = network.node_ids
    rows = []
    for k, (i, j) in enumerate(zip(network.tail, network.head)):
        row = {"tail_id": int(ids[i]), "head_id": int(ids[j])}
        row.update({name: float(col[k]) for name, col in columns.items()})
        rows.append(row)
    return rows


def cmd_load(cfg: RunConfig, args) -> int:
    out = Path(cfg.output_dir)
    net, dem, summary = ex.run_load(cfg)
    _write(out, "flows.csv", ex.rows_to_csv(_link_rows(net, flow=summary.flows)))
    if len(dem.od_pairs) == 1 and dem.total == 1.0 and cfg.model != "sp":
        _write(out, "loading_table.csv", ex.rows_to_csv(ex.loading_table(net, dem)))
    summary_row = {"model": cfg.model, "loading": cfg.loading, "links": net.n_links,
                   "total_demand": dem.total, "max_conservation_residual": summary.conservation,
                   "dial_ties": summary.diagnostics.get("dial_ties", 0)}
    _write(out, "load_summary.csv", ex.rows_to_csv([summary_row]))
    print(f"loaded {dem.total:g} trips on {net.n_links} links; "
          f"max conservation residual {summary.conservation:.3g}")
    return 0


def cmd_equilibrium(cfg: RunConfig, args) -> int:
    out = Path(cfg.output_dir)
    problem = ex.build_problem(cfg)
    state = ex.run_solver(problem, cfg)
    trace = state.trace
    trace.meta.update({k: v for k, v in cfg.as_dict().items() if k not in trace.meta})
    _write(out, f"trace_{cfg.solver}.csv", trace.to_csv())
    if cfg.solver in ("msa", "pl"):
        flows, costs = state.X, state.costs
    else:
        flows, costs = problem.bpr.inverse_cost(state.costs), state.costs
    _write(out, f"final_{cfg.solver}.csv", ex.rows_to_csv(_link_rows(problem.network, flow=flows, cost=costs)))
    print(f"{cfg.solver}: objective {state.objective!r} after {state.iterations} iterations "
          f"({'converged' if state.converged else 'budget reached'})")
    return 0


def cmd_compare(cfg: RunConfig, args) -> int:
    out = Path(cfg.output_dir)
    problem = ex.build_problem(cfg)
    ref = ex.reference_solution(problem.scaled(1.0), max_iter=args.reference_iter, xi=cfg.xi)
    budgets = {name: cfg.max_iter for name in ("msa", "pl", "gp", "agp")}
    rows = ex.compare_solvers(problem, ref, budgets, agp_xi=cfg.xi, gp_step=cfg.step_size or 1e-5)
    _write(out, "compare.csv", ex.rows_to_csv(rows))
    for name in budgets:
        it = [r for r in rows if r["solver"] == name]
        print(f"{name}: final relative gap {it[-1]['relative_gap']:.3g} after {it[-1]['iter']} iterations")
    return 0


def cmd_bench_loading(cfg: RunConfig, args) -> int:
    rows = ex.bench_loading(args.ks, cfg.grid_flow, cfg.draws, args.repeats, cfg.seed)
    path = _write(Path(cfg.output_dir), "bench_loading.csv", ex.rows_to_csv(rows))
    print(f"wrote {path}")
    return 0


def cmd_probit_error(cfg: RunConfig, args) -> int:
    rows = ex.probit_error(args.ks, args.draw_levels, args.reference_draws, cfg.grid_flow,
                           cfg.variance_scale, cfg.seed)
    path = _write(Path(cfg.output_dir), "probit_error.csv", ex.rows_to_csv(rows))
    print(f"wrote {path}")
    return 0


def cmd_grid_gen(cfg: RunConfig, args) -> int:
    out = Path(cfg.output_dir)
    cfg.source = "grid"
    net, dem = ex.build_instance(cfg)
    _write(out, f"grid_k{cfg.grid_k}_links.csv", net.to_csv())
    ids = net.node_ids
    row = {int(d): k for k, d in enumerate(dem.destinations)}
    od = [{"origin_id": int(ids[o]), "destination_id": int(ids[d]), "demand": float(dem.flows[row[d], o])}
          for o, d in dem.od_pairs]
    _write(out, f"grid_k{cfg.grid_k}_demand.csv", ex.rows_to_csv(od, ["origin_id", "destination_id", "demand"]))
    net_text, trips_text = write_tntp(net, dem)
    _write(out, f"grid_k{cfg.grid_k}_net.tntp", net_text)
    _write(out, f"grid_k{cfg.grid_k}_trips.tntp", trips_text)
    print(f"grid k={cfg.grid_k}: {net.n_nodes} nodes, {net.n_links} links, {len(od)} OD pairs")
    return 0


HANDLERS = {
    "load": cmd_load,
    "equilibrium": cmd_equilibrium,
    "compare": cmd_compare,
    "bench-loading": cmd_bench_loading,
    "probit-error": cmd_probit_error,
    "grid-gen": cmd_grid_gen,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
        return HANDLERS[args.command](cfg, args)
    except AssignmentError as exc:
        print(f"error[{exc.category}]: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error[io]: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
