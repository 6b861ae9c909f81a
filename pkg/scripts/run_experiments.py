"""Run the standard experiment set through the command-line interface.

Writes every CSV under one output directory:

    python3 scripts/run_experiments.py --out results --quick
"""

import argparse
import sys
from pathlib import Path

from ngev_assign import cli
from ngev_assign.experiments import grid_scaling, loglog_slope, rows_to_csv


def run(argv):
    print("$ ngev-assign", " ".join(argv), flush=True)
    if cli.main(argv) != 0:
        sys.exit(1)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="results")
    ap.add_argument("--quick", action="store_true", help="small budgets and grid sizes")
    args = ap.parse_args()
    out = Path(args.out)
    ks = "1,2" if args.quick else "1,2,4"
    run(["load", "--source", "cyclic", "--loading", "dial", "--output-dir", str(out / "cyclic_dial")])
    run(["load", "--source", "cyclic", "--output-dir", str(out / "cyclic_mta")])
    for solver, iters in (("msa", 250), ("pl", 500), ("agp", 1000)):
        run(["equilibrium", "--solver", solver, "--max-iter", str(50 if args.quick else iters), "--tol", "0",
             "--output-dir", str(out / "sioux_falls")])
    for mult in ("1", "1.5", "2"):
        run(["compare", "--demand-multiplier", mult, "--max-iter", "100" if args.quick else "1500",
             "--output-dir", str(out / f"compare_{mult}q")])
    run(["bench-loading", "--ks", ks, "--output-dir", str(out / "bench")])
    run(["probit-error", "--ks", "1,2", "--draw-levels", "10,100,1000", "--output-dir", str(out / "probit")])
    rows = grid_scaling(tuple(int(k) for k in ks.split(",")))
    (out / "grid_scaling.csv").write_text(rows_to_csv(rows), encoding="utf-8")
    for solver in ("pl", "agp"):
        sub = [r for r in rows if r["solver"] == solver]
        print(solver, "log-log slope", loglog_slope([r["links_x_destinations"] for r in sub],
                                                    [r["seconds"] for r in sub]))


if __name__ == "__main__":
    main()
