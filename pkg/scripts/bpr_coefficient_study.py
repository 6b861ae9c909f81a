"""Sioux Falls solver behaviour under two BPR coefficients (b = 1 and b = 0.15).

For each coefficient and demand level, reports AGP and PL iteration counts to
the 1e-4 relative-difference levels and the fixed-step versus backtracking
AGP comparison at 400 iterations.

    python3 scripts/bpr_coefficient_study.py --levels 1,2
"""

import argparse

import numpy as np

from ngev_assign.dual import solve_agp
from ngev_assign.network import sioux_falls
from ngev_assign.primal import solve_pl
from ngev_assign.problem import AssignmentProblem, first_reach


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--coefficients", default="1,0.15")
    ap.add_argument("--levels", default="1,1.5,2")
    ap.add_argument("--pl-iter", type=int, default=3000)
    ap.add_argument("--agp-iter", type=int, default=2000)
    args = ap.parse_args()
    net, dem = sioux_falls()
    print("b,level,ref_iter,agp_iter_1e-4,pl_iter_1e-4,bt_eta_c_400,fixed_1e-5_eta_c_400,fixed_5e-6_eta_c_400")
    for b in (float(v) for v in args.coefficients.split(",")):
        for level in (float(v) for v in args.levels.split(",")):
            def fresh():
                return AssignmentProblem(net, dem, bpr_coefficient=b).scaled(level)
            ref = solve_agp(fresh(), max_iter=5000, tol=0.0)
            flows = fresh().load(ref.costs).X
            agp = solve_agp(fresh(), k_min=50, max_iter=args.agp_iter, tol=0.0, reference=ref.costs)
            pl = solve_pl(fresh(), args.pl_iter, 0.0, flows)
            bt = np.min(agp.trace.column("eta_c")[:400])
            fixed = [np.min(solve_agp(fresh(), step_size=s, backtracking=False, max_iter=400, tol=0.0,
                                      reference=ref.costs).trace.column("eta_c")) for s in (1e-5, 5e-6)]
            print(f"{b},{level},{ref.iterations},{first_reach(agp.trace, 'eta_c', 1e-4)},"
                  f"{first_reach(pl.trace, 'eta_x', 1e-4)},{bt:.3e},{fixed[0]:.3e},{fixed[1]:.3e}", flush=True)


if __name__ == "__main__":
    main()
