"""Noise-level sweep on the Log-Lipschitz family and the three rate fits.

    python scripts/run_rate_sweep.py --n 128 --steps 128 --jobs 4
"""

import argparse
import json

from parabolic_recon.evolve import EvolutionFamily, TimeMesh
from parabolic_recon.experiment import DEFAULT_DELTAS, ManufacturedCase, initial_state, summarize, sweep
from parabolic_recon.field import builtin
from parabolic_recon.grid import PeriodicGrid


def main():
    p = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    p.add_argument("--n", type=int, default=128)
    p.add_argument("--steps", type=int, default=128)
    p.add_argument("--horizon", type=float, default=0.1)
    p.add_argument("--beta", type=float, default=0.5)
    p.add_argument("--amp", type=float, default=0.25)
    p.add_argument("--u0", default="tent")
    p.add_argument("--scheme", default="be", choices=("be", "cn"))
    p.add_argument("--seeds", type=int, default=3)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--json", help="also write the fit report here")
    args = p.parse_args()

    fld = builtin("loglip_t", horizon=args.horizon, beta=args.beta, amp=args.amp)
    grid = PeriodicGrid(1, args.n)
    fam = EvolutionFamily(fld, grid, TimeMesh(0.0, args.horizon, args.steps), scheme=args.scheme,
                          inner_solver="direct")
    case = ManufacturedCase(fam, initial_state(args.u0, grid))
    t_star = args.horizon / 4
    rows = sweep(case, DEFAULT_DELTAS, range(args.seeds), t_star=t_star, jobs=args.jobs)
    rep = summarize(rows, t_star)

    print(f"kappa={fld.kappa:.4f}  E={case.E:.4f}  t*={t_star:g}")
    print(f"{'delta':>8} {'sup err':>10} {'tail err':>10} {'tail/sup':>9}")
    for d, s, t, r in zip(rep.deltas, rep.errors_sup, rep.errors_tail, rep.tail_ratios):
        print(f"{d:8.0e} {s:10.4e} {t:10.4e} {r:9.4f}")
    lf, hf, inf = rep.fitted_log, rep.fitted_hoelder, rep.fitted_intermediate
    print(f"log fit:          K={lf.K:.4g} theta={lf.theta:.4f} residual={lf.residual:.4f}")
    print(f"Hoelder fit:      C={hf.C:.4g} beta={hf.beta:.4f} residual={hf.residual:.4f}")
    print(f"intermediate fit: K={inf.K:.4g} N={inf.N:.4f} mu={inf.mu:.4f} residual={inf.residual:.4f}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rep.to_dict(), fh, indent=2, sort_keys=True)


if __name__ == "__main__":
    main()
