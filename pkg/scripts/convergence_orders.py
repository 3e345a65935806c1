"""Observed orders of the time steppers and of the spatial stencil.

    python scripts/convergence_orders.py --family loglip_t
"""

import argparse

import numpy as np

from parabolic_recon.evolve import EvolutionFamily, TimeMesh
from parabolic_recon.field import builtin
from parabolic_recon.grid import PeriodicGrid, apply_stiffness, l2_norm


def time_orders(family, horizon, n, reference_steps):
    params = {"amp": 0.25} if family == "loglip_t" else {}
    fld = builtin(family, horizon=horizon, **params)
    grid = PeriodicGrid(1, n)
    x = grid.coordinates()[..., 0]
    u0 = np.sin(x) + np.cos(2 * x) ** 2

    def run(scheme, steps):
        fam = EvolutionFamily(fld, grid, TimeMesh(0.0, horizon, steps), scheme=scheme, inner_solver="direct")
        return fam.apply_forward(u0)

    ref = run("cn", reference_steps)
    for scheme in ("be", "cn"):
        errs = [l2_norm(grid, run(scheme, k) - ref) for k in (8, 16, 32, 64)]
        orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
        print(f"{scheme}: errors " + " ".join(f"{e:.2e}" for e in errs)
              + "  orders " + " ".join(f"{o:.2f}" for o in orders))


def space_orders():
    fld = builtin("autonomous", amp=0.5)
    errs = []
    for n in (32, 64, 128, 256):
        grid = PeriodicGrid(1, n)
        x = grid.coordinates()[..., 0]
        a, da = 1 + 0.5 * np.sin(x), 0.5 * np.cos(x)
        exact = -(da * -2 * np.sin(2 * x) + a * -4 * np.cos(2 * x))
        errs.append(np.max(np.abs(apply_stiffness(fld, grid, 0.0, np.cos(2 * x)) - exact)))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    print("stencil: max errors " + " ".join(f"{e:.2e}" for e in errs)
          + "  orders " + " ".join(f"{o:.2f}" for o in orders))


def main():
    p = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    p.add_argument("--family", default="lipschitz_t")
    p.add_argument("--horizon", type=float, default=0.5)
    p.add_argument("--n", type=int, default=32)
    p.add_argument("--reference-steps", type=int, default=2048)
    args = p.parse_args()
    time_orders(args.family, args.horizon, args.n, args.reference_steps)
    space_orders()


if __name__ == "__main__":
    main()
