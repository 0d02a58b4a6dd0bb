"""Covariance and semigroup convergence on torus lattices.

    python scripts/lattice_convergence.py --d 1 --sides 8 16 32 64 128 256
"""

import argparse
import math

from dgff.graph import (assemble_laplacian, build_torus_lattice, discretize_function, green_quadratic_form,
                        semigroup_quadratic_form, spectral_decompose)
from dgff.manifolds import TestFunction, Torus


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--d", type=int, default=1, choices=[1, 2])
    ap.add_argument("--sides", type=int, nargs="+", default=[8, 16, 32, 64, 128, 256])
    ap.add_argument("--modes", default="2:1.0", help="test function as j:c, j:c, ...")
    ap.add_argument("--t", type=float, default=0.5)
    args = ap.parse_args()

    model = Torus(args.d)
    f = TestFunction.parse(model, args.modes)
    target, s_target = f.green_form(), f.semigroup_form(args.t)
    print(f"(f, G f) = {target:.6g}   (f, S_t f) = {s_target:.6g} at t = {args.t}")
    print(f"{'N':>7} {'gap':>10} {'form':>12} {'|form - target|':>16} {'semigroup gap':>14}")
    prev = None
    for side in args.sides:
        graph = build_torus_lattice(side, args.d)
        sd = spectral_decompose(assemble_laplacian(graph))
        f_n = discretize_function(f, graph.grid)
        err = abs(green_quadratic_form(sd, f_n) - target)
        sg = abs(semigroup_quadratic_form(sd, args.t, f_n) - s_target)
        rate = "" if prev is None else f"  rate {math.log(prev / err, 2):.2f}" if err > 0 else ""
        print(f"{graph.n:>7} {sd.gap:>10.6f} {green_quadratic_form(sd, f_n):>12.8f} {err:>16.3e} {sg:>14.3e}{rate}")
        prev = err


if __name__ == "__main__":
    main()
