"""Scan fixed bandwidths on i.i.d. circle grids.

For each (N, t) prints the median over seeds of |N^{-1}(f_N, G_N f_N) - 1| for
f = sqrt(2) cos(2 pi x), next to the same quantity on the equally spaced grid
and the continuum value t / (1 - e^{-t}) - 1 of the intermediate operator.
The gap between the i.i.d. and regular columns is the sampling noise that the
bandwidth has to average out.

    python scripts/bandwidth_scan.py --n 128 256 512 --t 0.05 0.1 0.2 0.3 --seeds 5
"""

import argparse

import numpy as np

from dgff.graph import (Grid, assemble_laplacian, build_heat_kernel_graph, discretize_function,
                        green_quadratic_form, sample_grid, spectral_decompose)
from dgff.manifolds import TestFunction, Torus


def form_error(grid, t, f):
    sd = spectral_decompose(assemble_laplacian(build_heat_kernel_graph(grid, t)))
    return abs(green_quadratic_form(sd, discretize_function(f, grid)) - 1.0), sd.gap


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, nargs="+", default=[128, 256, 512])
    ap.add_argument("--t", type=float, nargs="+", default=[0.02, 0.05, 0.1, 0.2, 0.3, 0.5, 1.0])
    ap.add_argument("--seeds", type=int, default=5)
    args = ap.parse_args()

    model = Torus(1)
    f = TestFunction(model, {2: 1.0})
    print(f"{'N':>6} {'t':>6} {'iid median':>11} {'gap median':>11} {'regular':>9} {'continuum':>10}")
    for n in args.n:
        regular = Grid(model, np.arange(n) / n)
        for t in args.t:
            errs, gaps = zip(*(form_error(sample_grid(model, n, np.random.default_rng(s)), t, f)
                               for s in range(args.seeds)))
            reg, _ = form_error(regular, t, f)
            print(f"{n:>6} {t:>6.3g} {np.median(errs):>11.4f} {np.median(gaps):>11.4f} {reg:>9.4f} "
                  f"{t / -np.expm1(-t) - 1:>10.4f}")


if __name__ == "__main__":
    main()
