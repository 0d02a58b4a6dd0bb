"""Voronoi lift diagnostics across N: fill radius, lifted variance, tightness.

    python scripts/sobolev_lift.py --manifold torus1 --grid lattice --n 32 64 128 256
    python scripts/sobolev_lift.py --manifold sphere2 --grid iid --n 64 128 --t 0.2 --s 2
"""

import argparse
import math

import numpy as np

from dgff.field import sample_dgff
from dgff.graph import (assemble_laplacian, build_heat_kernel_graph, build_torus_lattice, sample_grid,
                        spectral_decompose)
from dgff.manifolds import TestFunction, make_manifold
from dgff.seeding import StreamFactory
from dgff.sobolev import SobolevParams, lift_pair, tightness_statistic, voronoi_assign


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--manifold", default="torus1")
    ap.add_argument("--grid", default="lattice", choices=["lattice", "iid"])
    ap.add_argument("--n", type=int, nargs="+", default=[32, 64, 128])
    ap.add_argument("--t", type=float, default=0.2, help="heat-kernel bandwidth for iid grids")
    ap.add_argument("--s", type=float, default=1.0)
    ap.add_argument("--draws", type=int, default=10000)
    ap.add_argument("--probes-per-cell", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    model = make_manifold(args.manifold)
    f = TestFunction(model, {2: 1.0})
    params = SobolevParams.default_for(model, args.s)
    streams = StreamFactory(args.seed)
    print(f"{'N':>6} {'eps_N':>9} {'lift var':>9} {'grid var':>9} {'envelope':>9} {'tightness':>10} "
          f"{'+-':>7} {'bound':>8} {'ratio':>6}")
    for n in args.n:
        if args.grid == "lattice":
            graph = build_torus_lattice(round(n ** (1 / model.dim)), model.dim)
        else:
            graph = build_heat_kernel_graph(sample_grid(model, n, streams.rng("grid", n, "points")), args.t)
        grid, sd = graph.grid, spectral_decompose(assemble_laplacian(graph))
        tess = voronoi_assign(grid, args.probes_per_cell * grid.n, streams.rng("voronoi", n, "probes"))
        phi = sample_dgff(sd, streams.rng("sobolev", n, "samples"), args.draws)
        a = math.sqrt(grid.n) * lift_pair(phi, tess, f)
        b = math.sqrt(grid.n) * phi @ f(grid.points) / grid.n
        env = 2 * tess.fill_radius * f.lipschitz_bound * f.sup_bound / sd.gap
        tight = tightness_statistic(model, sd, tess, params, args.draws, streams.rng("sobolev", n, "tightness"))
        print(f"{grid.n:>6} {tess.fill_radius:>9.5f} {np.mean(a**2):>9.5f} {np.mean(b**2):>9.5f} {env:>9.4f} "
              f"{tight.statistic:>10.5f} {tight.standard_error:>7.4f} {tight.bound_series:>8.4f} "
              f"{tight.statistic / tight.bound_series:>6.3f}")


if __name__ == "__main__":
    main()
