"""Voronoi lift of grid fields into H^{-s} and the associated diagnostics.

Cells, cell volumes and cell averages are estimated with shared Monte Carlo
probes: each probe goes to its nearest grid point (lowest index on ties).
The fill radius is the largest probe-to-centre distance seen, so it is a
lower estimate of the true value.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import zeta

from .graph import Grid, SpectralData
from .manifolds import Manifold, Sphere2, TestFunction, Torus

STRATA_PER_AXIS = 16


class SobolevExponentWarning(UserWarning):
    pass


@dataclass(frozen=True)
class VoronoiTessellation:
    grid: Grid
    probes: np.ndarray
    owner: np.ndarray  # grid index of each probe
    counts: np.ndarray
    cell_radius: np.ndarray  # max probe distance per cell

    @property
    def m(self) -> int:
        return len(self.owner)

    @property
    def volumes(self) -> np.ndarray:
        return self.counts / self.m

    @property
    def volume_se(self) -> np.ndarray:
        v = self.volumes
        return np.sqrt(v * (1 - v) / self.m)

    @property
    def fill_radius(self) -> float:
        return float(self.cell_radius.max())

    @property
    def all_cells_hit(self) -> bool:
        return bool(np.all(self.counts > 0))

    def summary_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(f"# voronoi summary v1 probes={self.m}\n")
            w = csv.writer(fh)
            w.writerow(["i", "v_i", "se", "max_probe_distance"])
            for i, (v, se, r) in enumerate(zip(self.volumes, self.volume_se, self.cell_radius)):
                w.writerow([i, repr(float(v)), repr(float(se)), repr(float(r))])


def stratified_probes(model: Manifold, m: int, rng: np.random.Generator) -> np.ndarray:
    """m uniform points, stratified over a coarse partition of equal-measure cells."""
    if isinstance(model, Torus):
        k = STRATA_PER_AXIS
        ncell = k**model.d
        cell = np.arange(m) % ncell
        corner = np.stack(np.unravel_index(cell, (k,) * model.d), axis=-1) / k
        return corner + rng.random((m, model.d)) / k
    if isinstance(model, Sphere2):
        # z is uniform on [-1, 1] under the area measure, so z-bands have equal area
        k = STRATA_PER_AXIS
        band = np.arange(m) % k
        z = -1 + 2 * (band + rng.random(m)) / k
        phi = 2 * np.pi * rng.random(m)
        r = np.sqrt(np.clip(1 - z * z, 0, None))
        return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=-1)
    return model.sample_uniform(m, rng)


def _nearest(model: Manifold, centres: np.ndarray, probes: np.ndarray):
    n = len(centres)
    k = min(2, n)
    if isinstance(model, Torus):
        tree = cKDTree(centres, boxsize=1.0)
        dist, idx = tree.query(probes, k=k)
    else:
        tree = cKDTree(centres)
        dist, idx = tree.query(probes, k=k)
    if k == 2:
        tie = np.isclose(dist[:, 0], dist[:, 1], rtol=0, atol=1e-15)
        owner = np.where(tie, np.minimum(idx[:, 0], idx[:, 1]), idx[:, 0])
    else:
        owner = idx.reshape(-1)
    return owner.astype(int), model.distance(probes, centres[owner])


def voronoi_assign(grid: Grid, m: int, rng: np.random.Generator) -> VoronoiTessellation:
    model = grid.model
    if m < 100 * grid.n:
        warnings.warn(f"{m} probes for {grid.n} cells; at least 100 per cell is recommended", stacklevel=2)
    probes = stratified_probes(model, m, rng)
    owner, dist = _nearest(model, grid.points, probes)
    counts = np.bincount(owner, minlength=grid.n)
    radius = np.zeros(grid.n)
    np.maximum.at(radius, owner, dist)
    return VoronoiTessellation(grid, probes, owner, counts, radius)


def fill_radius(tess: VoronoiTessellation) -> float:
    return tess.fill_radius


def _cell_means(values: np.ndarray, tess: VoronoiTessellation):
    """Per-cell probe means of one or more columns of probe values."""
    values = values.reshape(tess.m, -1)
    counts = tess.counts
    if np.any(counts == 0):
        raise ValueError(f"{int((counts == 0).sum())} Voronoi cells received no probes")
    sums = np.zeros((tess.grid.n, values.shape[1]))
    np.add.at(sums, tess.owner, values)
    sq = np.zeros_like(sums)
    np.add.at(sq, tess.owner, values**2)
    mean = sums / counts[:, None]
    var = np.maximum(sq / counts[:, None] - mean**2, 0.0)
    se = np.sqrt(var / np.maximum(counts[:, None] - 1, 1))
    return mean, se


def cell_averages(f: TestFunction, tess: VoronoiTessellation) -> tuple[np.ndarray, np.ndarray]:
    """Monte Carlo cell averages of f and their standard errors, all cells."""
    mean, se = _cell_means(f(tess.probes), tess)
    return mean[:, 0], se[:, 0]


def cell_average(f: TestFunction, tess: VoronoiTessellation, i: int) -> tuple[float, float]:
    if tess.counts[i] == 0:
        raise ValueError(f"cell {i} received no probes")
    vals = f(tess.probes[tess.owner == i])
    se = vals.std(ddof=1) / math.sqrt(len(vals)) if len(vals) > 1 else 0.0
    return float(vals.mean()), float(se)


def lift_pair(samples, tess: VoronoiTessellation, f: TestFunction) -> np.ndarray:
    """<lifted phi, f> = N^{-1} sum_i phi(p_i) (cell average of f over C_i)."""
    avg, _ = cell_averages(f, tess)
    return np.asarray(samples, dtype=float) @ avg / tess.grid.n


@dataclass(frozen=True)
class SobolevParams:
    s: float
    modes: int  # flat index J: pairings for 2 <= j <= J
    dim: int

    def __post_init__(self):
        if self.modes < 2:
            raise ValueError("need at least one nonconstant mode")
        if self.s <= self.dim - 0.5:
            warnings.warn(
                f"s = {self.s} <= d - 1/2 = {self.dim - 0.5}: the H^-s norm series is not summable under the "
                "sup-norm eigenfunction bound",
                SobolevExponentWarning,
                stacklevel=3,
            )

    @classmethod
    def default_for(cls, model: Manifold, s: float) -> SobolevParams:
        """All modes with lambda <= 400 on tori, degree <= 20 on the sphere."""
        cutoff = 400.0 if isinstance(model, Torus) else 20 * 21
        return cls(s, model.count_below(cutoff), model.dim)


def bound_terms(model: Manifold, s: float, count: int) -> np.ndarray:
    """lambda_j^{-s} ||e_j||_inf^2 for j = 2..count."""
    lam = model.eigenvalues(count)[1:]
    return lam ** (-s) * model.sup_norms(count)[1:] ** 2


def bound_tail(model: Manifold, s: float, count: int) -> float:
    """Upper bound on sum_{j > count} lambda_j^{-s} ||e_j||_inf^2 (inf if divergent).

    ``count`` should end on a complete eigenspace.
    """
    lam_max = model.eigenvalues(count)[-1]
    if isinstance(model, Torus) and model.d == 1:
        if s <= 0.5:
            return math.inf
        k = math.sqrt(lam_max)
        # 2 modes per k, sup^2 = 2: 4 sum_{k > K} k^{-2s} <= 4 K^{1-2s} / (2s - 1)
        return 4 * k ** (1 - 2 * s) / (2 * s - 1)
    if isinstance(model, Torus):
        if s <= 1:
            return math.inf
        r = math.sqrt(lam_max)
        # lattice points with |k| > R lie in unit squares covering |x| > R - sqrt(2)/2
        r0 = max(r - math.sqrt(2) / 2, 1e-12)
        # 2 * int_{|x| > r0} |x|^{-2s} dx, shifted radius accounts for the square covering
        return 2 * 2 * math.pi * (r0) ** (2 - 2 * s) / (2 * s - 2) * (1 + math.sqrt(2) / (2 * r0)) ** (2 * s)
    if s <= 1.5:
        return math.inf
    lmax = int(round((-1 + math.sqrt(1 + 4 * lam_max)) / 2))
    # (2l+1)^2 / (l(l+1))^s <= 9 l^{2-2s} for l >= 1
    return 9 * lmax ** (3 - 2 * s) / (2 * s - 3)


def bound_series(model: Manifold, s: float) -> float:
    """sum_{j>=2} lambda_j^{-s} ||e_j||_inf^2 with the explicit sup norms."""
    if isinstance(model, Torus) and model.d == 1:
        return 4 * float(zeta(2 * s)) if s > 0.5 else math.inf
    count = model.count_below(400.0 if isinstance(model, Torus) else 60 * 61)
    tail = bound_tail(model, s, count)
    return float(bound_terms(model, s, count).sum() + tail)


def sobolev_neg_norm(pairings, eigenvalues, params: SobolevParams) -> np.ndarray:
    """Squared truncated H^{-s} norm sum_{j=2}^{J} lambda_j^{-s} <psi, e_j>^2.

    ``pairings`` and ``eigenvalues`` are indexed by j = 2..J (last axis of
    length J - 1); leading batch axes on ``pairings`` are kept.
    """
    pairings = np.asarray(pairings, dtype=float)
    lam = np.asarray(eigenvalues, dtype=float)
    if pairings.shape[-1] != len(lam):
        raise ValueError("pairings and eigenvalues disagree in length")
    return (lam ** (-params.s) * pairings**2).sum(axis=-1)


def truncated_norm_with_tail(model: Manifold, pairings, params: SobolevParams, pairing_scale: float):
    """Truncated squared norm and a bound on the dropped tail.

    ``pairing_scale`` is an A with |<psi, e_j>| <= A ||e_j||_inf for all j
    (e.g. the total variation of a measure), so the tail is at most A^2 times
    the tail of the sup-norm series.
    """
    lam = model.eigenvalues(params.modes)[1:]
    return sobolev_neg_norm(pairings, lam, params), pairing_scale**2 * bound_tail(model, params.s, params.modes)


def lifted_mode_averages(model: Manifold, tess: VoronoiTessellation, count: int) -> np.ndarray:
    """(N, count - 1) matrix of cell averages of e_2..e_count."""
    vals = model.eigenfunctions(tess.probes, count)[:, 1:]
    mean, _ = _cell_means(vals, tess)
    return mean


@dataclass
class TightnessResult:
    statistic: float
    standard_error: float
    exact_expectation: float
    bound_truncated: float  # ||G_N|| sum_{j<=J} lambda_j^{-s} ||e_j||^2_inf
    bound_series: float  # ||G_N|| times the full series
    draws: int


def tightness_statistic(model: Manifold, sd: SpectralData, tess: VoronoiTessellation, params: SobolevParams,
                        draws: int, rng: np.random.Generator) -> TightnessResult:
    """Monte Carlo estimate of E ||sqrt(N) lifted phi_N||^2_{-s}, truncated at J modes."""
    from .field import sample_dgff

    if draws < 2:
        raise ValueError("need at least two draws")
    n = tess.grid.n
    lam = model.eigenvalues(params.modes)[1:]
    weights = lam ** (-params.s)
    avg = lifted_mode_averages(model, tess, params.modes)
    stats = np.empty(draws)
    block = 2048
    for lo in range(0, draws, block):
        phi = sample_dgff(sd, rng, min(block, draws - lo))
        pair = np.sqrt(n) * phi @ avg / n
        stats[lo:lo + len(phi)] = (weights * pair**2).sum(axis=1)
    # exact mean of the same truncated quantity for cross-checking
    g_avg = sd.green_matrix() @ avg
    exact = float((weights * (avg * g_avg).sum(axis=0)).sum() / n)
    inv_gap = 1.0 / sd.gap
    return TightnessResult(
        statistic=float(stats.mean()),
        standard_error=float(stats.std(ddof=1) / math.sqrt(draws)),
        exact_expectation=exact,
        bound_truncated=float(inv_gap * bound_terms(model, params.s, params.modes).sum()),
        bound_series=inv_gap * bound_series(model, params.s),
        draws=draws,
    )


def pairing_csv(path, eigenvalues, pairings) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("# lifted pairings v1\n")
        w = csv.writer(fh)
        w.writerow(["j", "lambda_j", "pairing"])
        for j, (lam, p) in enumerate(zip(eigenvalues, pairings), start=2):
            w.writerow([j, repr(float(lam)), repr(float(p))])
