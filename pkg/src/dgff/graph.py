"""Weighted graphs over manifold grids, their Laplacians and spectral calculus.

The Laplacian acts as ``(L f)(v) = -sum_w c_vw (f(w) - f(v))``.  Everything
downstream (Green operator, semigroup, quadratic forms) goes through a full
dense eigendecomposition, which is what desk-scale grids (N up to a few
thousand) can afford and what the Green/semigroup computations need anyway.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.sparse.csgraph import connected_components

from .manifolds import Manifold, TestFunction, Torus

CONNECTIVITY_RTOL = 1e-10


class DisconnectedGraphError(ValueError):
    pass


@dataclass(frozen=True)
class Grid:
    """Ordered grid points on a manifold.

    ``provenance`` is ``"iid"`` (uniform sample, ``seed`` identifies the
    stream) or ``"lattice"``.
    """

    model: Manifold
    points: np.ndarray
    provenance: str = "iid"
    seed: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "points", self.model.as_points(self.points))

    @property
    def n(self) -> int:
        return len(self.points)

    def head(self, n: int) -> Grid:
        """The first n points; nested grids come from one sampled sequence."""
        if not 1 <= n <= self.n:
            raise ValueError(f"cannot take {n} points from a grid of {self.n}")
        return Grid(self.model, self.points[:n], self.provenance, self.seed)


def sample_grid(model: Manifold, n: int, rng: np.random.Generator, seed: int | None = None) -> Grid:
    return Grid(model, model.sample_uniform(n, rng), "iid", seed)


@dataclass(frozen=True)
class WeightedGraph:
    grid: Grid
    conductances: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.conductances, dtype=float)
        n = self.grid.n
        if c.shape != (n, n):
            raise ValueError(f"conductance matrix has shape {c.shape}, expected {(n, n)}")
        if not np.array_equal(c, c.T):
            raise ValueError("conductances must be exactly symmetric")
        if np.any(c < 0):
            raise ValueError("conductances must be nonnegative")
        if np.any(np.diag(c) != 0):
            raise ValueError("self-conductances must be zero")
        c.flags.writeable = False
        object.__setattr__(self, "conductances", c)

    @property
    def n(self) -> int:
        return self.grid.n

    def is_connected(self) -> bool:
        ncomp, _ = connected_components(self.conductances > 0, directed=False)
        return ncomp == 1

    def scaled(self, factor: float) -> WeightedGraph:
        return WeightedGraph(self.grid, self.conductances * factor)


def build_heat_kernel_graph(grid: Grid, t: float, tol: float | None = None) -> WeightedGraph:
    """Complete graph with conductances p_t(v, w) / (N t)."""
    if grid.n < 2:
        raise ValueError("need at least 2 grid points")
    kwargs = {} if tol is None else {"tol": tol}
    c = grid.model.heat_kernel_matrix(t, grid.points, **kwargs) / (grid.n * t)
    np.fill_diagonal(c, 0.0)
    graph = WeightedGraph(grid, c)
    if not graph.is_connected():  # the heat kernel is strictly positive, so this is a bug guard
        raise DisconnectedGraphError("heat-kernel graph is disconnected")
    return graph


def build_torus_lattice(n_side: int, d: int = 1) -> WeightedGraph:
    """Equally spaced lattice on T^d with nearest-neighbour conductance n^2 / (4 pi^2).

    The grid has n_side**d points.
    """
    if d not in (1, 2):
        raise ValueError(f"lattice dimension must be 1 or 2, got {d}")
    if n_side < 3:
        raise ValueError(f"lattice needs at least 3 points per side, got {n_side}")
    ticks = np.arange(n_side) / n_side
    if d == 1:
        points = ticks[:, None]
    else:
        points = np.stack(np.meshgrid(ticks, ticks, indexing="ij"), axis=-1).reshape(-1, 2)
    idx = np.arange(n_side**d).reshape((n_side,) * d)
    weight = n_side**2 / (4 * np.pi**2)
    c = np.zeros((n_side**d, n_side**d))
    for axis in range(d):
        nbr = np.roll(idx, -1, axis=axis)
        c[idx.ravel(), nbr.ravel()] = weight
        c[nbr.ravel(), idx.ravel()] = weight
    grid = Grid(Torus(d), points, "lattice")
    return WeightedGraph(grid, c)


def torus_lattice_spectrum(n_side: int, d: int = 1) -> np.ndarray:
    """Closed-form lattice eigenvalues (n^2 / pi^2) sum_i sin^2(pi k_i / n), sorted."""
    s = n_side**2 / np.pi**2 * np.sin(np.pi * np.arange(n_side) / n_side) ** 2
    if d == 2:
        s = (s[:, None] + s[None, :]).ravel()
    return np.sort(s)


def assemble_laplacian(graph: WeightedGraph) -> np.ndarray:
    if not graph.is_connected():
        raise DisconnectedGraphError("graph has more than one connected component")
    c = graph.conductances
    lap = -c.copy()
    lap[np.diag_indices_from(lap)] = c.sum(axis=1)
    return lap


@dataclass(frozen=True)
class SpectralData:
    """Ascending eigenvalues and orthonormal eigenvectors (columns) of a Laplacian.

    Column 0 is the constant mode; the remaining columns are projected
    orthogonal to constants so that spectral synthesis yields exactly
    zero-sum vectors.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def n(self) -> int:
        return len(self.eigenvalues)

    @property
    def gap(self) -> float:
        return float(self.eigenvalues[1])

    @property
    def nonconstant(self) -> tuple[np.ndarray, np.ndarray]:
        return self.eigenvalues[1:], self.eigenvectors[:, 1:]

    def green_matrix(self) -> np.ndarray:
        lam, u = self.nonconstant
        return (u / lam) @ u.T

    def dump_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["j", "eigenvalue"])
            for j, lam in enumerate(self.eigenvalues, start=1):
                w.writerow([j, repr(float(lam))])


def spectral_decompose(lap: np.ndarray) -> SpectralData:
    lap = np.asarray(lap, dtype=float)
    if not np.allclose(lap, lap.T, rtol=0, atol=1e-14 * max(1.0, np.abs(lap).max())):
        raise ValueError("Laplacian must be symmetric")
    lam, u = np.linalg.eigh(lap)
    n = len(lam)
    if n >= 2 and not lam[1] > CONNECTIVITY_RTOL * max(lam[-1], 0.0):
        raise DisconnectedGraphError(f"second eigenvalue {lam[1]:.3g} is numerically zero; graph is disconnected")
    u = u.copy()
    u[:, 0] = 1.0 / np.sqrt(n)
    if n >= 2:
        u[:, 1:] -= u[:, 1:].mean(axis=0, keepdims=True)
    lam = lam.copy()
    lam[0] = 0.0
    lam.flags.writeable = False
    u.flags.writeable = False
    return SpectralData(lam, u)


def spectral_gap(sd: SpectralData) -> float:
    return sd.gap


def discrete_green_apply(sd: SpectralData, f) -> np.ndarray:
    """G f = sum_{j>=2} (u_j . f) u_j / lambda_j; zero on constants."""
    lam, u = sd.nonconstant
    coef = u.T @ np.asarray(f, dtype=float)
    return u @ (coef / lam.reshape((-1,) + (1,) * (coef.ndim - 1)))


def discrete_semigroup_apply(sd: SpectralData, t: float, f) -> np.ndarray:
    """exp(-t L) f."""
    if t < 0:
        raise ValueError("semigroup time must be nonnegative")
    u = sd.eigenvectors
    coef = u.T @ np.asarray(f, dtype=float)
    decay = np.exp(-t * sd.eigenvalues)
    return u @ (decay.reshape((-1,) + (1,) * (coef.ndim - 1)) * coef)


def discretize_function(f: TestFunction, grid: Grid) -> np.ndarray:
    """Grid values of f minus their empirical mean."""
    vals = f(grid.points)
    return vals - vals.mean()


def _check_zero_sum(f_n: np.ndarray) -> None:
    if abs(f_n.sum()) > 1e-9 * max(np.linalg.norm(f_n), 1e-300) and np.any(f_n):
        raise ValueError("discretized function must sum to zero")


def spectral_measure(sd: SpectralData, f_n) -> tuple[np.ndarray, np.ndarray]:
    """Atoms (lambda_j, |P_j f|^2) for j >= 2."""
    lam, u = sd.nonconstant
    return lam.copy(), (u.T @ np.asarray(f_n, dtype=float)) ** 2


def green_quadratic_form(sd: SpectralData, f_n) -> float:
    """N^{-1} (f_N, G_N f_N) for a zero-sum grid vector."""
    f_n = np.asarray(f_n, dtype=float)
    _check_zero_sum(f_n)
    lam, weights = spectral_measure(sd, f_n)
    return float((weights / lam).sum() / sd.n)


def semigroup_quadratic_form(sd: SpectralData, t: float, f_n) -> float:
    """N^{-1} (f_N, S_t f_N)."""
    f_n = np.asarray(f_n, dtype=float)
    return float(f_n @ discrete_semigroup_apply(sd, t, f_n) / sd.n)
