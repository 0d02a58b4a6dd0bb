"""Zero-average discrete Gaussian free field: sampling, pairings, Markov checks."""

from __future__ import annotations

import numpy as np
from scipy.special import roots_legendre

from .graph import SpectralData, discrete_semigroup_apply
from .manifolds import TestFunction

QUADRATURE_TAIL = 1e-12
QUADRATURE_NODES = 20
MIN_GAP = 1e-10


def sample_dgff(sd: SpectralData, rng: np.random.Generator, count: int = 1) -> np.ndarray:
    """Draw ``count`` fields as rows: sum_{j>=2} xi_j u_j / sqrt(lambda_j).

    Each row has covariance G^V and sums to zero.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    lam, u = sd.nonconstant
    xi = rng.standard_normal((count, len(lam)))
    return (xi / np.sqrt(lam)) @ u.T


def pair_with_function(samples, f: TestFunction, points) -> np.ndarray:
    """<phi, f> = |V|^{-1} sum_p f(p) phi(p), for one field or a stack of rows."""
    samples = np.asarray(samples, dtype=float)
    vals = f(points)
    return samples @ vals / vals.shape[0]


def covariance_estimate(samples) -> np.ndarray:
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 2 or samples.shape[0] < 2:
        raise ValueError("need at least two samples stacked as rows")
    return np.cov(samples, rowvar=False)


def _split(n: int, subset) -> tuple[np.ndarray, np.ndarray]:
    inside = np.unique(np.asarray(subset, dtype=int))
    if inside.size == 0 or inside.size >= n:
        raise ValueError("subset must be nonempty and proper")
    if inside.min() < 0 or inside.max() >= n:
        raise ValueError("subset index out of range")
    mask = np.zeros(n, dtype=bool)
    mask[inside] = True
    return inside, np.flatnonzero(~mask)


def _interior_block(lap: np.ndarray, inside: np.ndarray) -> np.ndarray:
    block = lap[np.ix_(inside, inside)]
    if np.linalg.cond(block) > 1e14:
        raise np.linalg.LinAlgError("L restricted to the subset is singular; is the graph connected?")
    return block


def harmonic_extension(lap: np.ndarray, subset, boundary_values) -> np.ndarray:
    """Solve the Dirichlet problem: harmonic on ``subset``, equal to the data off it.

    Returns a full-length vector; on the subset it is E_v[g(X_T)] with T the
    exit time of the walk generated by -L.
    """
    lap = np.asarray(lap, dtype=float)
    inside, outside = _split(len(lap), subset)
    g = np.asarray(boundary_values, dtype=float)
    if g.shape != outside.shape:
        raise ValueError(f"expected {outside.size} boundary values, got {g.shape}")
    h = np.empty(len(lap))
    h[outside] = g
    h[inside] = np.linalg.solve(_interior_block(lap, inside), -lap[np.ix_(inside, outside)] @ g)
    return h


def killed_green(lap: np.ndarray, subset) -> np.ndarray:
    """Occupation-time Green's function of the walk killed on leaving ``subset``."""
    lap = np.asarray(lap, dtype=float)
    inside, _ = _split(len(lap), subset)
    return np.linalg.inv(_interior_block(lap, inside))


def markov_decomposition_check(sd: SpectralData, lap: np.ndarray, subset) -> float:
    """max |Cov(phi - E.[phi(X_T)]) - (L_UU)^{-1}| over the subset.

    The covariance side uses the spectral Green's matrix and the linear map
    phi -> phi_U - H phi_outside, with H the harmonic measure.
    """
    lap = np.asarray(lap, dtype=float)
    n = len(lap)
    inside, outside = _split(n, subset)
    block = _interior_block(lap, inside)
    harmonic = np.linalg.solve(block, -lap[np.ix_(inside, outside)])
    a = np.zeros((inside.size, n))
    a[:, inside] = np.eye(inside.size)
    a[:, outside] = -harmonic
    cov = a @ sd.green_matrix() @ a.T
    return float(np.abs(cov - killed_green(lap, inside)).max())


def _panels(sd: SpectralData) -> np.ndarray:
    if sd.gap < MIN_GAP:
        raise ValueError(f"spectral gap {sd.gap:.3g} too small for the occupation-time quadrature")
    horizon = np.log(1.0 / QUADRATURE_TAIL) / sd.gap
    start = 0.5 / sd.eigenvalues[-1]
    edges = [0.0, start]
    while edges[-1] < horizon:
        edges.append(min(2 * edges[-1], horizon))
    return np.array(edges)


def occupation_green(sd: SpectralData) -> np.ndarray:
    """H^V = int_0^inf (S_t - 1/n) dt by composite Gauss-Legendre quadrature.

    Panels double in width from 1/(2 lambda_max) up to a horizon where
    exp(-lambda_2 T) < 1e-12.
    """
    n = sd.n
    nodes, weights = roots_legendre(QUADRATURE_NODES)
    edges = _panels(sd)
    eye = np.eye(n)
    total = np.zeros((n, n))
    for lo, hi in zip(edges[:-1], edges[1:]):
        half = (hi - lo) / 2
        for x, w in zip(nodes, weights):
            t = lo + half * (x + 1)
            total += w * half * (discrete_semigroup_apply(sd, t, eye) - 1.0 / n)
    return total


def occupation_identity_check(sd: SpectralData) -> float:
    """max |H^V - G^V| with H^V from quadrature and G^V from the spectrum."""
    return float(np.abs(occupation_green(sd) - sd.green_matrix()).max())
