import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_conductances
from dgff.field import (covariance_estimate, harmonic_extension, killed_green, markov_decomposition_check,
                        occupation_green, occupation_identity_check, pair_with_function, sample_dgff)
from dgff.graph import assemble_laplacian, build_torus_lattice, spectral_decompose
from dgff.manifolds import TestFunction, Torus

T1 = Torus(1)
G3 = (np.eye(3) - 1 / 3) / 3
seeds = st.integers(0, 2**32 - 1)


def lap_of(c):
    lap = -c.copy()
    lap[np.diag_indices_from(lap)] = c.sum(axis=1)
    return lap


def complete3_sd(scale=1.0):
    return spectral_decompose(lap_of(scale * (np.ones((3, 3)) - np.eye(3))))


def path3():
    c = np.zeros((3, 3))
    c[0, 1] = c[1, 0] = c[1, 2] = c[2, 1] = 1.0
    return lap_of(c)


# -- sampling ---------------------------------------------------------------


def test_samples_sum_to_zero(rng):
    sd = spectral_decompose(assemble_laplacian(build_torus_lattice(16)))
    phi = sample_dgff(sd, rng, 500)
    assert phi.shape == (500, 16)
    assert np.abs(phi.sum(axis=1)).max() < 1e-12


def wick_se(g, draws):
    return np.sqrt((np.outer(np.diag(g), np.diag(g)) + g**2) / draws)


def test_complete_graph_covariance(rng):
    draws = 100000
    phi = sample_dgff(complete3_sd(), rng, draws)
    cov = covariance_estimate(phi)
    assert np.all(np.abs(cov - G3) <= 5 * wick_se(G3, draws))
    assert np.abs(phi.mean(axis=1)).max() <= 1e-12
    assert np.all(np.abs(cov.sum(axis=1)) < 1e-10)


def test_conductance_scaling_divides_covariance(rng):
    draws = 50000
    cov = covariance_estimate(sample_dgff(complete3_sd(scale=4.0), rng, draws))
    assert np.all(np.abs(cov - G3 / 4) <= 5 * wick_se(G3 / 4, draws))


def test_covariance_estimate_symmetric(rng):
    cov = covariance_estimate(sample_dgff(complete3_sd(), rng, 2))
    assert np.array_equal(cov, cov.T)
    with pytest.raises(ValueError):
        covariance_estimate(np.zeros((1, 3)))


def test_pairing_basic(rng):
    grid = build_torus_lattice(16).grid
    sd = spectral_decompose(assemble_laplacian(build_torus_lattice(16)))
    phi = sample_dgff(sd, rng, 10)
    const = TestFunction(T1, {})
    assert np.all(pair_with_function(phi, const, grid.points) == 0)
    # a genuine constant: the field has zero average
    assert np.abs(phi @ np.full(16, 3.0) / 16).max() < 1e-12
    f, g = TestFunction(T1, {2: 1.0}), TestFunction(T1, {3: -0.4, 6: 2.0})
    assert np.allclose(pair_with_function(phi, f + g, grid.points),
                       pair_with_function(phi, f, grid.points) + pair_with_function(phi, g, grid.points), atol=1e-12)


def test_pairing_variance_lattice(rng):
    lattice = build_torus_lattice(64)
    sd = spectral_decompose(assemble_laplacian(lattice))
    x = math.sqrt(64) * pair_with_function(sample_dgff(sd, rng, 100000), TestFunction(T1, {2: 1.0}),
                                           lattice.grid.points)
    expected = 1 / sd.gap  # single discrete Fourier mode
    se = (x**2).std() / math.sqrt(len(x))
    assert abs((x**2).mean() - expected) < 5 * se


# -- harmonic extension and killed Green function ---------------------------


def test_path_examples():
    h = harmonic_extension(path3(), [1], [2.0, 6.0])
    assert h[1] == pytest.approx(4.0)
    assert killed_green(path3(), [1])[0, 0] == pytest.approx(0.5)


@given(seeds, st.integers(3, 10))
def test_harmonic_extension_properties(seed, n):
    rng = np.random.default_rng(seed)
    lap = lap_of(random_conductances(rng, n))
    k = int(rng.integers(1, n))
    subset = rng.choice(n, k, replace=False)
    outside = np.setdiff1d(np.arange(n), subset)
    assert np.allclose(harmonic_extension(lap, subset, np.full(n - k, 2.5)), 2.5)
    g = rng.standard_normal(n - k)
    h = harmonic_extension(lap, subset, g)
    assert np.all(h[subset] >= g.min() - 1e-12) and np.all(h[subset] <= g.max() + 1e-12)
    assert np.allclose((lap @ h)[subset], 0, atol=1e-10)
    assert np.array_equal(h[outside], g)


@given(seeds, st.integers(3, 10))
def test_killed_green_properties(seed, n):
    rng = np.random.default_rng(seed)
    c = random_conductances(rng, n)
    lap = lap_of(c)
    v = int(rng.integers(n))
    assert killed_green(lap, [v])[0, 0] == pytest.approx(1 / c[v].sum())
    subset = rng.choice(n, int(rng.integers(1, n)), replace=False)
    kg = killed_green(lap, subset)
    assert np.allclose(kg, kg.T)


def test_subset_validation():
    with pytest.raises(ValueError):
        killed_green(path3(), [0, 1, 2])
    with pytest.raises(ValueError):
        killed_green(path3(), [])
    with pytest.raises(ValueError):
        harmonic_extension(path3(), [1], [1.0])


# -- exact identities -------------------------------------------------------


@given(seeds, st.integers(3, 12))
def test_markov_decomposition(seed, n):
    rng = np.random.default_rng(seed)
    lap = lap_of(random_conductances(rng, n))
    sd = spectral_decompose(lap)
    subset = rng.choice(n, int(rng.integers(1, n)), replace=False)
    assert markov_decomposition_check(sd, lap, subset) < 1e-10


def test_markov_decomposition_examples(rng):
    lap = lap_of(random_conductances(rng, 6))
    sd = spectral_decompose(lap)
    assert markov_decomposition_check(sd, lap, [0, 2, 4]) < 1e-10
    assert markov_decomposition_check(sd, lap, [0, 1, 2, 3, 4]) < 1e-10
    lattice = assemble_laplacian(build_torus_lattice(8))
    assert markov_decomposition_check(spectral_decompose(lattice), lattice, [0, 1, 2, 3]) < 1e-10


def test_occupation_complete_graph():
    sd = complete3_sd()
    h = occupation_green(sd)
    assert np.abs(h - G3).max() < 1e-8
    assert np.abs(h @ np.ones(3)).max() < 1e-8


@given(seeds, st.integers(2, 12))
def test_occupation_identity(seed, n):
    rng = np.random.default_rng(seed)
    lap = lap_of(random_conductances(rng, n))
    sd = spectral_decompose(lap)
    assert occupation_identity_check(sd) < 1e-8
    f = rng.standard_normal(n)
    f -= f.mean()
    assert np.allclose(lap @ occupation_green(sd) @ f, f, atol=1e-7)
