import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import minimize_scalar

from dgff.bandwidth import (exact_w1, gap_adjusted_schedule, intermediate_gap, reference_bias_bound,
                            select_bandwidth_wass, wasserstein1_circle, wasserstein1_estimate)
from dgff.manifolds import Sphere2, Torus

T1 = Torus(1)


def circle_w1_bruteforce(points, grid=20001):
    """min_a int |F(x) - x - a| dx on a fine midpoint grid."""
    x = (np.arange(grid) + 0.5) / grid
    pts = np.sort(np.mod(points, 1.0))
    d = np.searchsorted(pts, x, side="right") / len(pts) - x
    return minimize_scalar(lambda a: np.abs(d - a).mean(), bounds=(-1, 1), method="bounded",
                           options={"xatol": 1e-12}).fun


def line_w1(a, b):
    """W_1 on the line via int |F - G|."""
    allx = np.sort(np.concatenate([a, b]))
    fa = np.searchsorted(np.sort(a), allx[:-1], side="right") / len(a)
    fb = np.searchsorted(np.sort(b), allx[:-1], side="right") / len(b)
    return float(np.sum(np.abs(fa - fb) * np.diff(allx)))


# -- circle W_1 -------------------------------------------------------------


@pytest.mark.parametrize("n", [1, 2, 4, 64])
def test_circle_equally_spaced(n):
    assert wasserstein1_circle(np.arange(n) / n) == pytest.approx(1 / (4 * n), abs=1e-12)


def test_circle_examples():
    assert wasserstein1_circle([0.3]) == pytest.approx(0.25, abs=1e-12)
    assert wasserstein1_circle([0.0, 0.5]) == pytest.approx(0.125, abs=1e-12)
    assert wasserstein1_circle(np.arange(4) / 4) == pytest.approx(0.0625, abs=1e-12)


@given(st.lists(st.floats(0, 1, exclude_max=True, allow_nan=False), min_size=1, max_size=12),
       st.floats(0, 1, allow_nan=False))
def test_circle_matches_bruteforce_and_is_rotation_invariant(pts, shift):
    pts = np.array(pts)
    w = wasserstein1_circle(pts)
    assert w == pytest.approx(circle_w1_bruteforce(pts), abs=2e-4)
    assert wasserstein1_circle(pts + shift) == pytest.approx(w, abs=1e-9)


# -- two-sample W_1 ---------------------------------------------------------


@given(st.integers(0, 2**32 - 1), st.sampled_from([(5, 5), (3, 6), (6, 3), (3, 5), (4, 7)]))
def test_exact_w1_line_oracle(seed, sizes):
    rng = np.random.default_rng(seed)
    # keep everything inside an arc of length 0.3 so no transport wraps around
    a, b = rng.uniform(0, 0.3, sizes[0]), rng.uniform(0, 0.3, sizes[1])
    assert exact_w1(T1, a, b) == pytest.approx(line_w1(a, b), abs=1e-9)


def test_exact_w1_identity_and_permutation(rng):
    p = Sphere2().sample_uniform(20, rng)
    q = Sphere2().sample_uniform(40, rng)
    assert exact_w1(Sphere2(), p, p) == pytest.approx(0.0, abs=1e-12)
    assert exact_w1(Sphere2(), p[rng.permutation(20)], q) == pytest.approx(exact_w1(Sphere2(), p, q), abs=1e-12)


def test_estimate_brackets_exact_circle_value():
    for seed in range(5):
        rng = np.random.default_rng(seed)
        pts = T1.sample_uniform(64, rng)
        est, bias = wasserstein1_estimate(T1, pts, 640, rng)
        assert abs(est - wasserstein1_circle(pts)) <= bias


def test_estimate_requires_large_reference(rng):
    with pytest.raises(ValueError):
        wasserstein1_estimate(T1, T1.sample_uniform(10, rng), 50, rng)


def test_bias_bound_shrinks():
    assert reference_bias_bound(T1, 4000) < reference_bias_bound(T1, 400)


# -- bandwidth rule ---------------------------------------------------------


def test_select_bandwidth_examples():
    assert select_bandwidth_wass(1e-6, 1, 0.1) == pytest.approx(1e-2, abs=1e-12)
    assert select_bandwidth_wass(1e-6, 2, 0.1) == pytest.approx(1e-5 ** (1 / 3), rel=1e-12)
    assert select_bandwidth_wass(1e-6, 2, 0.1) == pytest.approx(0.02154, abs=1e-5)


@given(st.floats(1e-9, 1e-1), st.sampled_from([1, 2]), st.floats(0.01, 0.99))
def test_select_bandwidth_power_law(w1, d, safety):
    t = select_bandwidth_wass(w1, d, safety)
    assert select_bandwidth_wass(w1 / 2, d, safety) == pytest.approx(t * 2 ** (-1 / (d / 2 + 2)), rel=1e-12)
    assert safety * t ** (d / 2 + 2) == pytest.approx(w1, rel=1e-10)


def test_select_bandwidth_rejects():
    with pytest.raises(ValueError):
        select_bandwidth_wass(1e-3, 1, 1.0)
    with pytest.raises(ValueError):
        select_bandwidth_wass(0.0, 1, 0.1)


def test_intermediate_gap_examples():
    assert intermediate_gap(0.1, 1.0) == pytest.approx(0.951626, abs=1e-6)
    assert intermediate_gap(0.5, 2.0) == pytest.approx((1 - math.exp(-1)) / 0.5, rel=1e-14)
    assert abs(intermediate_gap(1e-6, 1.0) - 1.0) <= 1e-6 / 2
    with pytest.raises(ValueError):
        intermediate_gap(0.0, 1.0)


# -- gap-adjusted schedule --------------------------------------------------


def synthetic_table(ns, js):
    return {(j, n): 1.0 / n for j in js for n in ns}


def test_schedule_hand_simulated_inverse_n():
    # errors 1/n, t'_n = 3/n: the three conditions give n_j = max(j, n_{j-1} + 1, 3j) = 3j
    ns = list(range(1, 41))
    sched = gap_adjusted_schedule(synthetic_table(ns, range(1, 21)), {n: 3.0 / n for n in ns})
    assert sched.n_j == {j: 3 * j for j in range(1, 14)}
    assert sched.truncated_at == 14
    expected = {1: None, 2: None, 3: 1, 5: 1, 6: 2, 8: 2, 9: 3, 38: 12, 39: 13, 40: 13}
    for n, j in expected.items():
        assert sched.rows[n - 1].j == j
        assert sched.t_for(n) == (None if j is None else 1.0 / j)


def test_schedule_hand_simulated_with_bad_errors():
    t_prime = {10: 0.9, 20: 0.6, 40: 0.4, 80: 0.3}
    errors = {(1, 10): 0.5, (1, 20): 1.2, (1, 40): 0.3, (1, 80): 0.2,
              (2, 10): 0.1, (2, 20): 0.1, (2, 40): 0.1, (2, 80): 0.4,
              (3, 10): 0.0, (3, 20): 0.0, (3, 40): 0.0, (3, 80): 0.0}
    sched = gap_adjusted_schedule(errors, t_prime)
    assert sched.n_j == {1: 40, 2: 80}
    assert sched.truncated_at == 3
    assert [r.t for r in sched.rows] == [None, None, 1.0, 0.5]


def test_schedule_constant_t_prime():
    ns = [8, 16, 32, 64]
    sched = gap_adjusted_schedule(synthetic_table(ns, range(1, 6)), {n: 0.3 for n in ns})
    for r in sched.rows:
        assert r.t is None or r.t >= r.t_prime


def test_schedule_rejects_increasing_t_prime():
    with pytest.raises(ValueError):
        gap_adjusted_schedule({(1, 4): 0.0, (1, 8): 0.0}, {4: 0.2, 8: 0.3})


@given(st.integers(0, 2**32 - 1))
def test_schedule_properties(seed):
    rng = np.random.default_rng(seed)
    ns = sorted(set(rng.integers(2, 200, 10).tolist()))
    t_prime = dict(zip(ns, np.sort(rng.uniform(0.01, 1.5, len(ns)))[::-1]))
    errors = {(j, n): float(rng.exponential(0.3) / math.sqrt(n)) for j in range(1, 12) for n in ns}
    sched = gap_adjusted_schedule(errors, t_prime)
    js = [r.j for r in sched.rows if r.j is not None]
    assert js == sorted(js)
    ts = [r.t for r in sched.rows if r.t is not None]
    assert ts == sorted(ts, reverse=True)
    for r in sched.rows:
        if r.t is not None:
            assert r.t >= r.t_prime
    nj = [sched.n_j[j] for j in sorted(sched.n_j)]
    assert nj == sorted(set(nj))


def test_schedule_csv(tmp_path):
    ns = [4, 8]
    sched = gap_adjusted_schedule(synthetic_table(ns, [1, 2]), {4: 0.9, 8: 0.4})
    sched.to_csv(tmp_path / "s.csv")
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0].startswith("# bandwidth schedule v1")
    assert lines[1] == "N,w1,bias_bound,t_prime,j,t_N"
