import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ustlab.capacity import (
    GreenTable,
    alpha_r_good,
    canonical_offset,
    capacity_escape_mc,
    capacity_variational,
    cover_sums,
    greedy_cover,
    goodness_classifier,
    lerw_prefix,
    lerw_rho,
    uniform_hit_sum,
)
from ustlab.experiments.oracles import random_point_set
from ustlab.lattice import RngSeed
from ustlab.paths import erase_loops

# Cap({0}) = 2d P(no return) = 8 / 1.23946712 on Z^4
CAP_POINT_Z4 = 8 / 1.23946712


@pytest.fixture(scope="module")
def green_table():
    return GreenTable.build(4, 2, 2500, 10**6, RngSeed(77), use_cache=False)


def test_singleton_escape():
    est = capacity_escape_mc([[0, 0, 0, 0]], 20000, seed=RngSeed(1))
    assert abs(est.value - CAP_POINT_Z4) <= 3 * est.std_error


def test_singleton_variational(green_table):
    est, mu = capacity_variational([[0, 0, 0, 0]], green_table)
    assert mu.weights.tolist() == [1.0]
    assert abs(est.value - CAP_POINT_Z4) <= 3 * est.std_error


def test_capacity_monotone_and_subadditive():
    a = capacity_escape_mc([[0, 0, 0, 0]], 20000, seed=RngSeed(2))
    b = capacity_escape_mc([[0, 0, 0, 0], [3, 0, 0, 0]], 20000, seed=RngSeed(3))
    assert b.value > a.value - 3 * math.hypot(a.std_error, b.std_error)
    assert b.value < 2 * a.value + 3 * math.hypot(2 * a.std_error, b.std_error)


def test_recurrent_dimension_rejected():
    with pytest.raises(ValueError):
        capacity_escape_mc([[0, 0]], 10)


def test_sampled_start_points_unbiased():
    S = [[i, 0, 0, 0] for i in range(6)]
    full = capacity_escape_mc(S, 3000, seed=RngSeed(4))
    samp = capacity_escape_mc(S, 3, seed=RngSeed(5), sample_points=6000)
    assert abs(full.value - samp.value) <= 3 * math.hypot(full.std_error, samp.std_error)


@given(st.lists(st.integers(-3, 3), min_size=4, max_size=4))
def test_canonical_offset_symmetry(v):
    o = canonical_offset(v)
    assert o == canonical_offset([-x for x in v]) == canonical_offset(v[::-1])
    assert list(o) == sorted(o, reverse=True) and min(o) >= 0


def test_green_table_cache(cache_dir):
    t1 = GreenTable.build(3, 1, 200, 10**5, RngSeed(1))
    assert list(cache_dir.glob("*.npz"))
    t2 = GreenTable.build(3, 1, 200, 10**5, RngSeed(1))
    assert t1.values == t2.values


def test_equilibrium_measure_symmetric_pair(green_table):
    est, mu = capacity_variational([[0, 0, 0, 0], [1, 0, 0, 0]], green_table)
    assert mu.weights == pytest.approx([0.5, 0.5])
    assert 1 / mu.quadratic_form_value == pytest.approx(est.value)


def test_hit_sum_empty_and_scaling():
    assert uniform_hit_sum([], 4, 10).value == 0
    cap = capacity_escape_mc([[0, 0, 0, 0]], 4000, seed=RngSeed(1))
    est = uniform_hit_sum([[0, 0, 0, 0]], 4, 20000, seed=RngSeed(2), cap=cap)
    assert est.value >= 1
    assert 0.1 < est.extra["ratio"] < 2
    with pytest.raises(ValueError):
        uniform_hit_sum([[9, 0, 0, 0]], 4, 10)


def test_goodness_extremes():
    gamma = np.zeros((1, 4), dtype=np.int64)
    assert not alpha_r_good(gamma, 0.0, 3, 100, RngSeed(0)).good
    g = alpha_r_good(gamma, 1e9, 3, 100, RngSeed(0))
    assert g.good and g.margin_sigma > 0
    with pytest.raises(ValueError):
        alpha_r_good(gamma, 1.0, 2, 10, RngSeed(0))


def test_goodness_classifier_is_pure():
    clf = goodness_classifier(50, RngSeed(3))
    path = np.array([[0, 0, 0, 0], [1, 0, 0, 0], [1, 1, 0, 0]])
    assert clf(path, 5.0, 3) == clf(path.copy(), 5.0, 3)


@given(st.integers(0, 2**32), st.sampled_from([1, 2, 5]))
def test_covering_bullets(seed, r):
    rng = np.random.default_rng(seed)
    S = random_point_set(rng, d=3, max_size=120, spread=60)
    centers = greedy_cover(S, r)
    inner, outer, total = cover_sums(S, centers, r)
    assert inner >= 3.0**-3 * total
    assert outer <= 15.0**3 * inner
    c = np.array(centers)
    gaps = np.abs(c[:, None] - c[None]).max(axis=2) + np.eye(len(c), dtype=int) * 10**9
    assert gaps.min() > 4 * r


def test_covering_disjoint_mode():
    rng = np.random.default_rng(1)
    S = random_point_set(rng, d=2, max_size=300, spread=80)
    r = 3
    centers = greedy_cover(S, r, exclusion=2)
    inner, outer, total = cover_sums(S, centers, r)
    assert inner >= 5.0**-2 * total
    c = np.array(centers)
    gaps = np.abs(c[:, None] - c[None]).max(axis=2) + np.eye(len(c), dtype=int) * 10**9
    assert gaps.min() > 6 * r


def test_covering_lexicographic_ties():
    S = np.array([[0, 0], [10, 0]])
    assert greedy_cover(S, 1) == [(0, 0), (9, 0)]


def test_lerw_prefix_is_loop_erased():
    g = lerw_prefix(64, RngSeed(8))
    assert g.length == 64 and g.is_simple() and erase_loops(g).erased == g


def test_lerw_rho_order():
    n = 4000
    v = [lerw_rho(n, RngSeed(1).child(k)) for k in range(10)]
    assert all(0 < x <= n for x in v)
    assert 0.4 < np.median(v) / (n / math.log(n) ** (1 / 3)) < 2.5
