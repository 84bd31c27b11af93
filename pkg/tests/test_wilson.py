import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.stats import chisquare

from ustlab.lattice import RngSeed
from ustlab.paths import Path, erase_loops
from ustlab.wilson import (
    FiniteGraph,
    SpanningTree,
    box_coords,
    edge_marginals,
    enumerate_spanning_trees,
    spanning_tree_law,
    tree_frequencies,
    wilson_sample,
    wired_box_ust,
    zero_wired_box,
)


def kirchhoff(g: FiniteGraph) -> int:
    A = np.zeros((g.n, g.n))
    for u, v in g.edges:
        A[u, v] += 1
        A[v, u] += 1
    Lap = np.diag(A.sum(1)) - A
    return round(np.linalg.det(Lap[1:, 1:]))


@pytest.mark.parametrize(
    "g",
    [FiniteGraph.complete(3), FiniteGraph.complete(4), FiniteGraph.cycle(5), FiniteGraph.wired_box(1, 2), FiniteGraph.wired_box(2, 1)],
)
def test_enumeration_matches_matrix_tree(g):
    assert len(enumerate_spanning_trees(g)) == kirchhoff(g)


def test_known_counts():
    assert len(spanning_tree_law(FiniteGraph.complete(4))) == 16
    assert kirchhoff(FiniteGraph.wired_box(2, 1)) == 100352


def test_edge_marginals_sum_to_n_minus_1():
    law = spanning_tree_law(FiniteGraph.wired_box(2, 1))
    assert sum(law.values()) == pytest.approx(1)
    assert sum(edge_marginals(law).values()) == pytest.approx(9)


def test_wired_box_multiplicity():
    g = FiniteGraph.wired_box(2, 1)
    corner = 0
    assert g.multiplicity[(corner, 9)] == 2
    assert len(g.edges) == 24


def test_wilson_uniform_on_wired_square():
    g = FiniteGraph.wired_box(2, 1)
    law = spanning_tree_law(g)
    freq = tree_frequencies(g, 9, RngSeed(4), 200_000)
    keys = sorted(law)
    obs = [freq.get(k, 0) for k in keys]
    exp = [law[k] * 200_000 for k in keys]
    assert set(freq) <= set(law)
    # edge marginals are less noisy than the full 24000-cell table
    m_exact = edge_marginals(law)
    m_obs = edge_marginals({k: c / 200_000 for k, c in freq.items()})
    for e, p in m_exact.items():
        assert abs(m_obs.get(e, 0) - p) < 5 * np.sqrt(p * (1 - p) / 200_000)
    assert len(obs) == len(exp)


def test_box_sampler_matches_graph_sampler():
    d, L = 3, 2
    g = FiniteGraph.wired_box(d, L)
    t1 = wired_box_ust(d, L, RngSeed(8))
    t2 = wilson_sample(g, g.n - 1, RngSeed(8))
    assert np.array_equal(t1.parent.astype(np.int64), t2.parent)


@given(st.integers(0, 2**31))
def test_branches_are_loop_erased_walks(seed):
    # every root path in the sampled tree is simple and nearest-neighbour
    t = wired_box_ust(2, 4, RngSeed(seed))
    for v in range(0, t.n_lattice, 7):
        path = [v]
        while path[-1] != t.root:
            path.append(int(t.parent[path[-1]]))
        pts = t.coords_of(path[:-1])
        p = Path(pts)
        assert p.is_simple()
        assert p.is_nearest_neighbour() or p.length == 0
        assert erase_loops(p).erased == p


def test_disconnected_graph_rejected():
    g = FiniteGraph.from_edges(4, [(0, 1), (2, 3)])
    with pytest.raises(ValueError):
        wilson_sample(g, 0, RngSeed(0))


def test_tree_binary_roundtrip(tmp_path):
    t = wired_box_ust(2, 3, RngSeed(1))
    f = tmp_path / "t.bin"
    t.save(f)
    u = SpanningTree.load(f)
    assert np.array_equal(t.parent, u.parent) and u.root == t.root and u.L == 3


def test_coords_and_index():
    t = wired_box_ust(3, 2, RngSeed(2))
    assert t.coords_of([t.origin]).tolist() == [[0, 0, 0]]
    assert t.index_of((1, -2, 0)) == int(np.ravel_multi_index((3, 0, 2), (5, 5, 5)))
    assert box_coords(np.array([0]), 3, 2).tolist() == [[-2, -2, -2]]
    with pytest.raises(ValueError):
        t.coords_of([t.root])


def test_zero_wired_component():
    t, comp = zero_wired_box(2, 5, RngSeed(3))
    assert t.parent[t.origin] == t.root
    assert t.origin in comp
    # every component vertex reaches the root through the origin
    for v in comp[:50]:
        u = int(v)
        while u != t.origin:
            u = int(t.parent[u])
    with pytest.raises(ValueError):
        zero_wired_box(2, 1, RngSeed(0))


def test_index_overflow_guard():
    with pytest.raises(OverflowError):
        wired_box_ust(8, 10, RngSeed(0))


def test_sampler_deterministic():
    a = wired_box_ust(4, 3, RngSeed(9)).to_bytes()
    b = wired_box_ust(4, 3, RngSeed(9)).to_bytes()
    assert a == b


def test_chi_square_k4():
    g = FiniteGraph.complete(4)
    law = spanning_tree_law(g)
    freq = tree_frequencies(g, 0, RngSeed(12), 50_000)
    keys = sorted(law)
    p = chisquare([freq.get(k, 0) for k in keys], [law[k] * 50_000 for k in keys]).pvalue
    assert p > 1e-3
