"""Exact analytics on a sampled spanning tree.

Breadth-first quantities (balls, resistance, geodesic counts, extrinsic
extent) never pass through a virtual supernode root: it stands for the
point at infinity, not for a vertex of the lattice tree. Path quantities
(futures, meeting points, weighted distances) use the rooted tree as is.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable

import numba as nb
import numpy as np

from .wilson import SpanningTree


@dataclass
class BallDecomposition:
    center: int
    radius: int
    levels: list[np.ndarray]

    @property
    def vertices(self) -> np.ndarray:
        return np.concatenate(self.levels)

    @property
    def size(self) -> int:
        return sum(len(lv) for lv in self.levels)

    @property
    def sphere(self) -> np.ndarray:
        return self.levels[-1] if len(self.levels) == self.radius + 1 else np.empty(0, dtype=np.int64)


@dataclass
class VertexWeighting:
    values: np.ndarray

    def __call__(self, v: int) -> float:
        return float(self.values[v])


@nb.njit(cache=True)
def _grow(a, size):
    b = np.empty(max(2 * a.shape[0], size), dtype=a.dtype)
    b[: a.shape[0]] = a
    return b


@nb.njit(cache=True)
def _ball_bfs(parent, ptr, idx, root, skip_root, v, n):
    """BFS of the intrinsic ball B(v, n).

    Returns (verts, level, bpar) where bpar[i] is the position in ``verts``
    of the BFS parent of verts[i] (-1 for the center).
    """
    cap = 64
    verts = np.empty(cap, dtype=np.int64)
    lev = np.empty(cap, dtype=np.int64)
    bpar = np.empty(cap, dtype=np.int64)
    verts[0] = v
    lev[0] = 0
    bpar[0] = -1
    head = 0
    tail = 1
    while head < tail:
        u = verts[head]
        lu = lev[head]
        if lu < n:
            came = verts[bpar[head]] if bpar[head] >= 0 else -1
            start = ptr[u]
            stop = ptr[u + 1]
            extra = 1 if u != root else 0
            for j in range(start, stop + extra):
                w = idx[j] if j < stop else parent[u]
                if w == came or (skip_root and w == root):
                    continue
                if tail == verts.shape[0]:
                    verts = _grow(verts, tail + 1)
                    lev = _grow(lev, tail + 1)
                    bpar = _grow(bpar, tail + 1)
                verts[tail] = w
                lev[tail] = lu + 1
                bpar[tail] = head
                tail += 1
        head += 1
    return verts[:tail], lev[:tail], bpar[:tail]


def _check_vertex(tree: SpanningTree, v: int) -> None:
    if not 0 <= v < tree.n:
        raise IndexError(f"vertex {v} not in tree")


def ball_arrays(tree: SpanningTree, v: int, n: int):
    _check_vertex(tree, v)
    if n < 0:
        raise ValueError("radius must be nonnegative")
    if tree.supernode and v == tree.root:
        raise ValueError("balls around the supernode are undefined")
    ptr, idx = tree.children
    return _ball_bfs(tree.parent.astype(np.int64, copy=False), ptr, idx, tree.root, tree.supernode, v, n)


def ball(tree: SpanningTree, v: int, n: int) -> BallDecomposition:
    verts, lev, _ = ball_arrays(tree, v, n)
    top = int(lev.max())
    bounds = np.searchsorted(lev, np.arange(top + 2))
    levels = [np.sort(verts[bounds[k] : bounds[k + 1]]) for k in range(top + 1)]
    return BallDecomposition(v, n, levels)


def past(tree: SpanningTree, v: int, n: int | None = None) -> np.ndarray:
    """v and every vertex whose root path passes through v, within depth n."""
    _check_vertex(tree, v)
    if v == tree.root:
        raise ValueError("the past of the root is undefined")
    ptr, idx = tree.children
    out = [v]
    frontier = [v]
    depth = 0
    while frontier and (n is None or depth < n):
        nxt = []
        for u in frontier:
            nxt.extend(idx[ptr[u] : ptr[u + 1]].tolist())
        out.extend(nxt)
        frontier = nxt
        depth += 1
    return np.array(sorted(out), dtype=np.int64)


def future(tree: SpanningTree, u: int) -> list[int]:
    _check_vertex(tree, u)
    path = [u]
    while path[-1] != tree.root:
        path.append(int(tree.parent[path[-1]]))
    return path


def future_and_meet(tree: SpanningTree, u: int, v: int) -> tuple[list[int], list[int], int]:
    """Root-directed paths from u and v and the vertex u ∨ v where they first meet."""
    pu = future(tree, u)
    on_u = set(pu)
    pv = [v]
    while pv[-1] not in on_u:
        pv.append(int(tree.parent[pv[-1]]))
    return pu, pv, pv[-1]


def tree_path(tree: SpanningTree, u: int, v: int) -> list[int]:
    """The unique tree path u -> v."""
    pu, pv, meet = future_and_meet(tree, u, v)
    head = pu[: pu.index(meet) + 1]
    return head + pv[-2::-1]


def tree_distance(tree: SpanningTree, u: int, v: int) -> int:
    return len(tree_path(tree, u, v)) - 1


@nb.njit(cache=True)
def _sphere_resistance(lev, bpar, n):
    m = lev.shape[0]
    R = np.full(m, np.inf)
    csum = np.zeros(m)
    cnt = np.zeros(m, dtype=np.int64)
    single = np.zeros(m)
    for i in range(m - 1, -1, -1):
        if lev[i] == n:
            R[i] = 0.0
        elif cnt[i] == 1:
            R[i] = single[i]
        elif cnt[i] > 1:
            R[i] = 1.0 / csum[i]
        if i > 0 and R[i] < np.inf:
            p = bpar[i]
            r = 1.0 + R[i]
            csum[p] += 1.0 / r
            cnt[p] += 1
            single[p] = r
    return R[0]


def _sphere_resistance_exact(lev, bpar, n) -> Fraction:
    m = lev.shape[0]
    R: list[Fraction | None] = [None] * m
    branches: list[list[Fraction]] = [[] for _ in range(m)]
    for i in range(m - 1, -1, -1):
        if lev[i] == n:
            R[i] = Fraction(0)
        elif branches[i]:
            R[i] = 1 / sum(1 / r for r in branches[i])
        if i > 0 and R[i] is not None:
            branches[bpar[i]].append(1 + R[i])
    return R[0]


def resistance_to_sphere(tree: SpanningTree, v: int, n: int, exact: bool = False):
    """Effective resistance from v to ∂B(v, n) (identified), unit edge resistances.

    Branches are composed leaf-to-center: a branch through child c has
    resistance 1 + R(c), parallel branches add conductances, sphere vertices
    have R = 0 and dead ends carry no current. ``exact`` uses rationals.
    """
    if n < 1:
        raise ValueError("n must be positive")
    _, lev, bpar = ball_arrays(tree, v, n)
    if lev[-1] < n:
        raise ValueError(f"sphere of radius {n} around {v} is empty")
    if exact:
        return _sphere_resistance_exact(lev, bpar, n)
    return float(_sphere_resistance(lev, bpar, n))


def resistance_linear_system(tree: SpanningTree, v: int, n: int) -> float:
    """Same quantity via a dense Dirichlet solve (oracle for small balls)."""
    verts, lev, bpar = ball_arrays(tree, v, n)
    if lev[-1] < n:
        raise ValueError(f"sphere of radius {n} around {v} is empty")
    m = verts.shape[0]
    interior = [i for i in range(1, m) if lev[i] < n]
    pos = {i: k for k, i in enumerate(interior)}
    A = np.zeros((len(interior), len(interior)))
    b = np.zeros(len(interior))
    for i in range(1, m):
        p = bpar[i]
        for a, c in ((i, p), (p, i)):
            if a in pos:
                A[pos[a], pos[a]] += 1.0
                if c in pos:
                    A[pos[a], pos[c]] -= 1.0
                elif c == 0:
                    b[pos[a]] += 1.0
    volt = np.linalg.solve(A, b) if interior else np.zeros(0)
    current = 0.0
    for i in range(1, m):
        if bpar[i] == 0:
            current += 1.0 - (volt[pos[i]] if i in pos else 0.0)
    return 1.0 / current


@nb.njit(cache=True)
def _geodesic_counts(lev, bpar, n):
    m = lev.shape[0]
    reach = np.zeros(m, dtype=np.bool_)
    counts = np.zeros(n + 1, dtype=np.int64)
    for i in range(m - 1, -1, -1):
        if lev[i] == n:
            reach[i] = True
        if reach[i]:
            counts[lev[i]] += 1
            if i > 0:
                reach[bpar[i]] = True
    return counts


def geodesic_counts(tree: SpanningTree, v: int, n: int) -> np.ndarray:
    """N_v(n, k) for k = 1..n (index k-1): vertices at distance k from v that
    lie on a geodesic from v to ∂B(v, n)."""
    if n < 1:
        raise ValueError("n must be positive")
    _, lev, bpar = ball_arrays(tree, v, n)
    if lev[-1] < n:
        raise ValueError(f"sphere of radius {n} around {v} is empty")
    return _geodesic_counts(lev, bpar, n)[1:]


def resistance_profile(tree: SpanningTree, v: int, n_max: int):
    """Rows (n, k, N_v(n,k), R_eff(v <-> ∂B(v,n))) for every n <= n_max with a
    nonempty sphere; one BFS serves all radii."""
    _, lev, bpar = ball_arrays(tree, v, n_max)
    rows = []
    for n in range(1, n_max + 1):
        if lev[-1] < n:
            break
        keep = lev <= n
        sub_lev, sub_bpar = lev[keep], bpar[keep]
        R = float(_sphere_resistance(sub_lev, sub_bpar, n))
        N = _geodesic_counts(sub_lev, sub_bpar, n)
        rows.extend((n, k, int(N[k]), R) for k in range(1, n + 1))
    return rows


def weighted_distance(tree: SpanningTree, omega: VertexWeighting, u: int, v: int) -> float:
    """Σ over edges ab of the tree path u -> v of (ω(a) + ω(b)) / 2."""
    path = tree_path(tree, u, v)
    w = omega.values[np.asarray(path, dtype=np.int64)].astype(np.float64)
    return float(((w[1:] + w[:-1]) / 2).sum())


@nb.njit(cache=True)
def _pair_distances(parent, depth, w, us, vs):
    m = us.shape[0]
    dt = np.empty(m, dtype=np.int64)
    dw = np.empty(m, dtype=np.float64)
    for j in range(m):
        a = us[j]
        b = vs[j]
        steps = 0
        acc = 0.0
        while a != b:
            if depth[a] >= depth[b]:
                p = parent[a]
                acc += 0.5 * (w[a] + w[p])
                a = p
            else:
                p = parent[b]
                acc += 0.5 * (w[b] + w[p])
                b = p
            steps += 1
        dt[j] = steps
        dw[j] = acc
    return dt, dw


def pair_distances(tree: SpanningTree, omega: VertexWeighting, us, vs, depths: np.ndarray | None = None):
    """Vectorised (d_T(u, v), d_ω(u, v)) over pairs."""
    depth = tree.depths() if depths is None else depths
    return _pair_distances(
        tree.parent.astype(np.int64, copy=False), depth, omega.values.astype(np.float64),
        np.asarray(us, dtype=np.int64), np.asarray(vs, dtype=np.int64),
    )


@nb.njit(cache=True)
def _subtree_heights(parent, ptr, idx, root):
    n = parent.shape[0]
    order = np.empty(n, dtype=np.int64)
    order[0] = root
    tail = 1
    head = 0
    while head < tail:
        u = order[head]
        for j in range(ptr[u], ptr[u + 1]):
            order[tail] = idx[j]
            tail += 1
        head += 1
    height = np.zeros(n, dtype=np.int64)
    for k in range(n - 1, 0, -1):
        u = order[k]
        p = parent[u]
        if height[u] + 1 > height[p]:
            height[p] = height[u] + 1
    return height


def subtree_heights(tree: SpanningTree) -> np.ndarray:
    """Depth of the deepest descendant of each vertex (0 for leaves)."""
    ptr, idx = tree.children
    return _subtree_heights(tree.parent.astype(np.int64, copy=False), ptr, idx, tree.root)


def omega_r(tree: SpanningTree, r: int, heights: np.ndarray | None = None) -> VertexWeighting:
    """ω_r(v) = 1 iff the past of v reaches intrinsic depth r below v."""
    if r < 1:
        raise ValueError("r must be positive")
    h = subtree_heights(tree) if heights is None else heights
    return VertexWeighting((h >= r).astype(np.int8))


def extrinsic_stats(tree: SpanningTree, v: int, n: int) -> tuple[int, int]:
    """(max ||u - v||_inf, max ||u||_inf) over u in B(v, n)."""
    if not tree.has_coords:
        raise ValueError("tree carries no coordinates")
    verts, _, _ = ball_arrays(tree, v, n)
    xyz = tree.coords_of(verts)
    rel = np.abs(xyz - xyz[0]).max()
    return int(rel), int(np.abs(xyz).max())


def m_length_threshold(r: int) -> int:
    if r < 3:
        raise ValueError("M-set extraction needs r >= 3")
    return max(1, math.floor(r * r / math.log(r) ** (1 / 3)))


def extract_M_set(
    tree: SpanningTree,
    x: int,
    r: int,
    alpha: float,
    classifier: Callable[[np.ndarray, float, int], bool],
    origin: int | None = None,
) -> np.ndarray:
    """Vertices y of Λ(x, 3r) whose tree path Γ(y, 0∧y) to the origin's future
    stays in Λ(x, 3r), has length at most r²/(log r)^{1/3}, and is accepted by
    ``classifier(path_coords, alpha, r)``."""
    if not tree.has_coords:
        raise ValueError("tree carries no coordinates")
    limit = m_length_threshold(r)
    o = tree.origin if origin is None else origin
    eta = set(future(tree, o))
    cx = tree.coords_of([x])[0]
    R = 3 * r
    out = []
    for y in _box_vertices(tree, cx, R):
        path = [int(y)]
        ok = True
        while path[-1] not in eta:
            if len(path) - 1 >= limit:
                ok = False
                break
            path.append(int(tree.parent[path[-1]]))
        if not ok or len(path) - 1 > limit:
            continue
        if tree.supernode and tree.root in path:
            continue
        pts = tree.coords_of(path)
        if np.abs(pts - cx).max() > R:
            continue
        if classifier(pts, alpha, r):
            out.append(int(y))
    return np.array(sorted(out), dtype=np.int64)


def _box_vertices(tree: SpanningTree, center: np.ndarray, R: int) -> np.ndarray:
    if tree.L is not None:
        lo = np.maximum(center - R, -tree.L)
        hi = np.minimum(center + R, tree.L)
        if np.any(lo > hi):
            return np.empty(0, dtype=np.int64)
        axes = [np.arange(a, b + 1) for a, b in zip(lo, hi)]
        grid = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)
        W = tree.box_width
        idx = np.zeros(grid.shape[0], dtype=np.int64)
        for i in range(tree.d):
            idx = idx * W + grid[:, i] + tree.L
        return idx
    verts = np.arange(tree.n)
    if tree.supernode:
        verts = verts[verts != tree.root]
    inside = np.abs(tree.coords_of(verts) - center).max(axis=1) <= R
    return verts[inside]


# --- CSV dumps --------------------------------------------------------------


def write_ball_csv(tree: SpanningTree, b: BallDecomposition, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    d = tree.d or 0
    w.writerow(["vertex", "level"] + [f"x{i}" for i in range(d)])
    for k, lv in enumerate(b.levels):
        xyz = tree.coords_of(lv) if tree.has_coords else None
        for j, u in enumerate(lv.tolist()):
            w.writerow([u, k] + (xyz[j].tolist() if xyz is not None else []))


def write_resistance_csv(rows, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["n", "k", "N_v", "resistance"])
    for n, k, N, R in rows:
        w.writerow([n, k, N, repr(float(R))])
