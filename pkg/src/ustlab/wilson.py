"""Uniform spanning tree samplers (Wilson's algorithm) and an enumeration oracle."""

from __future__ import annotations

import struct
from collections import Counter
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path as FsPath
from typing import Sequence

import numba as nb
import numpy as np

from .lattice import RngSeed, check_dim

INDEX_DTYPE = np.int32
_MAGIC = b"USTT"
_VERSION = 1


class FiniteGraph:
    """Connected multigraph on 0..n-1 given by adjacency lists.

    Parallel edges appear as repeated entries; a random-walk step picks a
    uniform entry, so multiplicities weight the jump probabilities.
    """

    def __init__(self, adjacency: Sequence[Sequence[int]], supernode: int | None = None):
        self.adjacency = [list(map(int, a)) for a in adjacency]
        self.n = len(self.adjacency)
        self.supernode = supernode
        deg = np.array([len(a) for a in self.adjacency], dtype=np.int64)
        self.indptr = np.concatenate([[0], np.cumsum(deg)]).astype(np.int64)
        self.indices = np.array([v for a in self.adjacency for v in a], dtype=np.int64)
        pairs = Counter()
        for u, a in enumerate(self.adjacency):
            for v in a:
                if u == v:
                    raise ValueError("self-loops are not supported")
                if u < v:
                    pairs[(u, v)] += 1
        for (u, v), m in pairs.items():
            if self.adjacency[v].count(u) != m:
                raise ValueError(f"asymmetric adjacency between {u} and {v}")
        # one entry per edge (parallel edges listed separately), canonical order
        self.edges = [uv for uv in sorted(pairs) for _ in range(pairs[uv])]
        self.multiplicity = dict(pairs)

    @classmethod
    def from_edges(cls, n: int, edges, supernode: int | None = None) -> "FiniteGraph":
        adj: list[list[int]] = [[] for _ in range(n)]
        for u, v in edges:
            adj[u].append(v)
            adj[v].append(u)
        return cls(adj, supernode)

    @classmethod
    def complete(cls, n: int) -> "FiniteGraph":
        return cls.from_edges(n, [(i, j) for i in range(n) for j in range(i + 1, n)])

    @classmethod
    def cycle(cls, n: int) -> "FiniteGraph":
        return cls.from_edges(n, [(i, (i + 1) % n) for i in range(n)])

    @classmethod
    def path_graph(cls, n: int) -> "FiniteGraph":
        return cls.from_edges(n, [(i, i + 1) for i in range(n - 1)])

    @classmethod
    def wired_box(cls, d: int, L: int, zero_wired: bool = False) -> "FiniteGraph":
        """Λ(L) with the exterior wired to a supernode (index (2L+1)^d).

        With ``zero_wired`` the origin is also merged into the supernode; the
        origin keeps its index but becomes isolated, and its edges are
        redirected to the supernode.
        """
        W = 2 * L + 1
        N = W**d
        S = N
        strides = [W ** (d - 1 - i) for i in range(d)]
        origin = (N - 1) // 2
        adj: list[list[int]] = [[] for _ in range(N + 1)]
        for u in range(N):
            if zero_wired and u == origin:
                continue
            for ax in range(d):
                c = (u // strides[ax]) % W
                for sign in (1, -1):
                    inside = c < W - 1 if sign > 0 else c > 0
                    v = u + sign * strides[ax] if inside else S
                    if zero_wired and v == origin:
                        v = S
                    adj[u].append(v)
                    adj[v].append(u) if v == S else None
        return cls(adj, supernode=S)

    def is_connected(self, ignore: Sequence[int] = ()) -> bool:
        skip = set(ignore)
        start = next(v for v in range(self.n) if v not in skip)
        seen = {start}
        stack = [start]
        while stack:
            u = stack.pop()
            for v in self.adjacency[u]:
                if v not in seen and v not in skip:
                    seen.add(v)
                    stack.append(v)
        return len(seen) == self.n - len(skip)


@dataclass
class SpanningTree:
    """Rooted spanning tree stored as a parent array (the root is its own parent).

    For trees sampled on a wired box, vertex i < (2L+1)^d is the lattice site
    with lexicographic index i and the root is the virtual supernode, which
    has no coordinates.
    """

    parent: np.ndarray
    root: int
    d: int | None = None
    L: int | None = None
    coords: np.ndarray | None = None
    supernode: bool = False
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.parent.shape[0]

    @property
    def box_width(self) -> int:
        return 2 * self.L + 1

    @property
    def n_lattice(self) -> int:
        return self.box_width**self.d if self.L is not None else self.n

    @property
    def has_coords(self) -> bool:
        return self.L is not None or self.coords is not None

    @cached_property
    def children(self) -> tuple[np.ndarray, np.ndarray]:
        """CSR (ptr, idx) of children lists."""
        return _children_csr(self.parent.astype(np.int64), self.root)

    def child_list(self, v: int) -> np.ndarray:
        ptr, idx = self.children
        return idx[ptr[v] : ptr[v + 1]]

    def tree_neighbors(self, v: int) -> list[int]:
        nb_ = [int(c) for c in self.child_list(v)]
        if v != self.root:
            nb_.append(int(self.parent[v]))
        return nb_

    def coords_of(self, vertices) -> np.ndarray:
        v = np.asarray(vertices, dtype=np.int64)
        if self.L is not None:
            if np.any(v >= self.n_lattice):
                raise ValueError("the supernode has no coordinates")
            return box_coords(v, self.d, self.L)
        if self.coords is None:
            raise ValueError("tree carries no coordinates")
        return self.coords[v]

    def index_of(self, point: Sequence[int]) -> int:
        p = np.asarray(point, dtype=np.int64)
        if self.L is not None:
            if np.any(np.abs(p) > self.L):
                raise KeyError(tuple(point))
            W = self.box_width
            idx = 0
            for c in p:
                idx = idx * W + int(c) + self.L
            return idx
        if self.coords is None:
            raise ValueError("tree carries no coordinates")
        hit = np.flatnonzero(np.all(self.coords == p, axis=1))
        if hit.size == 0:
            raise KeyError(tuple(point))
        return int(hit[0])

    @property
    def origin(self) -> int:
        return self.index_of([0] * self.d)

    def edge_set(self) -> tuple[tuple[int, int], ...]:
        v = np.arange(self.n)
        keep = v != self.root
        a = v[keep]
        b = self.parent[keep].astype(np.int64)
        return tuple(sorted(zip(np.minimum(a, b).tolist(), np.maximum(a, b).tolist())))

    def depths(self) -> np.ndarray:
        return _depths(self.parent.astype(np.int64), self.root)

    # --- serialization -----------------------------------------------------

    def to_bytes(self) -> bytes:
        head = struct.pack(
            "<4sIiiqqB",
            _MAGIC,
            _VERSION,
            self.d or 0,
            -1 if self.L is None else self.L,
            self.root,
            self.n,
            int(self.supernode),
        )
        return head + self.parent.astype("<i8").tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "SpanningTree":
        size = struct.calcsize("<4sIiiqqB")
        magic, version, d, L, root, n, sup = struct.unpack("<4sIiiqqB", data[:size])
        if magic != _MAGIC or version != _VERSION:
            raise ValueError("not a ustlab tree file (or unsupported version)")
        parent = np.frombuffer(data[size:], dtype="<i8", count=n).astype(INDEX_DTYPE if n < 2**31 else np.int64)
        return cls(parent, root, d or None, None if L < 0 else L, None, bool(sup))

    def save(self, path) -> None:
        FsPath(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path) -> "SpanningTree":
        return cls.from_bytes(FsPath(path).read_bytes())

    def to_text(self) -> str:
        lines = [f"# ustlab-tree v{_VERSION} d={self.d} L={self.L} root={self.root} n={self.n}"]
        for v in range(self.n):
            row = f"{v} {int(self.parent[v])}"
            if self.has_coords and not (self.supernode and v == self.root):
                row += " " + " ".join(map(str, self.coords_of([v])[0].tolist()))
            lines.append(row)
        return "\n".join(lines) + "\n"


def box_coords(v: np.ndarray, d: int, L: int) -> np.ndarray:
    W = 2 * L + 1
    v = np.asarray(v, dtype=np.int64)
    out = np.empty(v.shape + (d,), dtype=np.int64)
    rem = v.copy()
    for i in range(d - 1, -1, -1):
        out[..., i] = rem % W - L
        rem //= W
    return out


@nb.njit(cache=True)
def _children_csr(parent, root):
    n = parent.shape[0]
    ptr = np.zeros(n + 1, dtype=np.int64)
    for v in range(n):
        if v != root:
            ptr[parent[v] + 1] += 1
    for v in range(n):
        ptr[v + 1] += ptr[v]
    fill = ptr[:-1].copy()
    idx = np.empty(max(n - 1, 0), dtype=np.int64)
    for v in range(n):
        if v != root:
            p = parent[v]
            idx[fill[p]] = v
            fill[p] += 1
    return ptr, idx


@nb.njit(cache=True)
def _depths(parent, root):
    n = parent.shape[0]
    depth = np.full(n, -1, dtype=np.int64)
    depth[root] = 0
    stack = np.empty(n, dtype=np.int64)
    for v in range(n):
        k = 0
        u = v
        while depth[u] < 0:
            stack[k] = u
            k += 1
            u = parent[u]
        base = depth[u]
        for j in range(k - 1, -1, -1):
            base += 1
            depth[stack[j]] = base
    return depth


# --- Wilson's algorithm -----------------------------------------------------


@nb.njit(cache=True)
def _wilson_csr(rng, indptr, indices, root, order):
    n = indptr.shape[0] - 1
    parent = np.empty(n, dtype=np.int64)
    in_tree = np.zeros(n, dtype=np.bool_)
    in_tree[root] = True
    parent[root] = root
    for i in order:
        u = i
        while not in_tree[u]:
            deg = indptr[u + 1] - indptr[u]
            v = indices[indptr[u] + int(rng.random() * deg)]
            parent[u] = v
            u = v
        u = i
        while not in_tree[u]:
            in_tree[u] = True
            u = parent[u]
    return parent


@nb.njit(cache=True)
def _wilson_box(rng, d, L, zero_wired, parent):
    """Wilson's algorithm on Λ(L) wired at the boundary; lexicographic scan.

    ``parent`` has length (2L+1)^d + 1 and is filled in place; the last entry
    is the supernode. With ``zero_wired`` the origin is absorbing too and is
    given the supernode as parent.
    """
    W = 2 * L + 1
    N = parent.shape[0] - 1
    S = N
    strides = np.empty(d, dtype=np.int64)
    s = 1
    for i in range(d - 1, -1, -1):
        strides[i] = s
        s *= W
    in_tree = np.zeros(N + 1, dtype=np.bool_)
    in_tree[S] = True
    parent[S] = S
    if zero_wired:
        origin = (N - 1) // 2
        in_tree[origin] = True
        parent[origin] = S
    nd = 2 * d
    for i in range(N):
        u = i
        while not in_tree[u]:
            k = int(rng.random() * nd)
            ax = k >> 1
            c = (u // strides[ax]) % W
            if k & 1:
                v = u - strides[ax] if c > 0 else S
            else:
                v = u + strides[ax] if c < W - 1 else S
            parent[u] = v
            u = v
        u = i
        while not in_tree[u]:
            in_tree[u] = True
            u = parent[u]


def wilson_sample(
    graph: FiniteGraph, root: int, seed: RngSeed, order: Sequence[int] | None = None
) -> SpanningTree:
    """Uniform spanning tree rooted at ``root``; vertices are scanned in ``order``
    (default ascending index)."""
    if not graph.is_connected():
        raise ValueError("graph is disconnected; Wilson's algorithm would not terminate")
    order = np.arange(graph.n, dtype=np.int64) if order is None else np.asarray(order, dtype=np.int64)
    parent = _wilson_csr(seed.generator(), graph.indptr, graph.indices, int(root), order)
    return SpanningTree(parent, int(root))


@nb.njit(cache=True)
def _wilson_many(rng, indptr, indices, root, order, count):
    out = np.empty((count, indptr.shape[0] - 1), dtype=np.int64)
    for k in range(count):
        out[k] = _wilson_csr(rng, indptr, indices, root, order)
    return out


def tree_frequencies(graph: FiniteGraph, root: int, seed: RngSeed, count: int) -> dict[tuple, int]:
    """Counts of sampled spanning trees, keyed like ``spanning_tree_law``."""
    if not graph.is_connected():
        raise ValueError("graph is disconnected; Wilson's algorithm would not terminate")
    order = np.arange(graph.n, dtype=np.int64)
    parents = _wilson_many(seed.generator(), graph.indptr, graph.indices, int(root), order, count)
    rows, counts = np.unique(parents, axis=0, return_counts=True)
    out: dict[tuple, int] = {}
    for row, c in zip(rows, counts):
        key = SpanningTree(row, int(root)).edge_set()
        out[key] = out.get(key, 0) + int(c)
    return out


def _box_size(d: int, L: int, index_dtype) -> int:
    check_dim(d)
    if L < 1:
        raise ValueError("box radius must be >= 1")
    n = (2 * L + 1) ** d + 1
    if n > np.iinfo(index_dtype).max:
        raise OverflowError(f"(2L+1)^d + 1 = {n} overflows {np.dtype(index_dtype).name} vertex indices")
    return n


def wired_box_ust(d: int, L: int, seed: RngSeed, index_dtype=INDEX_DTYPE) -> SpanningTree:
    """UST of Λ(L) with the exterior wired into a root supernode."""
    n = _box_size(d, L, index_dtype)
    parent = np.empty(n, dtype=index_dtype)
    _wilson_box(seed.generator(), d, L, False, parent)
    return SpanningTree(parent, n - 1, d, L, None, True)


@nb.njit(cache=True)
def _component_through(parent, root, via):
    """Mask of vertices whose root path passes through ``via``."""
    n = parent.shape[0]
    lab = np.full(n, -1, dtype=np.int8)
    lab[root] = 0
    lab[via] = 1
    stack = np.empty(n, dtype=np.int64)
    for v in range(n):
        k = 0
        u = v
        while lab[u] < 0:
            stack[k] = u
            k += 1
            u = parent[u]
        val = lab[u]
        for j in range(k):
            lab[stack[j]] = val
    return lab == 1


def zero_wired_box(
    d: int, L: int, seed: RngSeed, index_dtype=INDEX_DTYPE
) -> tuple[SpanningTree, np.ndarray]:
    """UST of Λ(L) with both the exterior and the origin wired to the root.

    Returns the tree (the origin's parent is the supernode, standing for the
    identification) and the sorted vertex indices of the origin's component
    𝔗_0 once the identification is undone.
    """
    if L < 2:
        raise ValueError("zero-wired box needs L >= 2")
    n = _box_size(d, L, index_dtype)
    parent = np.empty(n, dtype=index_dtype)
    _wilson_box(seed.generator(), d, L, True, parent)
    tree = SpanningTree(parent, n - 1, d, L, None, True, {"zero_wired": True})
    comp = np.flatnonzero(_component_through(parent.astype(np.int64), n - 1, (n - 2) // 2))
    return tree, comp


# --- enumeration oracle -----------------------------------------------------


def _find(uf: list[int], x: int) -> int:
    while uf[x] != x:
        x = uf[x]
    return x


def _enumerate_simple(n: int, pairs: list[tuple[int, int]]) -> list[tuple[int, ...]]:
    """Spanning trees of the simple graph ``pairs`` as sorted index tuples."""
    out: list[tuple[int, ...]] = []
    m = len(pairs)

    def spans(avail: list[int]) -> bool:
        uf = list(range(n))
        comps = n
        for j in avail:
            a, b = _find(uf, pairs[j][0]), _find(uf, pairs[j][1])
            if a != b:
                uf[a] = b
                comps -= 1
        return comps == 1

    def rec(i: int, chosen: list[int], uf: list[int], excluded: set[int]) -> None:
        if len(chosen) == n - 1:
            out.append(tuple(chosen))
            return
        if m - i < n - 1 - len(chosen):
            return
        a, b = _find(uf, pairs[i][0]), _find(uf, pairs[i][1])
        if a != b:
            uf2 = uf.copy()
            uf2[a] = b
            rec(i + 1, chosen + [i], uf2, excluded)
        excluded.add(i)
        if spans([j for j in range(m) if j not in excluded]):
            rec(i + 1, chosen, uf, excluded)
        excluded.discard(i)

    rec(0, [], list(range(n)), set())
    return out


def enumerate_spanning_trees(graph: FiniteGraph, max_vertices: int = 12) -> list[tuple[int, ...]]:
    """Every spanning tree exactly once, as sorted tuples of indices into
    ``graph.edges`` (parallel edges are distinct), in lexicographic order."""
    if graph.n > max_vertices:
        raise ValueError(f"enumeration limited to {max_vertices} vertices, graph has {graph.n}")
    pairs = sorted(graph.multiplicity)
    first = {}
    for k, uv in enumerate(graph.edges):
        first.setdefault(uv, k)
    trees = []
    for simple in _enumerate_simple(graph.n, pairs):
        choices = [
            [first[pairs[j]] + r for r in range(graph.multiplicity[pairs[j]])] for j in simple
        ]
        trees.extend(_product(choices))
    return sorted(trees)


def _product(choices: list[list[int]]) -> list[tuple[int, ...]]:
    out: list[tuple[int, ...]] = [()]
    for c in choices:
        out = [t + (x,) for t in out for x in c]
    return out


def spanning_tree_law(graph: FiniteGraph, max_vertices: int = 12) -> dict[tuple, float]:
    """Exact UST law on vertex-pair edge sets (parallel copies merged)."""
    if graph.n > max_vertices:
        raise ValueError(f"enumeration limited to {max_vertices} vertices, graph has {graph.n}")
    pairs = sorted(graph.multiplicity)
    weights = {}
    for simple in _enumerate_simple(graph.n, pairs):
        w = 1
        for j in simple:
            w *= graph.multiplicity[pairs[j]]
        weights[tuple(pairs[j] for j in simple)] = w
    total = sum(weights.values())
    return {k: w / total for k, w in weights.items()}


def edge_marginals(law: dict[tuple, float]) -> dict[tuple[int, int], float]:
    marg: dict[tuple[int, int], float] = {}
    for edges, p in law.items():
        for e in edges:
            marg[e] = marg.get(e, 0.0) + p
    return marg
