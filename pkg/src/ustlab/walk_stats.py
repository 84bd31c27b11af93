"""Simple random walk on a sampled spanning tree and ensemble estimators.

The walk moves to a uniform tree-neighbour. Edges to the wired supernode are
treated as absent, and any walk that reaches the outer layer of the box
(||x||_inf = L) is discarded and redrawn from a fresh stream, with the
discard rate reported. Statistics are averaged within a tree first and then
across trees; confidence intervals come from the between-tree spread.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numba as nb
import numpy as np

from .lattice import RngSeed
from .tree import ball_arrays
from .wilson import SpanningTree, wired_box_ust, zero_wired_box

MAX_REDRAWS = 200
Z95 = 1.959963984540054

WALK_STATS = ("return", "intrinsic", "intrinsic_max", "extrinsic", "msd", "range")
ALL_STATS = WALK_STATS + ("exit", "volume")


@dataclass
class WalkSummary:
    steps: int
    end_distance: int
    max_distance: int
    max_extrinsic: int
    range: int
    returns: int
    odd_returns: int
    at_start: bool
    touched_boundary: bool
    trajectory: np.ndarray | None = field(default=None, repr=False)


@dataclass
class EnsembleEstimate:
    statistic: str
    n: int
    estimate: float
    ci_lo: float
    ci_hi: float
    trees: int
    walks: int
    discard_rate: float
    seed: int
    between_var: float = 0.0
    within_var: float = 0.0


@dataclass
class EnsembleConfig:
    d: int = 4
    L: int = 32
    trees: int = 50
    walks: int = 50
    seed: int = 0
    boundary: str = "wired"
    threads: int = 1
    ball_offsets: tuple[int, ...] = (0,)

    def ball_centers(self, tree: SpanningTree) -> list[int]:
        """Ball centres: the product grid ball_offsets^d around the origin."""
        offs = itertools.product(self.ball_offsets, repeat=tree.d)
        return [tree.index_of(c) for c in offs]

    def sample_tree(self, index: int) -> SpanningTree:
        s = RngSeed(self.seed).child(index, 0)
        if self.boundary == "wired":
            return wired_box_ust(self.d, self.L, s)
        if self.boundary == "zero-wired":
            return zero_wired_box(self.d, self.L, s)[0]
        if self.boundary == "line":
            return line_tree(self.L)
        raise ValueError(f"unknown boundary mode {self.boundary!r}")


def line_tree(M: int) -> SpanningTree:
    """The segment {-M..M} of Z as a wired box tree (d = 1, L = M)."""
    n = 2 * M + 1
    parent = np.empty(n + 1, dtype=np.int32)
    parent[:n] = np.arange(1, n + 1)
    parent[n] = n
    return SpanningTree(parent, n, 1, M, None, True, {"line": True})


@nb.njit(cache=True)
def _ext(v, start_c, d, L, W):
    """(||x_v - x_start||_inf, on the outer layer?) by decoding the box index."""
    m = 0
    edge = False
    u = v
    for c in range(d - 1, -1, -1):
        x = u % W - L
        u //= W
        if x == L or x == -L:
            edge = True
        a = abs(x - start_c[c])
        if a > m:
            m = a
    return m, edge


@nb.njit(cache=True)
def _step(rng, parent, ptr, idx, root, cur):
    nch = ptr[cur + 1] - ptr[cur]
    p = parent[cur]
    up = 1 if (p != cur and p != root) else 0
    deg = nch + up
    if deg == 0:
        return cur
    j = int(rng.random() * deg)
    if j < nch:
        return idx[ptr[cur] + j]
    return p


@nb.njit(cache=True)
def _walk(rng, parent, ptr, idx, root, start, start_c, d, L, checkpoints, stamp, stamp_id, keep_traj):
    """Walk until the last checkpoint; rec[j] = (dist, max dist, max ext, range, returns, at start)."""
    W = 2 * L + 1
    T = checkpoints[-1]
    stack = np.empty(T + 1, dtype=np.int64)
    traj = np.empty(T + 1 if keep_traj else 1, dtype=np.int64)
    rec = np.zeros((checkpoints.shape[0], 7), dtype=np.int64)
    cur = start
    depth = 0
    stack[0] = start
    maxd = 0
    maxe = 0
    rng_count = 1
    returns = 0
    odd = 0
    stamp[start] = stamp_id
    if keep_traj:
        traj[0] = start
    j = 0
    while j < checkpoints.shape[0] and checkpoints[j] == 0:
        rec[j, 3] = 1
        rec[j, 5] = 1
        j += 1
    for t in range(1, T + 1):
        nxt = _step(rng, parent, ptr, idx, root, cur)
        if nxt != cur:
            if depth > 0 and stack[depth - 1] == nxt:
                depth -= 1
            else:
                depth += 1
                stack[depth] = nxt
        cur = nxt
        if keep_traj:
            traj[t] = cur
        e, edge = _ext(cur, start_c, d, L, W)
        if edge:
            return rec, True, traj[: t + 1 if keep_traj else 1].copy()
        if depth > maxd:
            maxd = depth
        if e > maxe:
            maxe = e
        if stamp[cur] != stamp_id:
            stamp[cur] = stamp_id
            rng_count += 1
        if cur == start:
            if t % 2 == 0:
                returns += 1
            else:
                odd += 1
        while j < checkpoints.shape[0] and checkpoints[j] == t:
            rec[j, 0] = depth
            rec[j, 1] = maxd
            rec[j, 2] = maxe
            rec[j, 3] = rng_count
            rec[j, 4] = returns
            rec[j, 5] = 1 if cur == start else 0
            rec[j, 6] = odd
            j += 1
    return rec, False, traj


@nb.njit(cache=True)
def _exit_walk(rng, parent, ptr, idx, root, start, start_c, d, L, n, max_steps):
    """Steps until intrinsic distance n from start; -1 on touching the outer layer, -2 past max_steps."""
    W = 2 * L + 1
    stack = np.empty(n + 1, dtype=np.int64)
    stack[0] = start
    depth = 0
    cur = start
    t = 0
    while depth < n:
        if t >= max_steps:
            return -2
        nxt = _step(rng, parent, ptr, idx, root, cur)
        t += 1
        if nxt != cur:
            if depth > 0 and stack[depth - 1] == nxt:
                depth -= 1
            else:
                depth += 1
                stack[depth] = nxt
        cur = nxt
        _e, edge = _ext(cur, start_c, d, L, W)
        if edge:
            return -1
    return t


class _Walker:
    """Per-tree walk state shared by all walks on that tree."""

    def __init__(self, tree: SpanningTree):
        if tree.L is None or not tree.supernode:
            raise ValueError("walks need a wired box tree")
        self.tree = tree
        self.parent = tree.parent
        self.ptr, self.idx = tree.children
        self.stamp = np.zeros(tree.n, dtype=np.int32)
        self.stamp_id = 0

    def coords(self, v: int) -> np.ndarray:
        return self.tree.coords_of([v])[0]

    def walk(self, start, checkpoints, seed: RngSeed, keep_traj=False):
        self.stamp_id += 1
        if self.stamp_id == np.iinfo(np.int32).max:
            self.stamp[:] = 0
            self.stamp_id = 1
        t = self.tree
        return _walk(
            seed.generator(), self.parent, self.ptr, self.idx, t.root, start, self.coords(start),
            t.d, t.L, checkpoints, self.stamp, self.stamp_id, keep_traj,
        )

    def exit(self, start, n, seed: RngSeed, max_steps):
        t = self.tree
        return _exit_walk(
            seed.generator(), self.parent, self.ptr, self.idx, t.root, start, self.coords(start),
            t.d, t.L, n, max_steps,
        )


def run_walk(tree: SpanningTree, start: int, steps: int, seed: RngSeed, keep_trajectory: bool = False) -> WalkSummary:
    """One walk of ``steps`` steps; stops early (flagged) on touching the outer layer."""
    if steps < 0:
        raise ValueError("steps must be nonnegative")
    if not 0 <= start < tree.n_lattice:
        raise ValueError("start must be a lattice vertex of the tree")
    w = _Walker(tree)
    rec, touched, traj = w.walk(start, np.array([steps], dtype=np.int64), seed, keep_trajectory)
    r = rec[0]
    return WalkSummary(
        steps, int(r[0]), int(r[1]), int(r[2]), int(r[3]), int(r[4]), int(r[6]), bool(r[5]), bool(touched),
        traj if keep_trajectory else None,
    )


def exit_time(tree: SpanningTree, n: int, trials: int, seed: RngSeed, start: int | None = None, max_steps: int = 10**9):
    """Samples of τ_n, the first time the walk is at intrinsic distance n.

    Returns (samples, discard_rate); walks reaching the outer layer are redrawn.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    start = tree.origin if start is None else start
    w = _Walker(tree)
    out = np.empty(trials, dtype=np.int64)
    discards = 0
    for k in range(trials):
        for attempt in range(MAX_REDRAWS):
            tau = w.exit(start, n, seed.child(k, attempt), max_steps)
            if tau >= 0:
                out[k] = tau
                break
            if tau == -2:
                raise RuntimeError("exit time exceeded max_steps")
            discards += 1
        else:
            raise RuntimeError(f"intrinsic ball of radius {n} keeps reaching the box boundary; use a larger L")
    return out, discards / (discards + trials)


# --- ensembles --------------------------------------------------------------


@dataclass
class TreeResult:
    """Per-tree, per-n summary values keyed by statistic, plus discard counts."""

    index: int
    values: dict
    within: dict
    discards: int
    attempts: int


def _summarize(stat: str, col: np.ndarray) -> tuple[float, float]:
    col = col.astype(float)
    if stat in ("return", "msd", "exit", "volume"):
        v = col.mean()
    else:
        v = float(np.median(col))
    var = col.var(ddof=1) / col.size if col.size > 1 else 0.0
    return float(v), float(var)


def tree_pass(config: EnsembleConfig, index: int, n_grid, exit_grid=(), volume_grid=(), stats=WALK_STATS) -> TreeResult:
    tree = config.sample_tree(index)
    start = tree.origin
    w = _Walker(tree)
    seed = RngSeed(config.seed).child(index, 1)
    values: dict = {}
    within: dict = {}
    discards = attempts = 0
    walk_stats = [s for s in stats if s in WALK_STATS]
    if walk_stats and len(n_grid):
        cps = np.array(sorted(set(int(n) for n in n_grid)), dtype=np.int64)
        recs = np.empty((config.walks, cps.size, 7), dtype=np.int64)
        for k in range(config.walks):
            for attempt in range(MAX_REDRAWS):
                attempts += 1
                rec, touched, _ = w.walk(start, cps, seed.child(k, attempt))
                if not touched:
                    recs[k] = rec
                    break
                discards += 1
            else:
                raise RuntimeError("walks keep reaching the box boundary; use a larger L")
        cols = {
            "return": lambda j: recs[:, j, 5],
            "intrinsic": lambda j: recs[:, j, 0],
            "intrinsic_max": lambda j: recs[:, j, 1],
            "extrinsic": lambda j: recs[:, j, 2],
            "msd": lambda j: recs[:, j, 1] ** 2,
            "range": lambda j: recs[:, j, 3],
        }
        for s in walk_stats:
            for j, n in enumerate(cps.tolist()):
                values[(s, n)], within[(s, n)] = _summarize(s, cols[s](j))
    if "exit" in stats:
        eseed = RngSeed(config.seed).child(index, 2)
        for n in exit_grid:
            taus, rate = exit_time(tree, int(n), config.walks, eseed.child(int(n)), start)
            values[("exit", int(n))], within[("exit", int(n))] = _summarize("exit", taus)
            discards += int(round(rate * config.walks / (1 - rate))) if rate < 1 else 0
            attempts += config.walks + int(round(rate * config.walks / (1 - rate)))
    if "volume" in stats and len(volume_grid):
        grid = np.array(sorted(int(n) for n in volume_grid))
        sizes = []
        for c in config.ball_centers(tree):
            verts, lev, _bp = ball_arrays(tree, c, int(grid[-1]))
            outer = np.abs(tree.coords_of(verts)).max(axis=1) == tree.L
            attempts += grid.size
            # radius at which the ball first reaches the outer layer
            first = int(lev[outer].min()) if outer.any() else grid[-1] + 1
            row = np.array([np.count_nonzero(lev <= n) for n in grid], dtype=float)
            row[grid >= first] = np.nan
            discards += int(np.count_nonzero(grid >= first))
            sizes.append(row)
        sizes = np.array(sizes)
        for j, n in enumerate(grid.tolist()):
            col = sizes[:, j]
            col = col[~np.isnan(col)]
            if col.size == 0:
                raise RuntimeError(f"every ball of radius {n} reaches the box boundary; use a larger L")
            values[("volume", n)], within[("volume", n)] = _summarize("volume", col)
    return TreeResult(index, values, within, discards, attempts)


def run_ensemble(config: EnsembleConfig, n_grid=(), exit_grid=(), volume_grid=(), stats=WALK_STATS) -> list[EnsembleEstimate]:
    """All requested statistics over the tree ensemble, merged in tree order."""
    if config.trees < 2:
        raise ValueError("an ensemble needs at least two trees")

    def job(i):
        return tree_pass(config, i, n_grid, exit_grid, volume_grid, stats)

    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            results = list(pool.map(job, range(config.trees)))
    else:
        results = [job(i) for i in range(config.trees)]
    results.sort(key=lambda r: r.index)
    discards = sum(r.discards for r in results)
    attempts = sum(r.attempts for r in results)
    rate = discards / attempts if attempts else 0.0
    out = []
    for key in sorted(results[0].values, key=lambda k: (ALL_STATS.index(k[0]), k[1])):
        per_tree = np.array([r.values[key] for r in results])
        mean = float(per_tree.mean())
        bvar = float(per_tree.var(ddof=1))
        half = Z95 * math.sqrt(bvar / per_tree.size)
        wvar = float(np.mean([r.within[key] for r in results]))
        s, n = key
        walks = 0 if s == "volume" else config.walks
        out.append(EnsembleEstimate(s, n, mean, mean - half, mean + half, config.trees, walks, rate, config.seed, bvar, wvar))
    return out


def return_probability(config: EnsembleConfig, n: int) -> EnsembleEstimate:
    """P(X_n = X_0), averaged within each tree and then across trees."""
    if n % 2:
        raise ValueError("return probabilities are taken at even times")
    if n == 0:
        return EnsembleEstimate("return", 0, 1.0, 1.0, 1.0, config.trees, config.walks, 0.0, config.seed)
    return run_ensemble(config, [n], stats=("return",))[0]


def displacement_profile(config: EnsembleConfig, n_grid) -> dict[str, list[EnsembleEstimate]]:
    est = run_ensemble(config, n_grid, stats=("intrinsic", "intrinsic_max", "extrinsic", "msd"))
    out: dict[str, list[EnsembleEstimate]] = {}
    for e in est:
        out.setdefault(e.statistic, []).append(e)
    return out


def range_profile(config: EnsembleConfig, n_grid) -> list[EnsembleEstimate]:
    return run_ensemble(config, n_grid, stats=("range",))


def exit_time_profile(config: EnsembleConfig, n_grid) -> list[EnsembleEstimate]:
    return run_ensemble(config, exit_grid=n_grid, stats=("exit",))


def loglog_slope(n, y) -> float:
    """Least-squares slope of log y against log n."""
    return float(np.polyfit(np.log(np.asarray(n, float)), np.log(np.asarray(y, float)), 1)[0])
