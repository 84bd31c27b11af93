"""Discrete capacity of finite subsets of Z^d and related hitting sums.

Walks are stopped either at a step horizon or once they are far enough from
the target set; the probability of a later hit is bounded with the Green's
function decay ``green_decay_constant(d) / dist^{d-2}`` and reported as a
bias bound next to every estimate.
"""

from __future__ import annotations

import hashlib
import itertools
import math
import os
import zlib
from dataclasses import dataclass
from pathlib import Path as FsPath
from typing import Callable, Sequence

import numba as nb
import numpy as np

from .lattice import (
    CapacityEstimate,
    PointSet,
    RngSeed,
    _member,
    check_dim,
    escape_radius,
    green_decay_constant,
    green_estimate,
    lclt_tail,
    sample_srw,
)
from .paths import Path, _cut_mask, _ell_times, _last_visits, point_ids

GREEN_CACHE_VERSION = 1


@dataclass
class EquilibriumMeasure:
    support: np.ndarray
    weights: np.ndarray
    quadratic_form_value: float


def _points(S) -> np.ndarray:
    pts = np.asarray(S, dtype=np.int64)
    if pts.ndim == 1:
        pts = pts.reshape(1, -1)
    return pts


@nb.njit(cache=True)
def _walk_until(rng, x, keys, lo, stride, hi, center, r2_stop, horizon):
    """Advance x in place from time 0 until it lands in the set (t >= 1),
    leaves the ball |x - center|^2 < r2_stop, or reaches the horizon.

    Returns (reason, steps): reason 0 = hit, 1 = far, 2 = horizon.
    """
    d = x.shape[0]
    nd = 2 * d
    t = 0
    while True:
        if t >= horizon:
            return 2, t
        k = int(rng.random() * nd)
        ax = k >> 1
        if k & 1:
            x[ax] -= 1
        else:
            x[ax] += 1
        t += 1
        if _member(x, keys, lo, stride, hi) >= 0:
            return 0, t
        r2 = 0.0
        for i in range(d):
            r2 += (x[i] - center[i]) ** 2
        if r2 >= r2_stop:
            return 1, t


@nb.njit(cache=True)
def _escape_walks(rng, starts, trials, keys, lo, stride, hi, center, r2_stop, horizon):
    m = starts.shape[0]
    d = starts.shape[1]
    out = np.zeros((m, 3), dtype=np.int64)
    x = np.empty(d, dtype=np.int64)
    for a in range(m):
        for _ in range(trials):
            for i in range(d):
                x[i] = starts[a, i]
            reason, _t = _walk_until(rng, x, keys, lo, stride, hi, center, r2_stop, horizon)
            out[a, reason] += 1
    return out


def capacity_escape_mc(
    S,
    trials: int,
    horizon: int = 10**6,
    seed: RngSeed = RngSeed(0),
    tol: float = 1e-3,
    sample_points: int | None = None,
) -> CapacityEstimate:
    """Cap(S) = 2d Σ_a P_a(no return to S) by direct simulation.

    ``trials`` walks are run from each point of S, or, with
    ``sample_points``, from that many uniformly drawn points of S (unbiased
    for large sets). Walks are abandoned once no more than ``tol`` return
    probability (per unit of Σ escape) can remain.
    """
    pts = _points(S)
    d = pts.shape[1]
    check_dim(d)
    if d <= 2:
        raise ValueError("capacity is degenerate in recurrent dimensions d <= 2")
    ps = PointSet(pts)
    rng = seed.generator()
    m = len(ps)
    if sample_points is None:
        starts = ps.points
    else:
        starts = ps.points[rng.integers(0, m, size=sample_points)]
    R = escape_radius(d, 1, tol)
    r2_stop = (ps.radius + R) ** 2
    tally = _escape_walks(rng, starts, trials, ps.keys, ps.lo, ps.stride, ps.hi, ps.center, r2_stop, horizon)
    deg = 2 * d
    esc = (tally[:, 1] + tally[:, 2]) / trials
    if sample_points is None:
        value = deg * esc.sum()
        se = deg * math.sqrt((esc * (1 - esc)).sum() / trials)
    else:
        mean = esc.mean()
        value = deg * m * mean
        se = deg * m * math.sqrt(mean * (1 - mean) / (sample_points * trials))
    # later returns: far stops see at most C_d R^{2-d} per unit of Σ escape
    cap_units = min(m, (value + 3 * se) / deg)
    frac_far = tally[:, 1].sum() / tally.sum()
    frac_h = tally[:, 2].sum() / tally.sum()
    per_walk = frac_far * green_decay_constant(d) * R ** (2 - d) * cap_units + frac_h * m * lclt_tail(d, horizon)
    bias = deg * m * per_walk
    return CapacityEstimate(float(value), float(se + bias), int(starts.shape[0] * trials), "escape_mc", float(bias))


# --- Green table and the variational formula --------------------------------


def canonical_offset(v: Sequence[int]) -> tuple[int, ...]:
    """Orbit representative of an offset under the hyperoctahedral group."""
    return tuple(sorted((abs(int(a)) for a in v), reverse=True))


def cache_dir() -> FsPath:
    return FsPath(os.environ.get("USTLAB_CACHE", FsPath.home() / ".cache" / "ustlab"))


class GreenTable:
    """Monte Carlo G(0, v) for all canonical offsets with ||v||_inf <= max_offset."""

    def __init__(self, d: int, max_offset: int, values: dict, errors: dict, bias: dict, meta: dict):
        self.d = d
        self.max_offset = max_offset
        self.values = values
        self.errors = errors
        self.bias = bias
        self.meta = meta

    @classmethod
    def build(
        cls,
        d: int,
        max_offset: int,
        trials: int,
        horizon: int,
        seed: RngSeed,
        use_cache: bool = True,
    ) -> "GreenTable":
        key = f"green-v{GREEN_CACHE_VERSION}-d{d}-m{max_offset}-t{trials}-h{horizon}-s{seed.seed}-{seed.stream}"
        path = cache_dir() / (hashlib.sha256(key.encode()).hexdigest()[:20] + ".npz")
        if use_cache and path.exists():
            return cls.load(path)
        offs = sorted({canonical_offset(v) for v in itertools.product(range(max_offset + 1), repeat=d)})
        values, errors, bias = {}, {}, {}
        for o in offs:
            est = green_estimate([0] * d, o, trials, horizon, seed.child(*o))
            values[o], errors[o], bias[o] = est.value, est.std_error, est.bias_bound
        table = cls(d, max_offset, values, errors, bias, {"trials": trials, "horizon": horizon, "key": key})
        if use_cache:
            path.parent.mkdir(parents=True, exist_ok=True)
            table.save(path)
        return table

    def save(self, path) -> None:
        offs = sorted(self.values)
        np.savez(
            path,
            version=GREEN_CACHE_VERSION,
            d=self.d,
            max_offset=self.max_offset,
            offsets=np.array(offs, dtype=np.int64),
            values=np.array([self.values[o] for o in offs]),
            errors=np.array([self.errors[o] for o in offs]),
            bias=np.array([self.bias[o] for o in offs]),
            key=self.meta.get("key", ""),
        )

    @classmethod
    def load(cls, path) -> "GreenTable":
        z = np.load(path)
        if int(z["version"]) != GREEN_CACHE_VERSION:
            raise ValueError("stale Green table cache")
        offs = [tuple(map(int, o)) for o in z["offsets"]]
        values = dict(zip(offs, z["values"].tolist()))
        errors = dict(zip(offs, z["errors"].tolist()))
        bias = dict(zip(offs, z["bias"].tolist()))
        return cls(int(z["d"]), int(z["max_offset"]), values, errors, bias, {"key": str(z["key"])})

    def lookup(self, u, v) -> tuple[float, float, tuple[int, ...]]:
        o = canonical_offset(np.asarray(v) - np.asarray(u))
        if o not in self.values:
            raise KeyError(f"offset {o} beyond table range {self.max_offset}")
        return self.values[o], self.errors[o], o


def _simplex_minimizer(G: np.ndarray) -> np.ndarray:
    """argmin μᵀGμ over probability vectors, by active-set elimination."""
    active = list(range(G.shape[0]))
    while True:
        sub = G[np.ix_(active, active)]
        cond = np.linalg.cond(sub)
        if not np.isfinite(cond) or cond > 1e12:
            raise np.linalg.LinAlgError(f"Green matrix ill-conditioned (cond = {cond:.3g})")
        y = np.linalg.solve(sub, np.ones(len(active)))
        mu = y / y.sum()
        if np.all(mu >= 0):
            out = np.zeros(G.shape[0])
            out[active] = mu
            return out
        drop = active[int(np.argmin(mu))]
        active.remove(drop)


def capacity_variational(S, green_table: GreenTable) -> tuple[CapacityEstimate, EquilibriumMeasure]:
    """Cap(S)^{-1} = min over probability measures μ on S of Σ G(u,v) μ(u) μ(v).

    The uncertainty of the table entries is propagated to first order (the
    minimizer is stationary, so only the explicit dependence on G counts).
    """
    pts = np.unique(_points(S), axis=0)
    if pts.shape[0] > 64:
        raise ValueError("variational capacity limited to |S| <= 64")
    k = pts.shape[0]
    G = np.empty((k, k))
    which = {}
    for i in range(k):
        for j in range(k):
            g, _, o = green_table.lookup(pts[i], pts[j])
            G[i, j] = g
            which[(i, j)] = o
    mu = _simplex_minimizer(G)
    Q = float(mu @ G @ mu)
    grad: dict = {}
    for (i, j), o in which.items():
        grad[o] = grad.get(o, 0.0) + mu[i] * mu[j]
    var_q = sum(g * g * (green_table.errors[o] - green_table.bias[o]) ** 2 for o, g in grad.items())
    bias_q = sum(abs(g) * green_table.bias[o] for o, g in grad.items())
    cap = 1.0 / Q
    se = float(cap * cap * math.sqrt(var_q))
    bias = float(cap * cap * bias_q)
    trials = int(green_table.meta.get("trials", 0))
    return (
        CapacityEstimate(cap, se + bias, trials, "variational", bias),
        EquilibriumMeasure(pts, mu, Q),
    )


# --- hitting sums -----------------------------------------------------------


@nb.njit(cache=True)
def _box_hits(rng, center, radius, trials, keys, lo, stride, hi, scenter, r2_stop, horizon):
    """Walks from uniform points of Λ(center, radius) \\ S; counts hits of S."""
    d = center.shape[0]
    W = 2 * radius + 1
    x = np.empty(d, dtype=np.int64)
    hits = 0
    far = 0
    hor = 0
    done = 0
    while done < trials:
        for i in range(d):
            x[i] = center[i] - radius + int(rng.random() * W)
        if _member(x, keys, lo, stride, hi) >= 0:
            continue
        reason, _t = _walk_until(rng, x, keys, lo, stride, hi, scenter, r2_stop, horizon)
        if reason == 0:
            hits += 1
        elif reason == 1:
            far += 1
        else:
            hor += 1
        done += 1
    return hits, far, hor


def _hit_sum(center, radius, pts, trials, horizon, seed, stop_factor):
    """Σ_{z∈Λ(center,radius)} P_z(hit S): exact 1 for z in S, Monte Carlo elsewhere."""
    center = np.asarray(center, dtype=np.int64)
    d = center.shape[0]
    ps = PointSet(pts)
    inside = int(np.sum(np.abs(ps.points - center).max(axis=1) <= radius))
    n_box = (2 * radius + 1) ** d
    n_out = n_box - inside
    R_stop = stop_factor * radius * math.sqrt(d)
    r2_stop = (ps.radius + R_stop) ** 2
    if n_out == 0:
        return float(inside), 0.0, 0.0
    hits, far, hor = _box_hits(
        seed.generator(), center, radius, trials, ps.keys, ps.lo, ps.stride, ps.hi, ps.center, r2_stop, horizon
    )
    p = hits / trials
    value = inside + n_out * p
    se = n_out * math.sqrt(max(p * (1 - p), 1.0 / trials) / trials)
    per_walk = (far / trials) * len(ps) * green_decay_constant(d) * R_stop ** (2 - d) + (hor / trials)
    bias = n_out * per_walk
    return value, se, bias


def uniform_hit_sum(
    S,
    r: int,
    trials: int,
    horizon: int = 10**6,
    seed: RngSeed = RngSeed(0),
    cap: CapacityEstimate | None = None,
    stop_factor: float = 8.0,
) -> CapacityEstimate:
    """Σ_{x∈Λ(r)} P_x(X hits S) from uniformly sampled starting points.

    When ``cap`` is given, ``extra`` carries the ratio to r^{d-2} Cap(S) and
    its (first-order) standard error.
    """
    pts = _points(S) if len(S) else np.empty((0, 0), dtype=np.int64)
    if pts.size == 0:
        return CapacityEstimate(0.0, 0.0, trials, "hit_sum")
    d = pts.shape[1]
    if d <= 2:
        raise ValueError("hitting sums need a transient dimension d >= 3")
    if np.abs(pts).max() > r:
        raise ValueError("S must lie inside Λ(r)")
    value, se, bias = _hit_sum(np.zeros(d, dtype=np.int64), r, pts, trials, horizon, seed, stop_factor)
    est = CapacityEstimate(value, se + bias, trials, "hit_sum", bias)
    if cap is not None:
        scale = r ** (d - 2) * cap.value
        ratio = value / scale
        rel = math.hypot(est.std_error / value, cap.std_error / cap.value)
        est.extra = {"ratio": ratio, "ratio_se": ratio * rel}
    return est


@dataclass
class Goodness:
    good: bool
    hit_sum: float
    std_error: float
    threshold: float

    @property
    def margin_sigma(self) -> float:
        if self.std_error == 0:
            return math.copysign(math.inf, self.threshold - self.hit_sum)
        return (self.threshold - self.hit_sum) / self.std_error

    def __bool__(self) -> bool:
        return self.good


def alpha_r_good(
    gamma,
    alpha: float,
    r: int,
    trials: int,
    seed: RngSeed,
    horizon: int = 10**6,
    stop_factor: float = 4.0,
) -> Goodness:
    """Is Σ_{z∈Λ(γ_0,6r)} P_z(hit γ ∩ Λ(γ_0,6r)) <= α r^4 / log r ?"""
    if r < 3:
        raise ValueError("(α, r)-goodness needs r >= 3")
    pts = gamma.points if isinstance(gamma, Path) else _points(gamma)
    g0 = pts[0]
    local = pts[np.abs(pts - g0).max(axis=1) <= 6 * r]
    value, se, bias = _hit_sum(g0, 6 * r, local, trials, horizon, seed, stop_factor)
    threshold = alpha * r**4 / math.log(r)
    return Goodness(value <= threshold, value, se + bias, threshold)


def goodness_classifier(trials: int, seed: RngSeed) -> Callable[[np.ndarray, float, int], bool]:
    """(α, r)-good test as a pure function of the path, for M-set extraction."""

    def classify(path_coords: np.ndarray, alpha: float, r: int) -> bool:
        h = zlib.crc32(np.ascontiguousarray(path_coords, dtype=np.int64).tobytes())
        return alpha_r_good(path_coords, alpha, r, trials, seed.child(h)).good

    return classify


# --- covering ---------------------------------------------------------------


def cardinality(points: np.ndarray) -> float:
    return float(len(points))


def _in_box(pts: np.ndarray, c, radius: int) -> np.ndarray:
    return pts[np.abs(pts - np.asarray(c)).max(axis=1) <= radius]


def greedy_cover(S, r: int, f: Callable[[np.ndarray], float] = cardinality, exclusion: int = 1) -> list[tuple[int, ...]]:
    """Greedy choice of grid centers x_i ∈ (2r+1)Z^d.

    Cells Λ(x, r) partition Z^d. Repeatedly take the remaining center with
    the largest f(S ∩ Λ(x, r)) (ties: smallest center in lexicographic order)
    and discard every remaining center within ``exclusion`` cells of it.
    ``exclusion=1`` is the adjacent-cell rule, which guarantees the two
    covering bounds with constants 3^{-d} and 15^d and disjoint Λ(x_i, 2r);
    ``exclusion=2`` makes the Λ(x_i, 3r) disjoint at the price of constants
    5^{-d} and 21^d.
    """
    pts = np.unique(_points(S), axis=0)
    W = 2 * r + 1
    cells = W * np.floor_divide(pts + r, W)
    keys, inv = np.unique(cells, axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    score = {}
    for j, c in enumerate(keys):
        v = f(pts[inv == j])
        if v > 0:
            score[tuple(int(a) for a in c)] = v
    remaining = set(score)
    chosen: list[tuple[int, ...]] = []
    reach = exclusion * W
    while remaining:
        best = min(remaining, key=lambda c: (-score[c], c))
        chosen.append(best)
        b = np.asarray(best)
        remaining = {c for c in remaining if np.abs(np.asarray(c) - b).max() > reach}
    return chosen


def cover_sums(S, centers, r: int, f: Callable[[np.ndarray], float] = cardinality) -> tuple[float, float, float]:
    """(Σ f(S∩Λ(x_i,r)), Σ f(S∩Λ(x_i,3r)), f(S))."""
    pts = np.unique(_points(S), axis=0)
    inner = sum(f(_in_box(pts, c, r)) for c in centers)
    outer = sum(f(_in_box(pts, c, 3 * r)) for c in centers)
    return inner, outer, f(pts)


# --- LERW prefix capacity ---------------------------------------------------


def lerw_prefix(n: int, seed: RngSeed, d: int = 4, min_future: int | None = None) -> Path:
    """First n steps of the infinite loop-erased walk from the origin.

    The underlying walk is lengthened until a cut time t with ℓ_n <= t leaves
    at least ``min_future`` (default: t itself) further steps without return.
    """
    steps = max(64, 4 * n)
    while True:
        walk = sample_srw([0] * d, steps, seed)
        ids = point_ids(walk.points)
        last = _last_visits(ids)
        ell = _ell_times(ids, last)
        if ell.shape[0] > n:
            cuts = np.flatnonzero(_cut_mask(ids, last))
            need = ell[n]
            ok = cuts[cuts >= need]
            guard = need if min_future is None else min_future
            ok = ok[ok <= walk.length - guard]
            if ok.size:
                return Path(walk.points[ell[: n + 1]])
        steps *= 2


def lerw_prefix_capacity(
    n: int,
    trials: int,
    seed: RngSeed,
    sample_points: int = 256,
    walks_per_point: int = 4,
    tol: float = 0.02,
) -> dict:
    """Quantiles of Cap(LE(X)^n) (log n)^{2/3} / n over ``trials`` samples."""
    if n < 8:
        raise ValueError("n must be >= 8")
    vals = []
    for t in range(trials):
        gamma = lerw_prefix(n, seed.child(t, 0))
        est = capacity_escape_mc(
            gamma.points, walks_per_point, seed=seed.child(t, 1), tol=tol, sample_points=sample_points
        )
        vals.append(est.value * math.log(n) ** (2 / 3) / n)
    v = np.array(vals)
    return {
        "n": n,
        "trials": trials,
        "values": v,
        "q10": float(np.quantile(v, 0.1)),
        "median": float(np.median(v)),
        "q90": float(np.quantile(v, 0.9)),
    }


def lerw_rho(n: int, seed: RngSeed, d: int = 4, future: int | None = None) -> int:
    """ρ_n of the infinite loop-erasure: LE points contributed by the first n steps.

    The walk runs ``future`` (default n) steps past n; the value is returned
    only when a cut time in [n, n + future/2] certifies it, otherwise the
    walk is extended.
    """
    from .paths import le_prefix_certified

    extra = n if future is None else future
    while True:
        walk = sample_srw([0] * d, n + extra, seed)
        prefix, ok = le_prefix_certified(walk, n, min_future=extra // 2)
        if ok:
            return prefix.length
        extra *= 2
