"""Z^d geometry, simple random walk sampling and Green's function estimation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numba as nb
import numpy as np

from .paths import Path

MAX_DIM = 8

LatticePoint = tuple[int, ...]


@dataclass(frozen=True)
class RngSeed:
    """Key of a reproducible random stream.

    ``(seed, stream)`` is used directly as the Philox key, so two different
    pairs give independent streams and nothing depends on call order.
    """

    seed: int
    stream: int = 0

    def generator(self) -> np.random.Generator:
        key = np.array([self.seed % 2**64, self.stream % 2**64], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))

    def child(self, *index: int) -> "RngSeed":
        """Derive the stream for a sub-task such as (tree index, walk index)."""
        ss = np.random.SeedSequence(
            entropy=[self.seed % 2**64, self.stream % 2**64], spawn_key=tuple(index)
        )
        return RngSeed(self.seed, int(ss.generate_state(1, dtype=np.uint64)[0]))


@dataclass(frozen=True)
class Box:
    """The l-infinity ball Λ(center, radius)."""

    center: LatticePoint
    radius: int

    @property
    def d(self) -> int:
        return len(self.center)

    @property
    def width(self) -> int:
        return 2 * self.radius + 1

    @property
    def volume(self) -> int:
        return self.width**self.d

    def contains(self, p: Sequence[int]) -> bool:
        return all(abs(int(a) - int(c)) <= self.radius for a, c in zip(p, self.center))

    def points(self) -> np.ndarray:
        """All sites, lexicographic order (first coordinate most significant)."""
        axes = [np.arange(c - self.radius, c + self.radius + 1) for c in self.center]
        grid = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.ravel() for g in grid], axis=1).astype(np.int64)


@dataclass
class CapacityEstimate:
    """Point estimate with sampling error and a deterministic truncation bound.

    ``std_error`` already includes ``bias_bound`` (added linearly) so that
    ``value ± k * std_error`` comparisons are conservative.
    """

    value: float
    std_error: float
    trials: int
    method: str
    bias_bound: float = 0.0
    extra: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "value": self.value,
            "std_error": self.std_error,
            "trials": self.trials,
            "method": self.method,
            "bias_bound": self.bias_bound,
            **self.extra,
        }


def check_dim(d: int) -> None:
    if not 1 <= d <= MAX_DIM:
        raise ValueError(f"dimension must be in 1..{MAX_DIM}, got {d}")


def unit_steps(d: int) -> np.ndarray:
    """The 2d unit vectors in the fixed order +e_1, -e_1, ..., +e_d, -e_d."""
    check_dim(d)
    steps = np.zeros((2 * d, d), dtype=np.int64)
    for i in range(d):
        steps[2 * i, i] = 1
        steps[2 * i + 1, i] = -1
    return steps


def neighbors(p: Sequence[int]) -> list[LatticePoint]:
    p = tuple(int(a) for a in p)
    return [tuple(a + b for a, b in zip(p, s)) for s in unit_steps(len(p)).tolist()]


def sup_norm(p: Sequence[int]) -> int:
    return max(abs(int(a)) for a in p)


@nb.njit(cache=True)
def _srw_steps(rng, steps, n_dirs):
    out = np.empty(steps, dtype=np.int64)
    for t in range(steps):
        out[t] = int(rng.random() * n_dirs)
    return out


def sample_srw(start: Sequence[int], steps: int, seed: RngSeed) -> Path:
    """Simple random walk path of ``steps`` steps from ``start``."""
    if steps < 0:
        raise ValueError("steps must be nonnegative")
    start = np.asarray(start, dtype=np.int64)
    d = start.shape[0]
    dirs = _srw_steps(seed.generator(), steps, 2 * d)
    inc = unit_steps(d)[dirs]
    pts = np.empty((steps + 1, d), dtype=np.int64)
    pts[0] = start
    np.cumsum(inc, axis=0, out=pts[1:])
    pts[1:] += start
    return Path(pts)


# --- Green's function -------------------------------------------------------


def green_decay_constant(d: int) -> float:
    """C such that E_0[visits to x] <= C |x|_2^{2-d} for every x != 0.

    Twice the asymptotic constant (d/2) Γ(d/2-1) π^{-d/2}; the factor two
    covers the small-|x| excess (at |x| = 1 in d = 3, 4 the ratio is < 1.2).
    """
    if d < 3:
        raise ValueError("Green's function requires d >= 3")
    return 2.0 * (d / 2) * math.gamma(d / 2 - 1) * math.pi ** (-d / 2)


def lclt_tail(d: int, horizon: int) -> float:
    """Upper bound on sum_{t > horizon} P(X_t = y), from p_t <= 2 (d / 2πt)^{d/2}."""
    if d < 3:
        raise ValueError("transience requires d >= 3")
    h = max(horizon, 1)
    return 2.0 * (d / (2 * math.pi)) ** (d / 2) * h ** (1 - d / 2) / (d / 2 - 1)


def escape_radius(d: int, n_points: int, tol: float) -> float:
    """Radius R with n_points * C_d / R^{d-2} <= tol."""
    return (n_points * green_decay_constant(d) / tol) ** (1.0 / (d - 2))


@nb.njit(cache=True)
def _encode(p, lo, stride, hi):
    key = 0
    for i in range(p.shape[0]):
        if p[i] < lo[i] or p[i] > hi[i]:
            return -1
        key += (p[i] - lo[i]) * stride[i]
    return key


@nb.njit(cache=True)
def _member(p, keys, lo, stride, hi):
    """Index into the sorted key array, or -1 when p is not in the set."""
    key = _encode(p, lo, stride, hi)
    if key < 0:
        return -1
    j = np.searchsorted(keys, key)
    if j < keys.shape[0] and keys[j] == key:
        return j
    return -1


class PointSet:
    """Finite subset of Z^d with a numba-friendly membership index."""

    def __init__(self, points):
        pts = np.unique(np.asarray(points, dtype=np.int64).reshape(-1, np.shape(points)[-1]), axis=0)
        if pts.shape[0] == 0:
            raise ValueError("empty point set")
        self.points = pts
        self.d = pts.shape[1]
        self.lo = pts.min(axis=0)
        self.hi = pts.max(axis=0)
        ext = self.hi - self.lo + 1
        if float(np.prod(ext.astype(float))) > 2.0**62:
            raise ValueError("point set bounding box too large to index")
        stride = np.ones(self.d, dtype=np.int64)
        for i in range(self.d - 2, -1, -1):
            stride[i] = stride[i + 1] * ext[i + 1]
        self.stride = stride
        raw = ((pts - self.lo) * stride).sum(axis=1)
        order = np.argsort(raw)
        self.keys = raw[order]
        self.points = pts[order]
        self.center = pts.mean(axis=0)
        self.radius = float(np.sqrt(((pts - self.center) ** 2).sum(axis=1).max()))

    def __len__(self) -> int:
        return self.points.shape[0]

    def index(self, p) -> int:
        return int(_member(np.asarray(p, dtype=np.int64), self.keys, self.lo, self.stride, self.hi))

    def __contains__(self, p) -> bool:
        return self.index(p) >= 0


@nb.njit(cache=True)
def _visit_walks(rng, start, target, trials, horizon, center, r2_stop):
    """Visits to ``target`` by walks from ``start`` (time 0 included).

    A walk stops at ``horizon`` steps or once |X - center|^2 >= r2_stop.
    Returns per-walk visit counts and how many walks hit the horizon.
    """
    d = start.shape[0]
    counts = np.zeros(trials, dtype=np.int64)
    n_horizon = 0
    x = np.empty(d, dtype=np.int64)
    for w in range(trials):
        for i in range(d):
            x[i] = start[i]
        c = 0
        same = True
        for i in range(d):
            if x[i] != target[i]:
                same = False
        if same:
            c += 1
        t = 0
        while True:
            r2 = 0.0
            for i in range(d):
                r2 += (x[i] - center[i]) ** 2
            if r2 >= r2_stop:
                break
            if t >= horizon:
                n_horizon += 1
                break
            k = int(rng.random() * 2 * d)
            ax = k >> 1
            if k & 1:
                x[ax] -= 1
            else:
                x[ax] += 1
            t += 1
            same = True
            for i in range(d):
                if x[i] != target[i]:
                    same = False
                    break
            if same:
                c += 1
        counts[w] = c
    return counts, n_horizon


def green_estimate(
    x: Sequence[int],
    y: Sequence[int],
    trials: int,
    horizon: int,
    seed: RngSeed,
    tail_tol: float = 1e-4,
) -> CapacityEstimate:
    """Monte Carlo estimate of G(x, y) = (1/2d) E_x[#visits to y].

    Walks stop after ``horizon`` steps or once they are far enough from y
    that at most ``tail_tol`` further expected visits remain. The truncation
    bound (in units of G) is reported as ``bias_bound`` and folded into the
    standard error.
    """
    x = np.asarray(x, dtype=np.int64)
    y = np.asarray(y, dtype=np.int64)
    d = x.shape[0]
    if d <= 2:
        raise ValueError("Green's function undefined in recurrent dimensions d <= 2")
    check_dim(d)
    R = escape_radius(d, 1, tail_tol)
    r2_stop = max(R, 2.0 * float(np.sqrt(((x - y) ** 2).sum()))) ** 2
    counts, n_h = _visit_walks(seed.generator(), x, y, trials, horizon, y.astype(np.float64), r2_stop)
    deg = 2 * d
    tail = max(tail_tol, lclt_tail(d, horizon) if n_h else 0.0) / deg
    mean = counts.mean() / deg
    se = counts.std(ddof=1) / math.sqrt(trials) / deg if trials > 1 else float("inf")
    return CapacityEstimate(mean, se + tail, trials, "visit_count", tail)
