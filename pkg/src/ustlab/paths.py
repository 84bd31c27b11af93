"""Lattice paths, loop-erasure with ℓ/ρ bookkeeping, and cut times."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path as FsPath

import numba as nb
import numpy as np


@dataclass
class Path:
    """Nearest-neighbour path in Z^d stored as an (m+1, d) integer array."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.int64)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1)
        if pts.shape[0] == 0:
            raise ValueError("a path has at least one point")
        self.points = pts

    @property
    def length(self) -> int:
        return self.points.shape[0] - 1

    @property
    def d(self) -> int:
        return self.points.shape[1]

    @property
    def start(self) -> tuple[int, ...]:
        return tuple(int(a) for a in self.points[0])

    @property
    def end(self) -> tuple[int, ...]:
        return tuple(int(a) for a in self.points[-1])

    def is_nearest_neighbour(self) -> bool:
        steps = np.abs(np.diff(self.points, axis=0)).sum(axis=1)
        return bool(np.all(steps == 1))

    def is_simple(self) -> bool:
        return np.unique(point_ids(self.points)).shape[0] == self.points.shape[0]

    def stopped(self, b: int) -> "Path":
        """The path stopped at time b."""
        return Path(self.points[: b + 1])

    def __eq__(self, other) -> bool:
        return isinstance(other, Path) and np.array_equal(self.points, other.points)

    def to_text(self) -> str:
        return "".join(" ".join(str(int(a)) for a in row) + "\n" for row in self.points)

    @classmethod
    def from_text(cls, text: str) -> "Path":
        rows = [list(map(int, line.split())) for line in text.splitlines() if line.strip()]
        return cls(np.array(rows, dtype=np.int64))

    def save(self, path) -> None:
        FsPath(path).write_text(self.to_text())

    @classmethod
    def load(cls, path) -> "Path":
        return cls.from_text(FsPath(path).read_text())


@dataclass
class LoopErasureRecord:
    erased: Path
    ell: np.ndarray


def point_ids(points: np.ndarray) -> np.ndarray:
    """Dense integer ids with ids[i] == ids[j] iff points[i] == points[j]."""
    pts = np.asarray(points, dtype=np.int64)
    lo = pts.min(axis=0)
    ext = pts.max(axis=0) - lo + 1
    if float(np.prod(ext.astype(float))) < 2.0**62:
        stride = np.cumprod(np.concatenate([[1], ext[:0:-1]]))[::-1].astype(np.int64)
        keys = ((pts - lo) * stride).sum(axis=1)
        _, ids = np.unique(keys, return_inverse=True)
    else:
        _, ids = np.unique(pts, axis=0, return_inverse=True)
    return ids.reshape(-1).astype(np.int64)


@nb.njit(cache=True)
def _last_visits(ids):
    n_ids = 0
    for i in range(ids.shape[0]):
        if ids[i] + 1 > n_ids:
            n_ids = ids[i] + 1
    last = np.empty(n_ids, dtype=np.int64)
    for i in range(ids.shape[0]):
        last[ids[i]] = i
    return last


@nb.njit(cache=True)
def _ell_times(ids, last):
    m = ids.shape[0] - 1
    out = np.empty(ids.shape[0], dtype=np.int64)
    out[0] = 0
    k = 0
    while True:
        nxt = last[ids[out[k]]]
        if nxt == m:
            break
        k += 1
        out[k] = nxt + 1
    return out[: k + 1]


@nb.njit(cache=True)
def _cut_mask(ids, last):
    mask = np.zeros(ids.shape[0], dtype=np.bool_)
    reach = -1
    for t in range(ids.shape[0]):
        lt = last[ids[t]]
        if lt > reach:
            reach = lt
        if reach == t:
            mask[t] = True
    return mask


def erase_loops(path: Path) -> LoopErasureRecord:
    """Loop-erasure via ℓ_0 = 0, ℓ_{k+1} = 1 + max{j : w_j = w_{ℓ_k}}."""
    ids = point_ids(path.points)
    ell = _ell_times(ids, _last_visits(ids))
    return LoopErasureRecord(Path(path.points[ell]), ell)


def rho(record: LoopErasureRecord, m: int) -> int:
    """ρ_m = max{k : ℓ_k <= m}, the number of surviving points among times 1..m."""
    if m < 0:
        raise ValueError("m must be nonnegative")
    return int(np.searchsorted(record.ell, m, side="right")) - 1


def cut_times(path: Path) -> np.ndarray:
    """All t with {w_0..w_t} and {w_{t+1}..w_end} disjoint (the end always qualifies)."""
    ids = point_ids(path.points)
    return np.flatnonzero(_cut_mask(ids, _last_visits(ids)))


def le_prefix_certified(walk: Path, n: int, min_future: int = 1) -> tuple[Path, bool]:
    """LE(walk)^{ρ_n}, the loop-erasure contributed by the first n steps.

    ``certified`` is True when the walk has a cut time t with
    n <= t <= length - min_future. Up to that cut time the erasure of any
    extension that stays off walk[0..t] agrees with this one.
    """
    if not 0 <= n <= walk.length:
        raise ValueError("n must lie in [0, walk length]")
    ids = point_ids(walk.points)
    last = _last_visits(ids)
    ell = _ell_times(ids, last)
    k = int(np.searchsorted(ell, n, side="right")) - 1
    prefix = Path(walk.points[ell[: k + 1]])
    cuts = np.flatnonzero(_cut_mask(ids, last))
    hi = walk.length - min_future
    certified = bool(np.any((cuts >= n) & (cuts <= hi)))
    return prefix, certified


def erase_loops_chronological(points: np.ndarray) -> np.ndarray:
    """Stack-based erasure: append each point, cutting back when it closes a loop."""
    stack: list[tuple[int, ...]] = []
    where: dict[tuple[int, ...], int] = {}
    for row in np.asarray(points).tolist():
        p = tuple(row)
        j = where.get(p)
        if j is not None:
            for q in stack[j + 1 :]:
                del where[q]
            del stack[j + 1 :]
        else:
            where[p] = len(stack)
            stack.append(p)
    return np.array(stack, dtype=np.int64).reshape(len(stack), -1)


def erase_loops_naive(points: np.ndarray) -> np.ndarray:
    """Definitional oracle: repeatedly delete the first loop until none remain."""
    w = [tuple(r) for r in np.asarray(points).tolist()]
    while True:
        seen: dict[tuple[int, ...], int] = {}
        for j, p in enumerate(w):
            if p in seen:
                i = seen[p]
                w = w[: i + 1] + w[j + 1 :]
                break
            seen[p] = j
        else:
            return np.array(w, dtype=np.int64).reshape(len(w), -1)
