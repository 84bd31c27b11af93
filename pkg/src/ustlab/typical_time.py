"""Escape probabilities of path tips, the T̃ functional, and typical times.

For a path η of length m, Esc_k(η) is the probability that a k-step walk
from η_m avoids η_0..η_{m-1}. For k <= ``EXACT_MAX_K`` it is computed by
enumerating all (2d)^k walks; beyond that by simulation.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path as FsPath

import numba as nb
import numpy as np

from .lattice import PointSet, RngSeed, _member, escape_radius, green_decay_constant, unit_steps
from .paths import Path

EXACT_MAX_K = 4
REJECTION_CUTOFF = 10**5


@dataclass
class Estimate:
    value: float
    std_error: float
    method: str


@dataclass
class EscapeProfile:
    """A_i for i < n, and the full Esc_k(γ^i) table (rows i, columns k = 0..n)."""

    path: Path
    A: np.ndarray
    esc: np.ndarray
    exact_k: int

    @property
    def n(self) -> int:
        return self.path.length

    def method(self, k: int) -> str:
        return "exact" if k <= self.exact_k else "mc"

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["i", "k", "value", "method"])
            for i in range(self.esc.shape[0]):
                for k in range(self.esc.shape[1]):
                    w.writerow([i, k, repr(float(self.esc[i, k])), self.method(k)])


class _PathIndex:
    """Membership with the position of each point along a simple path."""

    def __init__(self, points: np.ndarray):
        self.ps = PointSet(points)
        if len(self.ps) != points.shape[0]:
            raise ValueError("path is not simple")
        keys = ((points - self.ps.lo) * self.ps.stride).sum(axis=1)
        pos = np.searchsorted(self.ps.keys, keys)
        self.order = np.empty(points.shape[0], dtype=np.int64)
        self.order[pos] = np.arange(points.shape[0])

    def positions(self, pts: np.ndarray) -> np.ndarray:
        """Path index of each row of pts, or a large sentinel when absent."""
        ps = self.ps
        inside = np.all((pts >= ps.lo) & (pts <= ps.hi), axis=1)
        keys = ((pts - ps.lo) * ps.stride).sum(axis=1)
        j = np.clip(np.searchsorted(ps.keys, keys), 0, len(ps) - 1)
        hit = inside & (ps.keys[j] == keys)
        return np.where(hit, self.order[j], np.iinfo(np.int64).max)


def _exact_survival(index: _PathIndex, tip: np.ndarray, m: int, K: int) -> np.ndarray:
    """Esc_k for k = 0..K by enumeration; hits are points with index < m."""
    d = tip.shape[0]
    steps = unit_steps(d)
    out = np.ones(K + 1)
    frontier = tip.reshape(1, d)
    for k in range(1, K + 1):
        frontier = (frontier[:, None, :] + steps[None, :, :]).reshape(-1, d)
        frontier = frontier[index.positions(frontier) >= m]
        out[k] = frontier.shape[0] / float(2 * d) ** k
        if frontier.shape[0] == 0:
            out[k + 1 :] = 0.0
            break
    return out


@nb.njit(cache=True)
def _mc_survival(rng, points, keys, lo, stride, hi, order, tips, trials, K):
    """surv[i, k] = fraction of walks from points[tips[i]] avoiding points[:tips[i]] for k steps."""
    d = points.shape[1]
    nd = 2 * d
    surv = np.zeros((tips.shape[0], K + 1))
    x = np.empty(d, dtype=np.int64)
    hist = np.zeros(K + 2, dtype=np.int64)
    for a in range(tips.shape[0]):
        m = tips[a]
        hist[:] = 0
        for _ in range(trials):
            for c in range(d):
                x[c] = points[m, c]
            t_hit = K + 1
            for t in range(1, K + 1):
                s = int(rng.random() * nd)
                ax = s >> 1
                if s & 1:
                    x[ax] -= 1
                else:
                    x[ax] += 1
                j = _member(x, keys, lo, stride, hi)
                if j >= 0 and order[j] < m:
                    t_hit = t
                    break
            hist[t_hit] += 1
        # survived k steps iff t_hit > k
        alive = trials
        for k in range(K + 1):
            alive -= hist[k]
            surv[a, k] = alive / trials
    return surv


def escape_probability(eta: Path, k: int, trials: int, seed: RngSeed) -> Estimate:
    """Esc_k(η): exact enumeration for k <= 4, Monte Carlo beyond."""
    if k < 0:
        raise ValueError("k must be nonnegative")
    m = eta.length
    if k == 0 or m == 0:
        return Estimate(1.0, 0.0, "exact")
    index = _PathIndex(eta.points)
    if k <= EXACT_MAX_K:
        return Estimate(float(_exact_survival(index, eta.points[m], m, k)[k]), 0.0, "exact")
    return escape_probability_mc(eta, k, trials, seed, index)


def escape_probability_mc(eta: Path, k: int, trials: int, seed: RngSeed, index: _PathIndex | None = None) -> Estimate:
    m = eta.length
    if m == 0:
        return Estimate(1.0, 0.0, "exact")
    index = index or _PathIndex(eta.points)
    ps = index.ps
    surv = _mc_survival(
        seed.generator(), eta.points, ps.keys, ps.lo, ps.stride, ps.hi, index.order, np.array([m]), trials, k
    )
    p = float(surv[0, k])
    return Estimate(p, math.sqrt(max(p * (1 - p), 1.0 / trials) / trials), "mc")


def t_tilde(gamma: Path, trials: int, seed: RngSeed) -> tuple[float, EscapeProfile]:
    """T̃(γ) = Σ_{i<n} A_i(γ), A_i = Σ_{k=1}^{n} Esc_k(γ^i)² / k.

    One batch of n-step walks per tip gives the whole curve k -> Esc_k(γ^i);
    the first four columns are replaced by exact enumeration.
    """
    n = gamma.length
    if n < 1:
        raise ValueError("γ must have length >= 1")
    index = _PathIndex(gamma.points)
    ps = index.ps
    tips = np.arange(n, dtype=np.int64)
    esc = _mc_survival(seed.generator(), gamma.points, ps.keys, ps.lo, ps.stride, ps.hi, index.order, tips, trials, n)
    K = min(EXACT_MAX_K, n)
    for i in range(n):
        esc[i, : K + 1] = _exact_survival(index, gamma.points[i], i, K)
    w = 1.0 / np.arange(1, n + 1)
    A = (esc[:, 1:] ** 2) @ w
    return float(A.sum()), EscapeProfile(gamma, A, esc, K)


def is_delta_good(profile: EscapeProfile, delta: float) -> bool:
    """Σ_i A_i 1(A_i >= (log n)^{1/3+δ}) <= δ n."""
    n = profile.n
    if n < 2:
        raise ValueError("δ-goodness needs n >= 2")
    if not 0 < delta <= 1:
        raise ValueError("δ must lie in (0, 1]")
    thr = math.log(n) ** (1 / 3 + delta)
    A = profile.A
    return bool(A[A >= thr].sum() <= delta * n)


# --- (A, B)-typical time by rejection ---------------------------------------


@dataclass
class TypicalTimeResult:
    T_hat: float
    std_error: float
    acceptance_rate: float
    accepted: int
    trials: int
    leaked: int
    leak_bound: float
    capped_sums: np.ndarray = field(repr=False)
    tau: np.ndarray = field(repr=False)

    def to_json(self) -> str:
        return json.dumps(
            {
                "T_hat": self.T_hat,
                "std_error": self.std_error,
                "acceptance_rate": self.acceptance_rate,
                "accepted": self.accepted,
                "trials": self.trials,
                "leaked": self.leaked,
                "leak_bound": self.leak_bound,
            },
            sort_keys=True,
        )


@nb.njit(cache=True)
def _le_times(walk, length):
    """ℓ-times of the loop-erasure of walk[:length+1]."""
    d = walk.shape[1]
    m = length + 1
    lo = walk[0].copy()
    hi = walk[0].copy()
    for t in range(m):
        for c in range(d):
            lo[c] = min(lo[c], walk[t, c])
            hi[c] = max(hi[c], walk[t, c])
    keys = np.zeros(m, dtype=np.int64)
    for t in range(m):
        s = 1
        for c in range(d - 1, -1, -1):
            keys[t] += (walk[t, c] - lo[c]) * s
            s *= hi[c] - lo[c] + 1
    order = np.argsort(keys, kind="mergesort")
    last = np.empty(m, dtype=np.int64)
    j = m - 1
    while j >= 0:
        k = j
        while k > 0 and keys[order[k - 1]] == keys[order[j]]:
            k -= 1
        lt = order[j]
        for q in range(k, j + 1):
            last[order[q]] = lt
        j = k - 1
    out = np.empty(m, dtype=np.int64)
    out[0] = 0
    n = 0
    while last[out[n]] != m - 1:
        out[n + 1] = last[out[n]] + 1
        n += 1
    return out[: n + 1]


@nb.njit(cache=True)
def _rejection(rng, gamma, a_keys, a_lo, a_stride, a_hi, b_keys, b_lo, b_stride, b_hi, has_b, trials, cutoff, r2_stop):
    d = gamma.shape[1]
    nd = 2 * d
    n = gamma.shape[0] - 1
    walk = np.empty((cutoff + 1, d), dtype=np.int64)
    caps = np.empty(trials, dtype=np.int64)
    taus = np.empty(trials, dtype=np.int64)
    acc = 0
    leaked = 0
    x = np.empty(d, dtype=np.int64)
    for _ in range(trials):
        for c in range(d):
            x[c] = gamma[0, c]
            walk[0, c] = x[c]
        t = 0
        status = 0
        while True:
            if _member(x, a_keys, a_lo, a_stride, a_hi) >= 0:
                status = 1
                break
            if has_b and _member(x, b_keys, b_lo, b_stride, b_hi) >= 0:
                break
            r2 = 0.0
            for c in range(d):
                r2 += (x[c] - gamma[0, c]) ** 2
            if t >= cutoff or r2 >= r2_stop:
                status = 2
                break
            s = int(rng.random() * nd)
            ax = s >> 1
            if s & 1:
                x[ax] -= 1
            else:
                x[ax] += 1
            t += 1
            for c in range(d):
                walk[t, c] = x[c]
        if status == 2:
            leaked += 1
            continue
        if status == 0:
            continue
        ell = _le_times(walk, t)
        if ell.shape[0] != n + 1:
            continue
        ok = True
        for i in range(n + 1):
            for c in range(d):
                if walk[ell[i], c] != gamma[i, c]:
                    ok = False
        if not ok:
            continue
        s_cap = 0
        for i in range(1, n + 1):
            s_cap += min(ell[i] - ell[i - 1], n)
        caps[acc] = s_cap
        taus[acc] = t
        acc += 1
    return caps[:acc], taus[:acc], leaked


def typical_time_mc(
    gamma: Path,
    A,
    B,
    trials: int,
    seed: RngSeed,
    cutoff: int = REJECTION_CUTOFF,
    leak_tol: float = 1e-3,
) -> TypicalTimeResult:
    """(A,B)-typical time of γ by rejection sampling.

    Walks from γ_0 run until they hit A ∪ B; a run is accepted when it hits
    A first and its loop-erasure is γ. Runs that exceed ``cutoff`` steps or
    wander far enough that at most ``leak_tol`` chance of reaching A remains
    are tallied as leaked, not rejected.
    """
    if gamma.length > 6:
        raise ValueError("rejection sampling is limited to |γ| <= 6")
    A_pts = np.atleast_2d(np.asarray(A, dtype=np.int64))
    a_set = PointSet(A_pts)
    if gamma.end not in a_set:
        raise ValueError("γ must end in A")
    d = gamma.d
    if B is not None and len(B):
        b_set = PointSet(np.atleast_2d(np.asarray(B, dtype=np.int64)))
        if any(tuple(p) in b_set for p in gamma.points.tolist()):
            raise ValueError("γ must avoid B")
        if any(tuple(p) in b_set for p in a_set.points.tolist()):
            raise ValueError("A and B must be disjoint")
        has_b = True
    else:
        b_set = PointSet(np.zeros((1, d), dtype=np.int64) + np.iinfo(np.int32).max)
        has_b = False
    spread = float(np.sqrt(((a_set.points - gamma.points[0]) ** 2).sum(axis=1).max()))
    R = escape_radius(d, len(a_set), leak_tol) if d >= 3 else math.inf
    r2_stop = (spread + R) ** 2 if math.isfinite(R) else math.inf
    caps, taus, leaked = _rejection(
        seed.generator(),
        gamma.points,
        a_set.keys, a_set.lo, a_set.stride, a_set.hi,
        b_set.keys, b_set.lo, b_set.stride, b_set.hi,
        has_b, trials, cutoff, r2_stop,
    )
    acc = caps.shape[0]
    if acc == 0:
        raise RuntimeError(f"no accepted runs in {trials} trials (leaked {leaked})")
    se = float(caps.std(ddof=1) / math.sqrt(acc)) if acc > 1 else math.inf
    leak_bound = len(a_set) * green_decay_constant(d) * R ** (2 - d) if d >= 3 else math.nan
    return TypicalTimeResult(float(caps.mean()), se, acc / trials, acc, trials, int(leaked), leak_bound, caps, taus)


def concentration_probe(result: TypicalTimeResult, n: int, lambdas=(1, 2, 4, 8)) -> dict:
    """Empirical P(|τ_A - T_hat| > λ n) and the least-squares C in C/λ."""
    lam = np.asarray(lambdas, dtype=float)
    dev = np.abs(result.tau - result.T_hat)
    tail = np.array([(dev > l * n).mean() for l in lam])
    C = float((tail / lam).sum() / (1 / lam**2).sum())
    return {
        "lambda": lam.tolist(),
        "tail": tail.tolist(),
        "C": C,
        "nonincreasing": bool(np.all(np.diff(tail) <= 0)),
        "within_3C": bool(np.all(tail <= 3 * C / lam)),
    }


def straight_line(n: int, d: int = 4, axis: int = 0) -> Path:
    pts = np.zeros((n + 1, d), dtype=np.int64)
    pts[:, axis] = np.arange(n + 1)
    return Path(pts)
