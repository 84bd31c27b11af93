"""Exact oracle batteries with machine-readable pass/fail reports."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from fractions import Fraction
from typing import Callable

import numpy as np
from scipy.stats import chisquare

from ..capacity import cover_sums, greedy_cover
from ..lattice import RngSeed, sample_srw
from ..paths import LoopErasureRecord, Path, _ell_times, _last_visits, cut_times, erase_loops, erase_loops_naive, point_ids, rho
from ..tree import (
    _sphere_resistance_exact,
    ball_arrays,
    omega_r,
    pair_distances,
    resistance_linear_system,
    resistance_profile,
    resistance_to_sphere,
    subtree_heights,
)
from ..wilson import FiniteGraph, SpanningTree, spanning_tree_law, tree_frequencies, wired_box_ust

SUITES = ("wilson", "loop_erasure", "cut_times", "resistance", "covering", "conductance", "weighted_distance")


@dataclass
class BatteryReport:
    battery: str
    passed: bool
    checked: int
    failures: int
    detail: str = ""
    counterexample: str | None = None

    def as_dict(self) -> dict:
        return asdict(self)


# --- mutants (for testing the batteries themselves) -------------------------


def _erase_drop_last(path: Path) -> LoopErasureRecord:
    ids = point_ids(path.points)
    ell = _ell_times(ids, _last_visits(ids))
    if ell.size > 1:
        ell = ell[:-1]
    return LoopErasureRecord(Path(path.points[ell]), ell)


MUTANTS: dict[str, dict[str, Callable]] = {
    "le_off_by_one": {"erase": _erase_drop_last},
}


# --- batteries --------------------------------------------------------------


def check_wilson(samples: int = 300_000, seed: RngSeed = RngSeed(101), alpha: float = 1e-3, **_) -> BatteryReport:
    graphs = [
        ("K3", FiniteGraph.complete(3), 0),
        ("C4 (d=1, L=2 wired box)", FiniteGraph.wired_box(1, 2), 5),
        ("K4", FiniteGraph.complete(4), 0),
    ]
    lines, worst, bad = [], 1.0, None
    for j, (name, g, root) in enumerate(graphs):
        law = spanning_tree_law(g)
        freq = tree_frequencies(g, root, seed.child(j), samples)
        keys = sorted(law)
        stray = set(freq) - set(law)
        obs = np.array([freq.get(k, 0) for k in keys], dtype=float)
        exp = np.array([law[k] * samples for k in keys])
        p = float(chisquare(obs, exp).pvalue) if not stray else 0.0
        lines.append(f"{name}: trees={len(keys)} p={p:.4g}")
        if p <= alpha and bad is None:
            bad = f"{name}: observed {obs.tolist()} expected {exp.tolist()}"
        worst = min(worst, p)
    return BatteryReport("wilson", worst > alpha, len(graphs), int(worst <= alpha), "; ".join(lines), bad)


def check_loop_erasure(
    walks: int = 1000, steps: int = 100, dims=(2, 4), seed: RngSeed = RngSeed(202), erase=erase_loops, **_
) -> BatteryReport:
    checked = failures = 0
    example = None
    for d in dims:
        for k in range(walks):
            w = sample_srw([0] * d, steps, seed.child(d, k))
            rec = erase(w)
            ok = np.array_equal(rec.erased.points, erase_loops_naive(w.points))
            if ok:
                # every (n, m) pair at once: ℓ_n <= m  <=>  ρ_m >= n
                ell = rec.ell
                rhos = np.array([rho(rec, m) for m in range(w.length + 1)])
                n_idx = np.arange(ell.size)[:, None]
                ok = bool(np.array_equal(ell[:, None] <= np.arange(w.length + 1), rhos[None, :] >= n_idx))
            checked += 1
            if not ok:
                failures += 1
                if example is None:
                    example = w.to_text()
    return BatteryReport("loop_erasure", failures == 0, checked, failures, f"d in {list(dims)}, {steps} steps", example)


def check_cut_times(walks: int = 500, steps: int = 200, d: int = 4, seed: RngSeed = RngSeed(303), erase=erase_loops, **_) -> BatteryReport:
    checked = failures = 0
    example = None
    for k in range(walks):
        w = sample_srw([0] * d, steps, seed.child(k))
        full = erase(w).erased.points
        for t in cut_times(w).tolist():
            head = erase(Path(w.points[: t + 1])).erased.points
            if t < w.length:
                tail = erase(Path(w.points[t + 1 :])).erased.points
                joined = np.concatenate([head, tail])
            else:
                joined = head
            checked += 1
            if not np.array_equal(joined, full):
                failures += 1
                if example is None:
                    example = f"cut time {t}\n" + w.to_text()
    return BatteryReport("cut_times", failures == 0, checked, failures, f"{walks} walks of {steps} steps", example)


def _line(n: int) -> SpanningTree:
    parent = np.arange(-1, n, dtype=np.int64)
    parent[0] = 0
    return SpanningTree(parent, 0)


def _binary(depth: int) -> SpanningTree:
    n = 2 ** (depth + 1) - 1
    parent = (np.arange(n, dtype=np.int64) - 1) // 2
    parent[0] = 0
    return SpanningTree(parent, 0)


def random_recursive_tree(n: int, rng: np.random.Generator) -> SpanningTree:
    parent = np.zeros(n, dtype=np.int64)
    for i in range(1, n):
        parent[i] = rng.integers(0, i)
    return SpanningTree(parent, 0)


def check_resistance(fixtures: int = 50, seed: RngSeed = RngSeed(404), **_) -> BatteryReport:
    checked = failures = 0
    notes = []
    for n in (1, 2, 3, 7, 64, 255, 256):
        R = resistance_to_sphere(_line(n), 0, n)
        checked += 1
        if R != float(n):
            failures += 1
            notes.append(f"line {n}: {R!r}")
    for depth in range(1, 21):
        R = resistance_to_sphere(_binary(depth), 0, depth)
        checked += 1
        if abs(R - (1 - 2.0**-depth)) > 1e-10:
            failures += 1
            notes.append(f"binary {depth}: {R!r}")
    rng = seed.generator()
    for j in range(fixtures):
        t = random_recursive_tree(int(rng.integers(2, 51)), rng)
        v = int(rng.integers(0, t.n))
        _, lev, _ = ball_arrays(t, v, t.n)
        reach = int(lev.max())
        if reach == 0:
            continue
        n = int(rng.integers(1, reach + 1))
        a = resistance_to_sphere(t, v, n)
        b = resistance_linear_system(t, v, n)
        checked += 1
        if abs(a - b) > 1e-10:
            failures += 1
            notes.append(f"fixture {j}: {a!r} vs {b!r}")
    return BatteryReport("resistance", failures == 0, checked, failures, "; ".join(notes[:5]))


def random_point_set(rng: np.random.Generator, d: int = 4, max_size: int = 500, spread: int = 200) -> np.ndarray:
    """Uniform or clustered random subsets of [0, spread]^d."""
    size = int(rng.integers(1, max_size + 1))
    if rng.random() < 0.5:
        return rng.integers(0, spread + 1, size=(size, d))
    k = int(rng.integers(1, 6))
    centers = rng.integers(0, spread + 1, size=(k, d))
    scale = int(rng.integers(1, 20))
    pts = centers[rng.integers(0, k, size=size)] + rng.integers(-scale, scale + 1, size=(size, d))
    return np.clip(pts, 0, spread)


def check_covering(instances: int = 50, radii=(2, 5, 11), d: int = 4, seed: RngSeed = RngSeed(505), **_) -> BatteryReport:
    rng = seed.generator()
    checked = failures = 0
    example = None
    for j in range(instances):
        S = random_point_set(rng, d)
        for r in radii:
            centers = greedy_cover(S, r)
            inner, outer, total = cover_sums(S, centers, r)
            cs = np.array(centers)
            gaps = np.abs(cs[:, None, :] - cs[None, :, :]).max(axis=2)
            np.fill_diagonal(gaps, 10**9)
            ok = inner >= 3.0**-d * total and outer <= 15.0**d * inner and gaps.min() > 4 * r
            checked += 1
            if not ok:
                failures += 1
                if example is None:
                    example = f"r={r}\n" + "\n".join(" ".join(map(str, p)) for p in S.tolist())
    return BatteryReport("covering", failures == 0, checked, failures, f"radii {list(radii)}", example)


def _leq_exact(R: float, lev, bpar, n, N: int, k: int) -> bool:
    """C_eff <= N / k, i.e. k <= N R, rechecking near-ties exactly."""
    if k < N * R * (1 - 1e-9):
        return True
    if k > N * R * (1 + 1e-9):
        return False
    return Fraction(k) <= N * _sphere_resistance_exact(lev, bpar, n)


def check_conductance(trees: int = 100, L: int = 24, n_max: int = 32, d: int = 4, seed: RngSeed = RngSeed(606), **_) -> BatteryReport:
    checked = failures = 0
    example = None
    for j in range(trees):
        tree = wired_box_ust(d, L, seed.child(j))
        v = tree.origin
        rows = resistance_profile(tree, v, n_max)
        verts, lev, bpar = ball_arrays(tree, v, n_max)
        for n, k, N, R in rows:
            checked += 1
            ok = R <= n
            if ok:
                if k <= N * R * (1 - 1e-9):
                    pass
                else:
                    keep = lev <= n
                    ok = _leq_exact(R, lev[keep], bpar[keep], n, N, k)
            if not ok:
                failures += 1
                if example is None:
                    example = f"tree {j} n={n} k={k} N={N} R={R!r}"
    return BatteryReport("conductance", failures == 0, checked, failures, f"{trees} trees, L={L}, n <= {n_max}", example)


def check_weighted_distance(
    trees: int = 20, pairs: int = 10_000, L: int = 16, d: int = 4, r_max: int = 64, seed: RngSeed = RngSeed(707), **_
) -> BatteryReport:
    checked = failures = 0
    example = None
    for j in range(trees):
        tree = wired_box_ust(d, L, seed.child(j, 0))
        heights = subtree_heights(tree)
        depths = tree.depths()
        rng = seed.child(j, 1).generator()
        us = rng.integers(0, tree.n_lattice, size=pairs)
        vs = rng.integers(0, tree.n_lattice, size=pairs)
        rs = rng.integers(1, r_max + 1, size=pairs)
        for r in np.unique(rs):
            sel = rs == r
            dt, dw = pair_distances(tree, omega_r(tree, int(r), heights), us[sel], vs[sel], depths)
            bad = dt > 4 * r + 4 * dw
            checked += int(sel.sum())
            failures += int(bad.sum())
            if bad.any() and example is None:
                i = int(np.flatnonzero(bad)[0])
                example = f"tree {j} u={us[sel][i]} v={vs[sel][i]} r={r} d_T={dt[i]} d_w={dw[i]}"
    return BatteryReport("weighted_distance", failures == 0, checked, failures, f"{trees} trees, L={L}", example)


BATTERIES = {
    "wilson": check_wilson,
    "loop_erasure": check_loop_erasure,
    "cut_times": check_cut_times,
    "resistance": check_resistance,
    "covering": check_covering,
    "conductance": check_conductance,
    "weighted_distance": check_weighted_distance,
}

QUICK = {
    "wilson": {"samples": 30_000},
    "loop_erasure": {"walks": 100},
    "cut_times": {"walks": 50},
    "resistance": {},
    "covering": {"instances": 10},
    "conductance": {"trees": 3, "L": 12, "n_max": 16},
    "weighted_distance": {"trees": 3, "pairs": 2000, "L": 8},
}


def oracle_check(suites=SUITES, mutant: str | None = None, quick: bool = False, **overrides) -> dict[str, BatteryReport]:
    """Run the named batteries; ``mutant`` swaps in a deliberately broken component."""
    unknown = [s for s in suites if s not in BATTERIES]
    if unknown:
        raise ValueError(f"unknown batteries {unknown}")
    inject = MUTANTS[mutant] if mutant else {}
    out = {}
    for name in suites:
        kwargs = dict(QUICK.get(name, {})) if quick else {}
        kwargs.update(overrides.get(name, {}))
        kwargs.update(inject)
        out[name] = BATTERIES[name](**kwargs)
    return out
