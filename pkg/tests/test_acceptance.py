"""Acceptance suite: one test per acceptance criterion, at full size and tolerance.

Every test records a PASS/FAIL line (printed, and repeated in the terminal
summary) before asserting. Run on its own with ``pytest -m acceptance``.
"""

import itertools
import json
import math
import time

import numpy as np
import pytest

from ustlab.capacity import GreenTable, capacity_escape_mc, capacity_variational, lerw_rho, uniform_hit_sum
from ustlab.experiments import SweepConfig, oracle_check, run_sweep
from ustlab.experiments.fit import fit_exponents
from ustlab.lattice import RngSeed, sample_srw
from ustlab.paths import Path, erase_loops
from ustlab.typical_time import (
    EXACT_MAX_K,
    concentration_probe,
    escape_probability,
    escape_probability_mc,
    straight_line,
    t_tilde,
    typical_time_mc,
)
from ustlab.walk_stats import EnsembleConfig, exit_time, line_tree, run_ensemble
from ustlab.wilson import wired_box_ust

pytestmark = pytest.mark.acceptance

RESULTS: list[str] = []


def report(k: int, ok: bool, detail: str, seconds: float | None = None) -> None:
    took = f" [{seconds:.1f}s]" if seconds is not None else ""
    line = f"{'PASS' if ok else 'FAIL'} criterion {k:>2}: {detail}{took}"
    RESULTS.append(line)
    print(line)
    assert ok, line


def battery(k: int, name: str, budget: float) -> None:
    t0 = time.perf_counter()
    r = oracle_check([name])[name]
    dt = time.perf_counter() - t0
    detail = f"{name}: {r.checked} checked, {r.failures} failures; {r.detail}"
    if r.counterexample:
        detail += f"\ncounterexample:\n{r.counterexample}"
    report(k, r.passed and dt <= budget, detail + f" (budget {budget:.0f}s)", dt)


# --- criteria 1-7: exact and oracle batteries --------------------------------


def test_c01_wilson_uniformity():
    battery(1, "wilson", 120)


def test_c02_loop_erasure_equivalence():
    battery(2, "loop_erasure", 10)


def test_c03_cut_time_concatenation():
    battery(3, "cut_times", 10)


def test_c04_tree_resistance():
    battery(4, "resistance", 30)


def test_c05_conductance_geodesic_bound():
    battery(5, "conductance", 600)


def test_c06_weighted_metric():
    battery(6, "weighted_distance", 300)


def test_c07_covering_bullets():
    battery(7, "covering", 60)


# --- criteria 8-10: potential theory ----------------------------------------


def capacity_agreement(sets: int = 20, escape_trials: int = 20000, green_trials: int = 10000, seed: int = 808) -> dict:
    s = RngSeed(seed)
    rng = s.child(0).generator()
    table = GreenTable.build(4, 2, green_trials, 10**6, s.child(1), use_cache=False)
    rows = []
    for j in range(sets):
        size = int(rng.integers(1, 5))
        S = np.unique(rng.integers(0, 3, size=(size, 4)), axis=0)
        esc = capacity_escape_mc(S, escape_trials, seed=s.child(2, j))
        var, _ = capacity_variational(S, table)
        z = abs(esc.value - var.value) / math.hypot(esc.std_error, var.std_error)
        rows.append({"S": S.tolist(), "escape": esc.value, "variational": var.value, "z": z})
    a = capacity_escape_mc([[0, 0, 0, 0]], escape_trials, seed=s.child(3, 0))
    b = capacity_escape_mc([[7, -3, 2, 5]], escape_trials, seed=s.child(3, 1))
    zt = abs(a.value - b.value) / math.hypot(a.std_error, b.std_error)
    return {"sets": rows, "translation": {"origin": a.value, "shifted": b.value, "z": zt}}


def test_c08_capacity_cross_estimators():
    t0 = time.perf_counter()
    out = capacity_agreement()
    dt = time.perf_counter() - t0
    worst = max(r["z"] for r in out["sets"])
    zt = out["translation"]["z"]
    ok = worst <= 3 and zt <= 3 and dt <= 600
    report(8, ok, f"20 sets: max |escape - variational| = {worst:.2f} combined sigma; translation {zt:.2f} sigma", dt)


def hit_sum_ratios(radii=(8, 16, 32), trials_at_8: int = 30000, seed: int = 909) -> dict:
    # hit probabilities from Λ(r) fall like r^-2, so trials grow like r^2 for equal
    # relative precision; the stop radius 2 r sqrt(d) keeps a walk near 16 r^2 steps
    # and its truncation bias is the same fraction of the sum at every r
    s = RngSeed(seed)
    cap = capacity_escape_mc([[0, 0, 0, 0]], 50000, seed=s.child(0))
    out = {}
    for r in radii:
        trials = trials_at_8 * (r // 8) ** 2 if r >= 8 else trials_at_8
        est = uniform_hit_sum([[0, 0, 0, 0]], r, trials, seed=s.child(1, r), cap=cap, stop_factor=2.0)
        out[r] = {"hit_sum": est.value, "ratio": est.extra["ratio"], "ratio_se": est.extra["ratio_se"], "bias": est.bias_bound}
    return out


def test_c09_uniform_hit_sum_scaling():
    t0 = time.perf_counter()
    out = hit_sum_ratios()
    dt = time.perf_counter() - t0
    ratios = [v["ratio"] for v in out.values()]
    spread = max(ratios) / min(ratios)
    detail = ", ".join(f"r={r}: {v['ratio']:.3f}±{v['ratio_se']:.3f}" for r, v in out.items())
    report(9, spread < 2 and dt <= 600, f"ratio {detail}; max/min = {spread:.3f}", dt)


def lerw_rho_medians(ns=(10**4, 10**5, 10**6), walks: int = 200, seed: int = 1010) -> dict:
    out = {}
    for n in ns:
        vals = [lerw_rho(n, RngSeed(seed).child(n, k)) / (n * math.log(n) ** (-1 / 3)) for k in range(walks)]
        out[n] = float(np.median(vals))
    return out


def test_c10_lerw_concentration_trend():
    t0 = time.perf_counter()
    med = lerw_rho_medians()
    dt = time.perf_counter() - t0
    ok = all(0.5 <= m <= 2.0 for m in med.values()) and dt <= 600
    report(10, ok, "median rho_n / (n (log n)^(-1/3)): " + ", ".join(f"n={n}: {m:.3f}" for n, m in med.items()), dt)


# --- criteria 11-12: walks on trees ------------------------------------------


def line_calibration(seed: int = 1111) -> dict:
    taus, rate = exit_time(line_tree(256), 64, 10000, RngSeed(seed))
    grid = [2**k for k in range(4, 11)]
    cfg = EnsembleConfig(d=1, L=400, trees=2, walks=5000, seed=seed, boundary="line")
    est = run_ensemble(cfg, grid, stats=("return", "intrinsic"))
    series = {s: [e.estimate for e in est if e.statistic == s] for s in ("return", "intrinsic")}
    return {
        "tau_ratio": float(taus.mean() / 64**2),
        "exit_discard_rate": rate,
        "return_slope": fit_exponents(grid, series["return"], model="power").a,
        "intrinsic_slope": fit_exponents(grid, series["intrinsic"], model="power").a,
        "walk_discard_rate": est[0].discard_rate,
    }


def test_c11_line_tree_calibration():
    t0 = time.perf_counter()
    c = line_calibration()
    dt = time.perf_counter() - t0
    ok = (
        abs(c["tau_ratio"] - 1) <= 0.05
        and -0.65 <= c["return_slope"] <= -0.35
        and 0.4 <= c["intrinsic_slope"] <= 0.6
        and dt <= 300
    )
    report(
        11, ok,
        f"E tau_64 / 64^2 = {c['tau_ratio']:.4f}; return slope {c['return_slope']:.3f}; "
        f"intrinsic slope {c['intrinsic_slope']:.3f}",
        dt,
    )


WINDOWS = {
    "return": (-0.83, -0.53),
    "intrinsic": (0.25, 0.45),
    "extrinsic": (0.10, 0.25),
    "range": (0.55, 0.80),
    "exit": (2.6, 3.2),
    "volume": (1.8, 2.1),
}


def test_c12_d4_trend_suite(tmp_path):
    cfg = SweepConfig.load(d=4, L=32, trees=50, walks=200, seed=1212, out=str(tmp_path / "sweep.csv"))
    t0 = time.perf_counter()
    rows, fits = run_sweep(cfg)
    dt = time.perf_counter() - t0
    power = {f["statistic"]: f for f in fits if f.get("model") == "power"}
    loglog = {f["statistic"]: f for f in fits if f.get("model") == "loglog"}
    discard = max(r["discard_rate"] for r in rows)
    lines, ok = [], cfg.trees >= 50 and cfg.walks >= 50 and discard < 0.10
    for stat, (lo, hi) in WINDOWS.items():
        a = power[stat]["a"]
        inside = lo <= a <= hi
        ok &= inside
        g = loglog[stat]
        flag = "identifiable" if g["b_identifiable"] else "unidentifiable"
        lines.append(f"  {stat:<10} slope {a:+.3f} in [{lo}, {hi}]: {'yes' if inside else 'NO'}; "
                     f"loglog (a, b) = ({g['a']:+.3f}, {g['b']:+.3f}), cond {g['condition']:.0f}, b {flag}")
    vol_b = loglog["volume"]["b"]
    ok &= vol_b <= 0
    detail = (f"L=32, {cfg.trees} trees, {cfg.walks} walks/tree, discard rate {discard:.4f}; "
              f"volume loglog b = {vol_b:+.3f} (<= 0 required)\n" + "\n".join(lines))
    report(12, ok and dt <= 7200, detail, dt)


# --- criterion 13: typical times ---------------------------------------------


def lerw_path(n: int, seed: int) -> Path:
    w = sample_srw([0, 0, 0, 0], 8 * n, RngSeed(seed))
    e = erase_loops(w).erased
    return Path(e.points[: n + 1])


def typical_time_batteries(seed: int = 1313) -> dict:
    s = RngSeed(seed)
    eta = lerw_path(16, seed)
    esc = []
    for k in range(1, EXACT_MAX_K + 1):
        ex = escape_probability(eta, k, 0, s)
        mc = escape_probability_mc(eta, k, 40000, s.child(k))
        esc.append({"k": k, "exact": ex.value, "mc": mc.value, "z": abs(ex.value - mc.value) / mc.std_error})
    ns = [2**k for k in range(5, 10)]
    tt = [t_tilde(straight_line(n), 400, s.child(100, n))[0] / n for n in ns]
    x = np.log(ns)
    slope = float(np.polyfit(x, tt, 1)[0])
    lower = float(np.polyfit(x[:3], tt[:3], 1)[0])
    upper = float(np.polyfit(x[2:], tt[2:], 1)[0])
    x0, a = [0, 0, 0, 0], [1, 0, 0, 0]
    B = [list(-e) for e in np.eye(4, dtype=int)] + [list(e) for e in np.eye(4, dtype=int)[1:]]
    forced = typical_time_mc(Path([x0, a]), [a], B, 20000, s.child(200))
    shell = np.array([p for p in itertools.product(range(-3, 4), repeat=4) if max(map(abs, p)) == 3])
    g = Path([[0, 0, 0, 0], [1, 0, 0, 0], [1, 1, 0, 0]])
    res = typical_time_mc(g, [[1, 1, 0, 0]], shell, 100000, s.child(300))
    probe = concentration_probe(res, g.length)
    return {
        "esc": esc,
        "straight_line": {"n": ns, "T_over_n": tt, "slope": slope, "lower_slope": lower, "upper_slope": upper},
        "forced_T_hat": forced.T_hat,
        "concentration": {"tail": probe["tail"], "nonincreasing": probe["nonincreasing"], "accepted": res.accepted},
    }


def test_c13_typical_time_batteries():
    t0 = time.perf_counter()
    r = typical_time_batteries()
    dt = time.perf_counter() - t0
    zmax = max(e["z"] for e in r["esc"])
    sl = r["straight_line"]
    lo, hi = sorted((sl["lower_slope"], sl["upper_slope"]))
    stable = lo > 0 and hi <= 2 * lo
    conc = r["concentration"]
    ok = zmax <= 3 and sl["slope"] > 0 and stable and r["forced_T_hat"] == 1.0 and conc["nonincreasing"] and dt <= 900
    detail = (
        f"Esc exact vs MC max {zmax:.2f} sigma; straight-line slope {sl['slope']:.3f} "
        f"(halves {sl['lower_slope']:.3f}, {sl['upper_slope']:.3f}); forced T_hat = {r['forced_T_hat']}; "
        f"tail {[round(t, 4) for t in conc['tail']]} nonincreasing={conc['nonincreasing']}"
    )
    report(13, ok, detail, dt)


# --- criterion 14: determinism -----------------------------------------------


def _dump(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, default=lambda o: o.tolist() if hasattr(o, "tolist") else str(o)).encode()


def artifacts(tmp, tag: str) -> dict[str, bytes]:
    """Output artifacts of every criterion, at reduced size where the full run is long."""
    out = {}
    reports = oracle_check(quick=True)
    out["oracles"] = _dump({k: r.as_dict() for k, r in reports.items()})
    out["capacity"] = _dump(capacity_agreement(sets=3, escape_trials=2000, green_trials=500))
    out["hit_sum"] = _dump(hit_sum_ratios(radii=(4, 8), trials_at_8=500))
    out["lerw_rho"] = _dump(lerw_rho_medians(ns=(10**3, 10**4), walks=10))
    taus, _ = exit_time(line_tree(64), 16, 500, RngSeed(1111))
    out["line"] = taus.tobytes()
    cfg = SweepConfig.load(
        d=4, L=6, trees=3, walks=10, seed=1212, n_grid=[8, 16, 32, 64], exit_grid=[3, 4, 5, 6],
        ball_grid=[3, 4, 5, 6], ball_offsets=[-1, 0, 1], out=str(tmp / f"{tag}.csv"),
    )
    run_sweep(cfg)
    out["sweep_csv"] = (tmp / f"{tag}.csv").read_bytes()
    out["sweep_fits"] = (tmp / f"{tag}.csv.fits.json").read_bytes()
    _, prof = t_tilde(straight_line(32), 100, RngSeed(1313))
    prof.to_csv(tmp / f"{tag}.profile.csv")
    out["profile"] = (tmp / f"{tag}.profile.csv").read_bytes()
    g = Path([[0, 0, 0, 0], [1, 0, 0, 0]])
    B = [[-1, 0, 0, 0], [0, 1, 0, 0], [0, -1, 0, 0]]
    out["typical"] = typical_time_mc(g, [[1, 0, 0, 0]], B, 2000, RngSeed(5)).to_json().encode()
    tree = wired_box_ust(4, 6, RngSeed(14))
    tree.save(tmp / f"{tag}.tree.npz")
    out["tree"] = (tmp / f"{tag}.tree.npz").read_bytes()
    return out


def test_c14_determinism(tmp_path):
    t0 = time.perf_counter()
    first = artifacts(tmp_path, "first")
    second = artifacts(tmp_path, "second")
    dt = time.perf_counter() - t0
    differ = sorted(k for k in first if first[k] != second[k])
    report(14, not differ, f"{len(first)} artifacts byte-identical across reruns" if not differ else f"differ: {differ}", dt)
