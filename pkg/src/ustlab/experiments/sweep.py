"""Config-driven sweeps over tree ensembles with exponent fits."""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path as FsPath

from ..walk_stats import WALK_STATS, EnsembleConfig, EnsembleEstimate, run_ensemble
from .config import SweepConfig
from .fit import fit_exponents

CSV_COLUMNS = (
    "statistic", "d", "L", "n", "estimate", "ci_lo", "ci_hi",
    "trees", "walks", "discard_rate", "seed", "config_hash",
)


def _row(cfg: SweepConfig, e: EnsembleEstimate, h: str) -> dict:
    return {
        "statistic": e.statistic,
        "d": cfg.d,
        "L": cfg.L,
        "n": e.n,
        "estimate": e.estimate,
        "ci_lo": e.ci_lo,
        "ci_hi": e.ci_hi,
        "trees": e.trees,
        "walks": e.walks,
        "discard_rate": e.discard_rate,
        "seed": cfg.seed,
        "config_hash": h,
    }


def fit_rows(rows: list[dict], min_points: int = 4) -> list[dict]:
    """Both models per statistic; statistics with too few positive points get a note instead."""
    out = []
    for stat in dict.fromkeys(r["statistic"] for r in rows):
        pts = [(r["n"], r["estimate"]) for r in rows if r["statistic"] == stat and r["estimate"] > 0 and r["n"] >= 3]
        if len(pts) < min_points:
            out.append({"statistic": stat, "note": f"only {len(pts)} usable points"})
            continue
        n, y = zip(*pts)
        for model in ("power", "loglog"):
            f = fit_exponents(n, y, model=model).as_dict()
            f["statistic"] = stat
            out.append(f)
    return out


def render_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow([repr(r[c]) if isinstance(r[c], float) else r[c] for c in CSV_COLUMNS])
    return buf.getvalue()


def run_sweep(cfg: SweepConfig, write: bool = True) -> tuple[list[dict], list[dict]]:
    """Sample the ensemble, compute every requested statistic, fit, and write.

    Output depends only on the result-relevant config fields, so identical
    (config, seed) runs produce byte-identical files.
    """
    warnings = cfg.validate()
    cfg.check_resources()
    ens = EnsembleConfig(cfg.d, cfg.L, cfg.trees, cfg.walks, cfg.seed, cfg.boundary, cfg.threads, tuple(cfg.ball_offsets))
    stats = tuple(cfg.statistics)
    walk_grid = cfg.n_grid if any(s in WALK_STATS for s in stats) else []
    est = run_ensemble(ens, walk_grid, cfg.exit_grid, cfg.ball_grid, stats)
    h = cfg.config_hash()
    rows = [_row(cfg, e, h) for e in est]
    fits = fit_rows(rows)
    if write:
        write_outputs(cfg, rows, fits, warnings)
    return rows, fits


def write_outputs(cfg: SweepConfig, rows, fits, warnings) -> None:
    out = FsPath(cfg.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    meta = {"config_hash": cfg.config_hash(), "seed": cfg.seed, "fits": fits, "warnings": warnings}
    if cfg.format == "csv":
        out.write_text(render_csv(rows))
        FsPath(str(out) + ".fits.json").write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n")
    else:
        meta["rows"] = rows
        out.write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n")
