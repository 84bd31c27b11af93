import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ustlab.experiments import (
    ConfigError,
    ResourceGuardError,
    SweepConfig,
    fit_exponents,
    oracle_check,
    run_sweep,
)
from ustlab.experiments.fit import design_condition
from ustlab.experiments.sweep import CSV_COLUMNS, fit_rows, render_csv

WIDE = 2.0 ** np.arange(4, 21)


def test_fit_pure_power():
    f = fit_exponents(WIDE, 5 * WIDE**2)
    assert f.a == pytest.approx(2, abs=1e-6) and abs(f.b) < 1e-6
    assert f.b_identifiable


def test_fit_log_correction():
    y = WIDE**2 / np.log(WIDE) ** (1 / 3)
    f = fit_exponents(WIDE, y)
    assert -0.45 <= f.b <= -0.20
    assert f.a == pytest.approx(2, abs=1e-6)


def test_fit_log_correction_with_noise():
    rng = np.random.default_rng(0)
    y = WIDE**2 / np.log(WIDE) ** (1 / 3) * np.exp(rng.normal(0, 0.002, WIDE.size))
    f = fit_exponents(WIDE, y)
    assert -0.45 <= f.b <= -0.20


def test_fit_constant():
    f = fit_exponents(WIDE, np.full(WIDE.size, 7.0))
    assert abs(f.a) < 1e-9 and abs(f.b) < 1e-8


@pytest.mark.parametrize("grid, flagged", [((4, 20), False), ((4, 12), False), ((6, 12), True), ((4, 7), True)])
def test_collinearity_flag(grid, flagged):
    n = 2.0 ** np.arange(grid[0], grid[1] + 1)
    assert (not fit_exponents(n, n).b_identifiable) == flagged
    assert fit_exponents(n, n).condition == pytest.approx(design_condition(n))


def test_weighting_reduces_weighted_residual():
    rng = np.random.default_rng(1)
    n = 2.0 ** np.arange(4, 14)
    y = n**1.5 * np.exp(rng.normal(0, 0.1, n.size))
    w = rng.uniform(0.1, 10, n.size)
    fw = fit_exponents(n, y, weights=w, model="power")
    fu = fit_exponents(n, y, model="power")
    resid_u = np.sqrt(w) * (np.log(y) - fu.a * np.log(n) - fu.c)
    assert fw.residual_norm <= np.linalg.norm(resid_u) + 1e-12


@given(st.floats(-3, 3), st.floats(-1, 1), st.floats(-5, 5))
def test_fit_recovers_exact_models(a, b, c):
    y = np.exp(a * np.log(WIDE) + b * np.log(np.log(WIDE)) + c)
    f = fit_exponents(WIDE, y)
    assert f.a == pytest.approx(a, abs=1e-6) and f.b == pytest.approx(b, abs=1e-5)


def test_fit_errors():
    with pytest.raises(ValueError):
        fit_exponents([4, 8, 16], [1, 2, 3])
    with pytest.raises(ValueError):
        fit_exponents([2, 4, 8, 16], [1, 2, 3, 4])
    with pytest.raises(ValueError):
        fit_exponents([4, 8, 16, 32], [1, 0, 3, 4])


def test_fit_rows_notes_short_series():
    rows = [{"statistic": "x", "n": n, "estimate": 1.0} for n in (4, 8)]
    assert "note" in fit_rows(rows)[0]


def test_config_precedence(tmp_path):
    f = tmp_path / "c.json"
    f.write_text(json.dumps({"L": 10, "trees": 5, "seed": 3}))
    cfg = SweepConfig.load(f, seed=9)
    assert (cfg.L, cfg.trees, cfg.seed, cfg.d) == (10, 5, 9, 4)
    assert SweepConfig.load().L == SweepConfig().L


def test_config_rejects_bad_input(tmp_path):
    f = tmp_path / "c.json"
    f.write_text(json.dumps({"bogus": 1}))
    with pytest.raises(ConfigError):
        SweepConfig.load(f)
    with pytest.raises(ConfigError):
        SweepConfig.load(n_grid=[8, 4])
    with pytest.raises(ConfigError):
        SweepConfig.load(statistics=["nope"])
    with pytest.raises(ConfigError):
        SweepConfig.load(L=4, ball_offsets=[5])


def test_policy_warning_not_error():
    cfg = SweepConfig(L=8, ball_grid=[4, 8, 16, 32])
    assert any("policy" in w for w in cfg.validate())


def test_memory_guard():
    with pytest.raises(ResourceGuardError):
        SweepConfig(L=128).check_resources()
    SweepConfig(L=32).check_resources()


def test_hash_ignores_output_fields():
    a = SweepConfig(out="a.csv", threads=1)
    b = SweepConfig(out="b.csv", threads=4, format="json")
    assert a.config_hash() == b.config_hash()
    assert a.config_hash() != SweepConfig(seed=1).config_hash()


def small_config(tmp_path, name, **kw):
    return SweepConfig.load(
        d=3, L=6, trees=3, walks=8, seed=5, n_grid=[8, 16, 32, 64], exit_grid=[2, 3, 4, 5],
        ball_grid=[2, 3, 4, 5], ball_offsets=[-1, 0, 1], out=str(tmp_path / name), **kw
    )


def test_sweep_byte_identical(tmp_path):
    run_sweep(small_config(tmp_path, "a.csv"))
    run_sweep(small_config(tmp_path, "b.csv", threads=2))
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert (tmp_path / "a.csv.fits.json").read_bytes() == (tmp_path / "b.csv.fits.json").read_bytes()


def test_sweep_schema(tmp_path):
    rows, fits = run_sweep(small_config(tmp_path, "s.json", format="json"))
    data = json.loads((tmp_path / "s.json").read_text())
    assert data["rows"] == json.loads(json.dumps(rows))
    assert render_csv(rows).splitlines()[0] == ",".join(CSV_COLUMNS)
    assert {f["statistic"] for f in fits} >= {"return", "volume", "exit"}
    for f in fits:
        if "a" in f:
            assert "condition" in f and "b_identifiable" in f


def test_oracles_quick_pass():
    reports = oracle_check(["loop_erasure", "cut_times", "resistance", "covering"], quick=True)
    assert all(r.passed for r in reports.values())


def test_mutant_is_caught():
    reports = oracle_check(["loop_erasure", "cut_times"], mutant="le_off_by_one", quick=True)
    for r in reports.values():
        assert not r.passed and r.counterexample
