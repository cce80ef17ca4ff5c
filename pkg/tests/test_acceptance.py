"""One test per acceptance criterion; each prints a PASS/FAIL line at the required tolerance.

Criteria 4, 5 and 9 read the analysis of a desk-scale run.  The directory is
taken from TSCCMC_DESK_OUT, falling back to the copy kept in results/desk.
"""

import csv
import json
import os
import time
from decimal import Decimal, getcontext
from pathlib import Path

import numpy as np
import pytest

from conftest import record_criterion
from oracles import histogram_comparison, oracle_comparison
from tsccmc.analysis import CrossingEstimate, XiCurve, bootstrap, build_phase_boundary, find_crossing, \
    intersect_nishimori
from tsccmc.cli import expand_configs, run_batch
from tsccmc.model import nishimori_p, nishimori_temperature, sample_disorder, verify_gauge_fixing

DESK = Path(os.environ.get("TSCCMC_DESK_OUT", Path(__file__).resolve().parents[1] / "results" / "desk"))


def test_criterion_1_exact_oracle(small):
    start = time.perf_counter()
    temps = (nishimori_temperature(small.disorder.p), 1.7, 2.4)
    res, rows = oracle_comparison(small, temps, b=13, seed=3, n_sigma=3.0)
    bad = [r for r in rows if not r[-1]]
    worst = max(abs(r[2] - r[4]) / r[3] if r[3] > 0 else 0.0 for r in rows)
    elapsed = time.perf_counter() - start
    ok = res.status == "done" and not bad and elapsed < 600
    detail = (f"{len(rows)} comparisons at T = {', '.join(f'{t:.4f}' for t in temps)} on 20 free spins, "
              f"worst deviation {worst:.2f} sigma, {elapsed:.0f} s")
    assert record_criterion(1, ok, detail), bad


def test_criterion_2_gauge_fixing(tiny):
    reports = [verify_gauge_fixing(tiny.lat, sample_disorder(tiny.lat, 0.5, seed)) for seed in range(6)]
    ok = all(r.equivalent for r in reports)
    detail = (f"{sum(r.equivalent for r in reports)}/6 realizations match with degeneracy factor "
              f"2^{tiny.lat.n_triangles}, {sum(r.n_levels for r in reports)} energy levels compared")
    assert record_criterion(2, ok, detail), [r.first_mismatch for r in reports]


def test_criterion_3_detailed_balance(tiny):
    beta = 1.0 / nishimori_temperature(0.3)
    emp, err, exact = histogram_comparison(tiny, beta, 10 ** 7, seed=21)
    z = np.abs(emp - exact) / err
    ok = bool(np.all(z <= 4.0))
    detail = f"{len(exact)} states over 10^7 sweeps at beta = {beta:.4f}, max deviation {z.max():.2f} sigma"
    assert record_criterion(3, ok, detail)


def _crossing(p):
    path = DESK / "analysis" / "summary.json"
    if not path.exists():
        pytest.skip(f"no desk-scale analysis at {path}")
    summary = json.loads(path.read_text())
    for c in summary["crossings"]:
        if abs(c["p"] - p) < 1e-9:
            return c
    return None


def _check_crossing(number, p, target, tol):
    c = _crossing(p)
    if c is None or c["T_c"] is None:
        ok, detail = False, f"no crossing estimate at p = {p}"
    else:
        # a marginal crossing still yields an estimate; its status and replicate fraction are printed
        ok = c["status"] in ("crossing", "marginal") and abs(c["T_c"] - target) <= tol
        detail = (f"T_c({p}) = {c['T_c']:.4f} +- {c['sigma']:.4f} ({c['status']}, "
                  f"{c['fraction']:.0%} of replicates cross), target {target} +- {tol}")
    assert record_criterion(number, ok, detail)


def test_criterion_4_pure_transition():
    _check_crossing(4, 0.0, 1.65, 0.05)


def test_criterion_5_disordered_crossing():
    _check_crossing(5, 0.048, 1.251, 0.06)


def _nishimori_reference(p):
    getcontext().prec = 50
    p = Decimal(p)
    return float(Decimal(4) / (3 * (1 - p) / p).ln())


def test_criterion_6_nishimori():
    ps = np.linspace(1e-4, 0.7, 400)
    round_trip = max(abs(nishimori_p(nishimori_temperature(p)) - p) for p in ps)
    refs = {p: _nishimori_reference(p) for p in (0.055, 0.048)}
    exact = max(abs(nishimori_temperature(p) - r) for p, r in refs.items())
    quoted = abs(refs[0.055] - 1.0146) < 1e-4 and abs(refs[0.048] - 0.9789) < 1e-4
    ok = round_trip < 1e-12 and exact < 1e-12 and quoted
    detail = (f"round trip {round_trip:.1e}, T_N(0.055) = {refs[0.055]:.6f}, T_N(0.048) = {refs[0.048]:.6f}, "
              f"deviation from 50-digit reference {exact:.1e}")
    assert record_criterion(6, ok, detail)


def test_criterion_7_synthetic_analysis():
    T = np.linspace(1.0, 2.0, 21)
    t_cross = 1.4321
    curves = [XiCurve(L, T, 0.6 - s * (T - t_cross), np.zeros(len(T))) for L, s in ((9, 0.2), (12, 0.5), (18, 0.9))]
    est = find_crossing(curves, p=0.0, n_resample=20)
    crossing_err = abs(est.T_c - t_cross)

    p_c = 0.0537
    knots = (0.04, 0.05, 0.06, 0.07)
    boundary = build_phase_boundary([CrossingEstimate(p, nishimori_temperature(p_c) - 8.0 * (p - p_c), 0.0, "crossing")
                                     for p in knots])
    threshold_err = abs(intersect_nishimori(boundary, n_resample=10).p_c - p_c)

    sigma = bootstrap(np.full(40, 0.37)).sigma
    ok = crossing_err < 1e-6 and threshold_err < 1e-3 and sigma == 0.0
    detail = f"crossing error {crossing_err:.1e}, threshold error {threshold_err:.1e}, constant-input sigma {sigma}"
    assert record_criterion(7, ok, detail)


def _tree(root: Path) -> dict:
    return {str(f.relative_to(root)): f.read_bytes() for f in sorted(root.rglob("*")) if f.is_file()}


def test_criterion_8_reproducibility(tmp_path):
    configs = expand_configs({"p": [0.0, 0.05], "L": 3, "n_samples": 2, "b": 6, "T_min": 1.2, "T_max": 2.0,
                              "N_T": 3, "seed": 5, "checkpoint_every": 16})
    run_batch(configs, tmp_path / "a")
    run_batch(configs, tmp_path / "b")
    run_batch(configs, tmp_path / "c", workers=2)
    run_batch(configs, tmp_path / "d", stop_after=40)
    run_batch(configs, tmp_path / "d", resume=True)
    ref = _tree(tmp_path / "a")
    same = {name: _tree(tmp_path / name) == ref for name in ("b", "c", "d")}
    ok = all(same.values()) and len(ref) > 0
    detail = (f"{len(ref)} files; rerun {'identical' if same['b'] else 'DIFFERS'}, two workers "
              f"{'identical' if same['c'] else 'DIFFERS'}, interrupt/resume {'identical' if same['d'] else 'DIFFERS'}")
    assert record_criterion(8, ok, detail)


def test_criterion_9_sensitivity_report():
    path = DESK / "analysis" / "sensitivity.csv"
    if not path.exists():
        pytest.skip(f"no sensitivity report at {path}")
    rows = [r for r in csv.DictReader(path.open()) if abs(float(r["p"])) < 1e-9]
    parts = [f"{r['sublattice']}: {float(r['difference']):+.4f} (sigma {float(r['sigma']):.4f})" for r in rows]
    within = all(r["within_errors"] == "True" for r in rows)
    # non-gating: the report exists and states its outcome either way
    record_criterion(9, len(rows) == 3,
                     f"per-sublattice minus averaged T_c(0): {'; '.join(parts)}; "
                     f"{'all within errors' if within else 'NOT all within errors'}")
    assert len(rows) == 3
