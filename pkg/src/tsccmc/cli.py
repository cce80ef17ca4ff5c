"""Batch orchestration: presets, deterministic runs across workers, analysis reports.

Output layout under ``--out``::

    manifest.json                      config snapshot, per-sample status, file hashes
    p0.0480_L12/sample_00007.json      one file per disorder sample
    p0.0480_L12/observables.csv        per-sample thermal means, one row per (sample, T)
    p0.0480_L12/blocks.csv             the same per measurement block
    p0.0480_L12/samples.csv            status of every sample in the cell
    analysis/                          written by ``analyze``
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import MISSING, asdict, dataclass, fields, replace
from pathlib import Path

import click
import numpy as np

from . import __version__
from .analysis import (
    DisorderEnsemble,
    build_phase_boundary,
    ensemble_equilibration,
    find_crossing,
    intersect_nishimori,
    nishimori_T,
    scaling_collapse,
    xi_over_L_curve,
)
from .engine import EngineConfig, SampleRun, SamplerModel, TemperatureLadder
from .lattice import COLORS, build_lattice, dumps, fingerprint
from .model import compile_interactions, sample_disorder
from .observables import record_table

log = logging.getLogger(__name__)

N_BLOCKS = 16
INTERPRETATION = ("t_eq = 2^b counts equilibration sweeps only; an equal number of "
                  "measurement sweeps follows the point where equilibration was accepted")


class ConfigError(ValueError):
    pass


# --- configuration ------------------------------------------------------------

@dataclass(frozen=True)
class RunConfig:
    p: float
    L: int
    n_samples: int
    b: int
    T_min: float
    T_max: float
    N_T: int
    seed: int = 0
    interval: int = 4
    cap_extra: int = 3
    checkpoint_every: int | None = None
    workers: int = 1
    out: str = "runs"

    def violations(self) -> list[str]:
        out = []
        if not 0.0 <= self.p < 0.75:
            out.append(f"p={self.p} outside [0, 0.75)")
        if self.L < 3 or self.L % 3:
            out.append(f"L={self.L} must be a positive multiple of 3")
        if self.n_samples < 1:
            out.append("n_samples must be >= 1")
        if self.interval < 1:
            out.append("interval must be >= 1")
        if 2 ** self.b < 2 * self.interval:
            out.append(f"b={self.b} gives fewer than two measurement intervals")
        if not 0 < self.T_min <= self.T_max:
            out.append(f"need 0 < T_min <= T_max, got {self.T_min}, {self.T_max}")
        if self.N_T < 1 or (self.N_T == 1 and self.T_min != self.T_max) or (self.N_T > 1 and self.T_min == self.T_max):
            out.append(f"N_T={self.N_T} inconsistent with T range [{self.T_min}, {self.T_max}]")
        if self.seed < 0:
            out.append("seed must be non-negative")
        if self.cap_extra < 0:
            out.append("cap_extra must be >= 0")
        if self.checkpoint_every is not None and self.checkpoint_every < 1:
            out.append("checkpoint_every must be positive")
        if self.workers < 1:
            out.append("workers must be >= 1")
        return out

    @property
    def t_eq(self) -> int:
        return 2 ** self.b

    @property
    def cell(self) -> str:
        return f"p{self.p:.4f}_L{self.L}"

    def estimated_sweeps(self) -> int:
        """Rung-sweeps of the nominal run: samples x (equilibration + measurement) x rungs."""
        return self.n_samples * 2 * self.t_eq * self.N_T

    def snapshot(self) -> dict:
        d = asdict(self)
        d.pop("workers")
        d.pop("out")
        return d


_FIELDS = {f.name: f for f in fields(RunConfig)}
_INT_FIELDS = {"L", "n_samples", "b", "N_T", "seed", "interval", "cap_extra", "workers"}
_FLOAT_FIELDS = {"p", "T_min", "T_max"}


def _coerce(key, value):
    if key in _INT_FIELDS:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key} must be an integer, got {value!r}")
        return value
    if key in _FLOAT_FIELDS:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key} must be a number, got {value!r}")
        return float(value)
    if key == "checkpoint_every":
        if value in (None, 0):
            return None
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"checkpoint_every must be an integer, got {value!r}")
        return value
    if key == "out":
        return str(value)
    raise ConfigError(f"unknown key {key!r}")


def expand_configs(table: dict) -> list[RunConfig]:
    """Flat key-value table (``p`` and ``L`` may be lists) -> validated configs."""
    unknown = sorted(set(table) - set(_FIELDS))
    if unknown:
        raise ConfigError(f"unknown keys {unknown}; allowed: {sorted(_FIELDS)}")
    missing = sorted(k for k, f in _FIELDS.items() if k not in table and f.default is MISSING)
    if missing:
        raise ConfigError(f"missing keys {missing}")
    ps = table["p"] if isinstance(table["p"], list) else [table["p"]]
    Ls = table["L"] if isinstance(table["L"], list) else [table["L"]]
    base = {k: v for k, v in table.items() if k not in ("p", "L")}
    out = []
    for p in ps:
        for L in Ls:
            kw = {k: _coerce(k, v) for k, v in {**base, "p": p, "L": L}.items()}
            cfg = RunConfig(**kw)
            bad = cfg.violations()
            if bad:
                raise ConfigError(f"{cfg.cell}: " + "; ".join(bad))
            out.append(cfg)
    return out


def load_config(path) -> list[RunConfig]:
    """TOML file: top-level keys, optionally with ``[[run]]`` tables overriding them."""
    import tomli

    with open(path, "rb") as fh:
        data = tomli.load(fh)
    runs = data.pop("run", None)
    if runs is None:
        return expand_configs(data)
    if not isinstance(runs, list):
        raise ConfigError("'run' must be an array of tables ([[run]])")
    out = []
    for i, r in enumerate(runs):
        if not isinstance(r, dict):
            raise ConfigError(f"run #{i} is not a table")
        out.extend(expand_configs({**data, **r}))
    return out


# --- presets --------------------------------------------------------------------

# p range (chosen p values), rows of (sizes, N_sa, b, T_min, T_max, N_T)
TABLE_I = {
    "table1-low-p": ((0.0, 0.01, 0.02), (
        ((9, 12), 3200, 17, 1.40, 2.50, 24),
        ((18,), 1600, 18, 1.40, 2.50, 24),
        ((24,), 400, 19, 1.40, 2.50, 28))),
    "table1-mid-p": ((0.03, 0.035, 0.04), (
        ((9, 12), 4800, 18, 1.25, 2.40, 28),
        ((18,), 2400, 19, 1.25, 2.40, 28),
        ((24,), 800, 20, 1.25, 2.40, 32))),
    "table1-high-p": ((0.045, 0.048, 0.05, 0.052, 0.055, 0.058, 0.06), (
        ((9, 12), 9600, 19, 0.9, 2.20, 32),
        ((18,), 4800, 21, 0.9, 2.20, 36),
        ((24,), 2400, 24, 0.9, 2.20, 48))),
}

DESK_SCALE = (
    # pure system: one sample, thermal errors from measurement blocks
    dict(p=0.0, L=9, n_samples=1, b=14, T_min=1.45, T_max=1.95, N_T=16),
    dict(p=0.0, L=12, n_samples=1, b=15, T_min=1.45, T_max=1.95, N_T=16),
    dict(p=0.0, L=18, n_samples=1, b=16, T_min=1.45, T_max=1.95, N_T=16),
    # one disordered point with a narrow ladder around the expected crossing
    dict(p=0.048, L=9, n_samples=200, b=13, T_min=1.05, T_max=1.6, N_T=12),
    dict(p=0.048, L=12, n_samples=200, b=13, T_min=1.05, T_max=1.6, N_T=12),
)

PRESET_DESCRIPTIONS = {
    "table1-low-p": "Table I rows for p in 0.000-0.020 (run at p = 0, 0.01, 0.02); cluster scale",
    "table1-mid-p": "Table I rows for p in 0.030-0.040 (run at p = 0.03, 0.035, 0.04); cluster scale",
    "table1-high-p": "Table I rows for p in 0.045-0.060 (run at p = 0.045 ... 0.06); cluster scale",
    "desk-scale": ("Reduced run for one workstation: p = 0 at L = 9, 12, 18 with a single sample and "
                   "b = 14-16, plus p = 0.048 at L = 9, 12 with 200 samples and b = 13 on a narrowed "
                   "ladder.  Sample counts and b are far below Table I (<= 1% of its sweeps)."),
}


def preset_names() -> list[str]:
    return list(PRESET_DESCRIPTIONS)


def preset(name: str, seed: int = 0) -> list[RunConfig]:
    if name in TABLE_I:
        ps, rows = TABLE_I[name]
        return [RunConfig(p=p, L=L, n_samples=n, b=b, T_min=t0, T_max=t1, N_T=nt, seed=seed)
                for p in ps for sizes, n, b, t0, t1, nt in rows for L in sizes]
    if name == "desk-scale":
        return [RunConfig(seed=seed, **row) for row in DESK_SCALE]
    raise ConfigError(f"unknown preset {name!r}; choose from {preset_names()}")


def table1_counterpart(cfg: RunConfig) -> RunConfig:
    """The Table I configuration covering the same p range and size."""
    name = "table1-low-p" if cfg.p <= 0.025 else "table1-mid-p" if cfg.p <= 0.0425 else "table1-high-p"
    for sizes, n, b, t0, t1, nt in TABLE_I[name][1]:
        if cfg.L in sizes:
            return RunConfig(p=cfg.p, L=cfg.L, n_samples=n, b=b, T_min=t0, T_max=t1, N_T=nt)
    raise ConfigError(f"no Table I row for L={cfg.L}")


# --- seeds and files ------------------------------------------------------------

def sample_seed(master: int, p: float, L: int, index: int, purpose: str) -> int:
    """Stable 63-bit seed from (master seed, p, L, sample index, purpose)."""
    text = f"{int(master)}|{p:.10f}|{int(L)}|{int(index)}|{purpose}"
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:8], "little") >> 1


def _sha256(path) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def _write_atomic(path, data: bytes) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def _json_bytes(obj) -> bytes:
    return (json.dumps(obj, sort_keys=True, indent=1) + "\n").encode()


def _blocks(x: np.ndarray, n_blocks: int) -> np.ndarray:
    n = min(n_blocks, len(x))
    edges = np.linspace(0, len(x), n + 1).astype(int)
    return np.stack([x[a:b].mean(axis=0) for a, b in zip(edges[:-1], edges[1:])])


def sample_payload(cfg: RunConfig, index: int, result, seeds: dict) -> dict:
    out = {
        "p": cfg.p, "L": cfg.L, "index": index, "seeds": seeds,
        "status": result.status, "t_eq": result.t_eq, "sweeps": result.sweeps,
        "b": cfg.b, "interval": cfg.interval,
        "T": list(map(float, result.series.temperatures)),
        "swap_rates": [None if not np.isfinite(x) else float(x) for x in result.swap_rates],
        "acceptance": list(map(float, result.acceptance)),
        "bins": [[int(b), list(map(float, m))] for b, m in result.bins],
        "n_records": len(result.series),
    }
    if result.status == "done" and len(result.series):
        s = result.series
        tab = record_table(s)
        sizes = np.maximum(s.sizes, 1)
        out.update({
            "E": tab["E"].tolist(), "m2": tab["m2"].tolist(),
            "chi0": tab["chi0"].tolist(), "chik": tab["chik"].tolist(),
            "chi0_blocks": (_blocks(np.abs(s.M) ** 2, N_BLOCKS) / sizes).tolist(),
            "chik_blocks": (_blocks(np.abs(s.F) ** 2, N_BLOCKS) / sizes).tolist(),
        })
    return out


# --- workers --------------------------------------------------------------------

_MODELS: dict = {}


def _model(L: int):
    if L not in _MODELS:
        lat = build_lattice(L)
        _MODELS[L] = (lat, SamplerModel.build(lat, compile_interactions(lat)))
    return _MODELS[L]


def run_one(cfg: RunConfig, index: int, out_dir, resume: bool = False, stop_after: int | None = None) -> dict:
    """Simulate one disorder sample; returns its manifest entry."""
    cell = Path(out_dir) / cfg.cell
    cell.mkdir(parents=True, exist_ok=True)
    name = f"sample_{index:05d}"
    ckpt = cell / f"{name}.ckpt"
    lat, model = _model(cfg.L)
    seeds = {"disorder": sample_seed(cfg.seed, cfg.p, cfg.L, index, "disorder"),
             "mc": sample_seed(cfg.seed, cfg.p, cfg.L, index, "mc")}
    engine_cfg = EngineConfig(b=cfg.b, interval=cfg.interval, cap_extra=cfg.cap_extra,
                              checkpoint_every=cfg.checkpoint_every)
    if resume and ckpt.exists():
        run = SampleRun.restore(ckpt, model)
    else:
        disorder = sample_disorder(lat, cfg.p, seed=seeds["disorder"])
        ladder = TemperatureLadder(cfg.T_min, cfg.T_max, cfg.N_T)
        run = SampleRun(model, disorder, ladder, engine_cfg, seeds["mc"])
    use_ckpt = ckpt if (cfg.checkpoint_every or stop_after is not None) else None
    result = run.run(stop_at=stop_after, checkpoint_path=use_ckpt)
    if result.status == "interrupted":
        return {"status": "pending", "checkpoint": ckpt.name, "sweeps": result.sweeps}
    path = cell / f"{name}.json"
    _write_atomic(path, _json_bytes(sample_payload(cfg, index, result, seeds)))
    if ckpt.exists():
        ckpt.unlink()
    return {"status": result.status, "file": path.name, "sha256": _sha256(path)}


def _task(args):
    cfg, index, out_dir, resume, stop_after = args
    try:
        return cfg.cell, index, run_one(cfg, index, out_dir, resume, stop_after)
    except OSError as exc:
        return cfg.cell, index, {"status": "failed", "error": f"{type(exc).__name__}: {exc}"}


# --- batch ----------------------------------------------------------------------

def _load_manifest(out: Path) -> dict:
    path = out / "manifest.json"
    if path.exists():
        with open(path) as fh:
            return json.load(fh)
    return {}


def _save_manifest(out: Path, manifest: dict) -> None:
    _write_atomic(out / "manifest.json", _json_bytes(manifest))


def _completed(out: Path, cell: str, entry: dict | None) -> bool:
    if not entry or entry.get("status") not in ("done", "unequilibrated"):
        return False
    path = out / cell / entry["file"]
    return path.exists() and _sha256(path) == entry["sha256"]


@dataclass
class BatchResult:
    manifest: dict
    simulated: int
    failed: int


def run_batch(configs, out, workers: int = 1, resume: bool = False, stop_after: int | None = None) -> BatchResult:
    """Run every (config, sample) cell; completed samples recorded in the manifest are skipped."""
    configs = list(configs)
    problems = [f"{c.cell}: {v}" for c in configs for v in c.violations()]
    cells = [c.cell for c in configs]
    if len(set(cells)) != len(cells):
        problems.append("duplicate (p, L) cells in batch")
    if problems:
        raise ConfigError("; ".join(problems))
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = _load_manifest(out)
    snap = {c.cell: c.snapshot() for c in configs}
    for cell, s in snap.items():
        old = manifest.get("cells", {}).get(cell, {}).get("config")
        if old is not None and old != s:
            raise ConfigError(f"{cell}: configuration differs from the one recorded in {out / 'manifest.json'}")
    manifest.setdefault("cells", {})
    manifest.update({"format": 1, "code_version": __version__, "interpretation": INTERPRETATION})
    for c in configs:
        entry = manifest["cells"].setdefault(c.cell, {"config": snap[c.cell], "samples": {}})
        entry["config"] = snap[c.cell]
        for i in range(c.n_samples):
            entry["samples"].setdefault(str(i), {"status": "pending"})

    tasks = []
    for c in configs:
        for i in range(c.n_samples):
            if not _completed(out, c.cell, manifest["cells"][c.cell]["samples"].get(str(i))):
                if not resume:
                    stale = out / c.cell / f"sample_{i:05d}.ckpt"
                    if stale.exists():
                        stale.unlink()
                tasks.append((c, i, str(out), resume, stop_after))
    _save_manifest(out, manifest)

    failed = 0

    def record(cell, i, entry):
        nonlocal failed
        manifest["cells"][cell]["samples"][str(i)] = entry
        failed += entry["status"] == "failed"
        _save_manifest(out, manifest)

    if workers <= 1 or len(tasks) <= 1:
        for t in tasks:
            record(*_task(t))
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_task, t) for t in tasks]
            for fut in as_completed(futures):
                record(*fut.result())

    for c in configs:
        try:
            write_cell_tables(out, c.cell)
            entry = manifest["cells"][c.cell]
            entry["tables"] = {name: _sha256(out / c.cell / name)
                               for name in ("observables.csv", "blocks.csv", "samples.csv")}
        except OSError as exc:
            manifest["cells"][c.cell]["tables_error"] = str(exc)
    _save_manifest(out, manifest)
    return BatchResult(manifest, len(tasks), failed)


# --- columnar tables ----------------------------------------------------------

OBS_COLUMNS = ["p", "L", "T", "sample", "chi0", "chik", "E", "m2_A", "m2_B", "m2_C",
               "chi0_A", "chi0_B", "chi0_C", "chik_A", "chik_B", "chik_C"]
BLOCK_COLUMNS = ["p", "L", "T", "sample", "block", "chi0_A", "chi0_B", "chi0_C", "chik_A", "chik_B", "chik_C"]


def _read_samples(cell_dir: Path) -> list[dict]:
    out = []
    for path in sorted(cell_dir.glob("sample_*.json")):
        with open(path) as fh:
            out.append(json.load(fh))
    return sorted(out, key=lambda d: d["index"])


def _csv_bytes(header, rows) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue().encode()


def write_cell_tables(out: Path, cell: str) -> None:
    cell_dir = Path(out) / cell
    samples = _read_samples(cell_dir) if cell_dir.exists() else []
    obs, blocks, status = [], [], []
    for s in samples:
        status.append([s["index"], s["status"], s["t_eq"], s["sweeps"]])
        if s["status"] != "done" or "chi0" not in s:
            continue
        for r, T in enumerate(s["T"]):
            c0, ck, m2 = s["chi0"][r], s["chik"][r], s["m2"][r]
            obs.append([repr(s["p"]), s["L"], repr(T), s["index"], repr(float(np.mean(c0))),
                        repr(float(np.mean(ck))), repr(s["E"][r]), *map(repr, m2), *map(repr, c0), *map(repr, ck)])
            for k, (b0, bk) in enumerate(zip(s["chi0_blocks"], s["chik_blocks"])):
                blocks.append([repr(s["p"]), s["L"], repr(T), s["index"], k, *map(repr, b0[r]), *map(repr, bk[r])])
    cell_dir.mkdir(parents=True, exist_ok=True)
    _write_atomic(cell_dir / "observables.csv", _csv_bytes(OBS_COLUMNS, obs))
    _write_atomic(cell_dir / "blocks.csv", _csv_bytes(BLOCK_COLUMNS, blocks))
    _write_atomic(cell_dir / "samples.csv", _csv_bytes(["sample", "status", "t_eq", "sweeps"], status))


def _read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def load_cell(cell_dir) -> DisorderEnsemble | None:
    """Ensemble from a cell's observables.csv; a single sample is split into its measurement blocks."""
    cell_dir = Path(cell_dir)
    rows = _read_csv(cell_dir / "observables.csv")
    if not rows:
        return None
    p, L = float(rows[0]["p"]), int(rows[0]["L"])
    T = np.array(sorted({float(r["T"]) for r in rows}))
    ids = sorted({int(r["sample"]) for r in rows})
    ti = {t: i for i, t in enumerate(T)}
    si = {s: i for i, s in enumerate(ids)}
    chi0 = np.full((len(ids), len(T), 3), np.nan)
    chik = np.full_like(chi0, np.nan)
    for r in rows:
        a, b = si[int(r["sample"])], ti[float(r["T"])]
        for c, P in enumerate(COLORS):
            chi0[a, b, c] = float(r[f"chi0_{P}"])
            chik[a, b, c] = float(r[f"chik_{P}"])
    excluded = 0
    if (cell_dir / "samples.csv").exists():
        excluded = sum(r["status"] == "unequilibrated" for r in _read_csv(cell_dir / "samples.csv"))
    if len(ids) == 1 and (cell_dir / "blocks.csv").exists():
        brows = _read_csv(cell_dir / "blocks.csv")
        nb = len({int(r["block"]) for r in brows})
        if nb >= 2:
            chi0 = np.full((nb, len(T), 3), np.nan)
            chik = np.full_like(chi0, np.nan)
            for r in brows:
                a, b = int(r["block"]), ti[float(r["T"])]
                for c, P in enumerate(COLORS):
                    chi0[a, b, c] = float(r[f"chi0_{P}"])
                    chik[a, b, c] = float(r[f"chik_{P}"])
            ids = list(range(nb))
    return DisorderEnsemble(p=p, L=L, T=T, chi0=chi0, chik=chik, sample_ids=np.array(ids), excluded=excluded)


# --- analysis -------------------------------------------------------------------

def analyze(out, n_resample: int = 500, seed: int = 0, plots: bool = True) -> dict:
    """Crossings per p, phase boundary, threshold, gap report and sensitivity table."""
    out = Path(out)
    dest = out / "analysis"
    dest.mkdir(parents=True, exist_ok=True)
    manifest = _load_manifest(out)
    gaps = []
    for cell, entry in sorted(manifest.get("cells", {}).items()):
        pending = sorted(int(i) for i, s in entry["samples"].items() if s["status"] in ("pending", "failed"))
        if pending:
            gaps.append(f"{cell}: {len(pending)} samples pending or failed")

    by_p: dict[float, list[DisorderEnsemble]] = {}
    for cell_dir in sorted(out.glob("p*_L*")):
        if not (cell_dir / "observables.csv").exists():
            gaps.append(f"{cell_dir.name}: no observable table")
            continue
        ens = load_cell(cell_dir)
        if ens is None:
            gaps.append(f"{cell_dir.name}: no equilibrated samples")
            continue
        by_p.setdefault(ens.p, []).append(ens)

    curve_rows, crossings, sens_rows, equil = [], [], [], {}
    curves_by_p = {}
    for p in sorted(by_p):
        ensembles = sorted(by_p[p], key=lambda e: e.L)
        curves = []
        for ens in ensembles:
            try:
                c = xi_over_L_curve(ens, n_resample=n_resample, seed=seed)
            except ValueError as exc:
                gaps.append(str(exc))
                continue
            curves.append(c)
            for T, v, s in zip(c.T, c.value, c.sigma):
                curve_rows.append([repr(p), c.L, repr(float(T)), repr(float(v)), repr(float(s))])
        curves_by_p[p] = curves
        if len(curves) < 2:
            gaps.append(f"p={p}: only {len(curves)} system size(s) with data; no crossing attempted")
            continue
        try:
            est = find_crossing(curves, p=p, n_resample=n_resample, seed=seed)
        except ValueError as exc:
            gaps.append(f"p={p}: {exc}")
            continue
        if len(curves) >= 3 and est.T_c is not None:
            est.nu = scaling_collapse(curves, est.T_c).nu
        crossings.append(est)
        for P in COLORS:
            try:
                sub = [xi_over_L_curve(e, P=P, n_resample=n_resample, seed=seed) for e in ensembles]
                se = find_crossing(sub, p=p, n_resample=n_resample, seed=seed)
            except ValueError:
                continue
            diff = None if (se.T_c is None or est.T_c is None) else se.T_c - est.T_c
            within = None if diff is None else bool(abs(diff) < math.hypot(se.sigma_Tc, est.sigma_Tc))
            sens_rows.append([repr(p), P, _num(se.T_c), _num(se.sigma_Tc), _num(est.T_c), _num(est.sigma_Tc),
                              _num(diff), within])

    boundary = threshold = None
    if crossings:
        try:
            boundary = build_phase_boundary(crossings)
            threshold = intersect_nishimori(boundary, n_resample=n_resample, seed=seed)
        except ValueError as exc:
            gaps.append(f"threshold: {exc}")

    cross_rows = []
    for e in crossings:
        lp = e.largest_pair
        cross_rows.append([repr(e.p), _num(e.T_c), _num(e.sigma_Tc), e.status, repr(e.fraction),
                           "" if lp is None else f"{lp.sizes[0]}-{lp.sizes[1]}",
                           "" if lp is None else _num(lp.T_c), _num(e.nu)])
    _write_atomic(dest / "curves.csv", _csv_bytes(["p", "L", "T", "xi_over_L", "sigma"], curve_rows))
    _write_atomic(dest / "crossings.csv", _csv_bytes(
        ["p", "T_c", "sigma", "status", "fraction", "largest_pair", "T_c_largest_pair", "nu"], cross_rows))
    _write_atomic(dest / "boundary.csv", _csv_bytes(
        ["p", "T_c", "sigma"],
        [] if boundary is None else [[repr(float(a)), repr(float(b)), repr(float(c))]
                                     for a, b, c in zip(boundary.p, boundary.T_c, boundary.sigma)]))
    _write_atomic(dest / "sensitivity.csv", _csv_bytes(
        ["p", "sublattice", "T_c", "sigma", "T_c_avg", "sigma_avg", "difference", "within_errors"], sens_rows))
    summary = {
        "crossings": [{"p": e.p, "T_c": e.T_c, "sigma": _clean(e.sigma_Tc), "status": e.status,
                       "fraction": e.fraction, "nu": e.nu} for e in crossings],
        "boundary": None if boundary is None else {
            "p": boundary.p.tolist(), "T_c": boundary.T_c.tolist(), "sigma": boundary.sigma.tolist(),
            "disordered_p": list(boundary.disordered_p), "monotone": boundary.monotone},
        "threshold": None if threshold is None else {
            "p_c": threshold.p_c, "sigma": threshold.sigma, "bracket": list(threshold.bracket)},
        "excluded": {f"p{e.p:.4f}_L{e.L}": e.excluded for es in by_p.values() for e in es},
        "gaps": gaps,
    }
    _write_atomic(dest / "summary.json", _json_bytes(summary))
    _write_atomic(dest / "gaps.txt", ("\n".join(gaps) + "\n" if gaps else "no gaps\n").encode())
    if plots:
        _plots(dest, curves_by_p, crossings, boundary, threshold)
    return summary


def _num(x):
    return "" if x is None or (isinstance(x, float) and not math.isfinite(x)) else repr(float(x))


def _clean(x):
    return None if x is None or not math.isfinite(x) else x


def _plots(dest: Path, curves_by_p, crossings, boundary, threshold) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "tsccmc"
    meta = {"Date": None}
    est = {e.p: e for e in crossings}
    for p, curves in curves_by_p.items():
        if not curves:
            continue
        fig, ax = plt.subplots(figsize=(5, 4))
        for c in curves:
            ax.errorbar(c.T, c.value, yerr=c.sigma, marker="o", ms=3, capsize=2, label=f"L = {c.L}")
        e = est.get(p)
        if e is not None and e.T_c is not None:
            ax.axvspan(e.T_c - e.sigma_Tc, e.T_c + e.sigma_Tc, color="0.85")
            ax.axvline(e.T_c, color="0.4", lw=0.8)
        ax.set_xlabel("T")
        ax.set_ylabel(r"$\xi_L / L$")
        ax.set_title(f"p = {p:g}")
        ax.legend()
        fig.tight_layout()
        fig.savefig(dest / f"crossing_p{p:.4f}.svg", metadata=meta)
        plt.close(fig)
    if boundary is not None:
        fig, ax = plt.subplots(figsize=(5, 4))
        ax.errorbar(boundary.p, boundary.T_c, yerr=boundary.sigma, marker="s", color="k", label="T_c(p)")
        ps = np.linspace(1e-4, max(0.07, float(boundary.p.max()) + 0.01), 300)
        ax.plot(ps, [nishimori_T(x) for x in ps], color="tab:blue", label="Nishimori line")
        if threshold is not None:
            ax.axvspan(threshold.p_c - threshold.sigma, threshold.p_c + threshold.sigma, color="tab:red", alpha=0.3)
        ax.set_xlabel("p")
        ax.set_ylabel("T")
        ax.legend()
        fig.tight_layout()
        fig.savefig(dest / "phase_diagram.svg", metadata=meta)
        plt.close(fig)


def report(out) -> str:
    out = Path(out)
    manifest = _load_manifest(out)
    lines = []
    for cell, entry in sorted(manifest.get("cells", {}).items()):
        counts = {}
        for s in entry["samples"].values():
            counts[s["status"]] = counts.get(s["status"], 0) + 1
        lines.append(f"{cell}: " + ", ".join(f"{k} {v}" for k, v in sorted(counts.items())))
    summary_path = out / "analysis" / "summary.json"
    if summary_path.exists():
        with open(summary_path) as fh:
            summary = json.load(fh)
        for c in summary["crossings"]:
            tc = "none" if c["T_c"] is None else f"{c['T_c']:.4f} +- {c['sigma'] or 0:.4f}"
            lines.append(f"p={c['p']:.4f}: T_c {tc} ({c['status']})")
        th = summary["threshold"]
        lines.append("threshold: " + ("not bracketed" if th is None else f"p_c = {th['p_c']:.4f} +- {th['sigma']:.4f}"))
        lines.extend(f"gap: {g}" for g in summary["gaps"])
    return "\n".join(lines)


# --- command line ---------------------------------------------------------------

def _configs_from(config, preset_name, seed) -> list[RunConfig]:
    if bool(config) == bool(preset_name):
        raise click.UsageError("give exactly one of --config or --preset")
    try:
        cfgs = load_config(config) if config else preset(preset_name)
    except ConfigError as exc:
        raise click.UsageError(str(exc))
    if seed is not None:
        cfgs = [replace(c, seed=seed) for c in cfgs]
    return cfgs


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Log progress.")
def main(verbose):
    """Threshold simulations of topological subsystem color codes."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(message)s")


@main.command("generate-lattice")
@click.option("--L", "L", type=int, required=True, help="Linear size (multiple of 3).")
@click.option("--out", type=click.Path(dir_okay=False), help="Write the canonical JSON here.")
def generate_lattice_cmd(L, out):
    """Build, validate and serialize a lattice."""
    try:
        lat = build_lattice(L)
    except ValueError as exc:
        raise click.ClickException(str(exc))
    text = dumps(lat)
    if out:
        _write_atomic(out, text.encode())
    click.echo(f"L={L} qubits={lat.n_qubits} triangles={lat.n_triangles} "
               f"free_spins={lat.n_free_spins} sha256={fingerprint(lat)}")


@main.command("run")
@click.option("--config", type=click.Path(exists=True, dir_okay=False), help="TOML run configuration.")
@click.option("--preset", "preset_name", help="Built-in preset name.")
@click.option("--workers", type=int, default=1, show_default=True)
@click.option("--seed", type=int, default=None, help="Override the master seed.")
@click.option("--out", type=click.Path(file_okay=False), default="runs", show_default=True)
@click.option("--resume", is_flag=True, help="Continue partially finished samples from their checkpoints.")
@click.option("--stop-after", type=int, default=None, hidden=True)
def run_cmd(config, preset_name, workers, seed, out, resume, stop_after):
    """Simulate every (p, L, sample) cell; completed samples are skipped."""
    cfgs = _configs_from(config, preset_name, seed)
    try:
        res = run_batch(cfgs, out, workers=workers, resume=resume, stop_after=stop_after)
    except ConfigError as exc:
        raise click.UsageError(str(exc))
    click.echo(f"simulated {res.simulated} samples ({res.failed} failed) into {out}")
    if res.failed:
        sys.exit(1)


@main.command("analyze")
@click.option("--out", type=click.Path(file_okay=False, exists=True), default="runs", show_default=True)
@click.option("--seed", type=int, default=0, show_default=True, help="Bootstrap seed.")
@click.option("--resamples", type=int, default=500, show_default=True)
def analyze_cmd(out, seed, resamples):
    """Crossings, phase boundary and threshold from a run directory."""
    summary = analyze(out, n_resample=resamples, seed=seed)
    click.echo(json.dumps({k: summary[k] for k in ("crossings", "threshold")}, indent=1))
    for g in summary["gaps"]:
        click.echo(f"gap: {g}")


@main.group("preset")
def preset_group():
    """Inspect built-in run presets."""


@preset_group.command("list")
def preset_list():
    for name in preset_names():
        click.echo(f"{name}: {PRESET_DESCRIPTIONS[name]}")


@preset_group.command("show")
@click.argument("name")
def preset_show(name):
    try:
        cfgs = preset(name)
    except ConfigError as exc:
        raise click.UsageError(str(exc))
    click.echo(PRESET_DESCRIPTIONS[name])
    for c in cfgs:
        click.echo(f"p={c.p:<6g} L={c.L:<3d} N_sa={c.n_samples:<5d} b={c.b:<3d} "
                   f"T=[{c.T_min}, {c.T_max}] N_T={c.N_T}")


@main.command("report")
@click.option("--out", type=click.Path(file_okay=False, exists=True), default="runs", show_default=True)
def report_cmd(out):
    """Sample status per cell and the latest analysis summary."""
    click.echo(report(out))


if __name__ == "__main__":
    main()
