"""Disorder averages, bootstrap errors, xi_L/L crossings and the threshold.

Bootstrap replicates resample disorder samples with replacement; every
downstream estimate (crossings, combined T_c) is recomputed on each
replicate so errors propagate through the whole procedure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Callable, NamedTuple

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.optimize import bisect, brentq, minimize_scalar

from .engine import bins_agree
from .model import nishimori_temperature
from .observables import COLORS, correlation_length

N_RESAMPLE = 500
MARGINAL_FRACTION = 0.8


# --- bootstrap --------------------------------------------------------------

class Bootstrap(NamedTuple):
    mean: np.ndarray | float
    sigma: np.ndarray | float
    replicates: np.ndarray


def bootstrap(samples, statistic: Callable = None, n_resample: int = N_RESAMPLE, seed=0) -> Bootstrap:
    """Resample along axis 0 with replacement; mean and spread of ``statistic`` over resamples.

    ``statistic`` maps an array shaped like ``samples`` to a scalar or array
    and defaults to the mean over axis 0.
    """
    samples = np.asarray(samples)
    n = len(samples)
    if n < 2:
        raise ValueError(f"bootstrap needs at least 2 samples, got {n}")
    statistic = statistic or (lambda x: x.mean(axis=0))
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, n, size=(n_resample, n))
    reps = np.array([statistic(samples[i]) for i in idx], dtype=float)
    # spread about the first replicate: same variance, but exactly zero when all replicates agree
    sigma = (reps - reps[:1]).std(axis=0)
    return Bootstrap(_squeeze(reps.mean(axis=0)), _squeeze(sigma), reps)


def _squeeze(x):
    return float(x) if np.ndim(x) == 0 else x


def _seed_for(seed, *keys) -> np.random.SeedSequence:
    words = [int(seed)] + [int(round(k * 1_000_000)) for k in keys]
    return np.random.SeedSequence(words)


# --- disorder ensembles -------------------------------------------------------

@dataclass
class DisorderEnsemble:
    """Per-sample thermal means for one (p, L).

    ``chi0`` and ``chik`` are (N_samples, N_T, 3); NaN marks a missing record.
    """

    p: float
    L: int
    T: np.ndarray
    chi0: np.ndarray
    chik: np.ndarray
    sample_ids: np.ndarray = None
    excluded: int = 0
    E: np.ndarray = None  # (N_samples, N_T)
    m2: np.ndarray = None  # (N_samples, N_T, 3)

    def __post_init__(self):
        self.T = np.asarray(self.T, dtype=float)
        self.chi0 = np.asarray(self.chi0, dtype=float)
        self.chik = np.asarray(self.chik, dtype=float)
        if self.chi0.ndim == 2:
            self.chi0 = self.chi0[..., None]
            self.chik = self.chik[..., None]
        if self.chi0.shape != self.chik.shape or self.chi0.shape[1] != len(self.T):
            raise ValueError(f"inconsistent shapes: T {self.T.shape}, chi0 {self.chi0.shape}, chik {self.chik.shape}")
        if self.sample_ids is None:
            self.sample_ids = np.arange(len(self.chi0))

    @property
    def n_samples(self) -> int:
        return len(self.chi0)

    def counts(self) -> np.ndarray:
        """Samples with data at each temperature."""
        return np.sum(np.all(np.isfinite(self.chi0) & np.isfinite(self.chik), axis=-1), axis=0)

    def select(self, P=None) -> tuple[np.ndarray, np.ndarray]:
        """(chi0, chik) as (N_samples, N_T), averaged over sublattices or for one sublattice."""
        if P is None:
            return self.chi0.mean(axis=-1), self.chik.mean(axis=-1)
        c = COLORS.index(P) if isinstance(P, str) else int(P)
        return self.chi0[..., c], self.chik[..., c]


def _xi_over_L(chi0, chik, L):
    """Ratio-of-averages xi_L / L from (samples, N_T) susceptibility arrays."""
    a0 = np.nanmean(chi0, axis=0)
    ak = np.nanmean(chik, axis=0)
    return correlation_length(a0, ak, L).xi / L


@dataclass
class XiCurve:
    L: int
    T: np.ndarray
    value: np.ndarray
    sigma: np.ndarray
    replicates: np.ndarray | None = None  # (n_resample, N_T)
    flags: np.ndarray | None = None


def xi_over_L_curve(ens: DisorderEnsemble, P=None, n_resample: int = N_RESAMPLE, seed=0) -> XiCurve:
    """Disorder-averaged xi_L/L per temperature with bootstrap errors over samples."""
    counts = ens.counts()
    low = np.flatnonzero(counts < 2)
    if len(low):
        bad = ", ".join(f"T={ens.T[i]:.4g} ({counts[i]} samples)" for i in low)
        raise ValueError(f"p={ens.p}, L={ens.L}: need at least 2 samples at every temperature; deficient: {bad}")
    chi0, chik = ens.select(P)
    a0, ak = np.nanmean(chi0, axis=0), np.nanmean(chik, axis=0)
    cl = correlation_length(a0, ak, ens.L)
    both = np.stack([chi0, chik], axis=1)  # (samples, 2, N_T)
    bs = bootstrap(both, lambda x: _xi_over_L(x[:, 0], x[:, 1], ens.L), n_resample,
                   seed=_seed_for(seed, ens.p, ens.L))
    return XiCurve(ens.L, ens.T.copy(), cl.xi / ens.L, bs.sigma, bs.replicates, cl.status)


# --- crossings ----------------------------------------------------------------

@dataclass
class PairCrossing:
    sizes: tuple
    T_c: float | None
    sigma: float
    fraction: float  # share of bootstrap replicates with a crossing


@dataclass
class CrossingEstimate:
    p: float | None
    T_c: float | None
    sigma_Tc: float
    status: str  # "crossing" | "marginal" | "no-crossing"
    pairs: list = field(default_factory=list)
    largest_pair: PairCrossing | None = None
    fraction: float = 0.0
    nu: float | None = None


def _interp(T, y):
    order = np.argsort(T)
    return PchipInterpolator(np.asarray(T)[order], np.asarray(y)[order], extrapolate=False)


def _roots(T1, y1, T2, y2, lo, hi):
    """Crossings of two curves inside [lo, hi] as (T, slope sign of y_large - y_small)."""
    f1, f2 = _interp(T1, y1), _interp(T2, y2)
    grid = np.unique(np.concatenate([T1, T2, [lo, hi]]))
    grid = grid[(grid >= lo) & (grid <= hi)]
    d = lambda t: float(f2(t) - f1(t))
    vals = np.array([d(t) for t in grid])
    out = []
    for a, b, va, vb in zip(grid[:-1], grid[1:], vals[:-1], vals[1:]):
        if va == 0.0:
            out.append((a, -np.sign(vb) if vb else 0.0))
        elif va * vb < 0:
            out.append((brentq(d, a, b, xtol=1e-14, rtol=1e-15), np.sign(vb - va)))
    if len(vals) and vals[-1] == 0.0:
        out.append((grid[-1], 0.0))
    return out


def _pick(roots, near=None):
    """Prefer crossings where the larger size lies above at low T; closest to ``near`` or highest T."""
    if not roots:
        return None
    proper = [t for t, s in roots if s <= 0] or [t for t, _ in roots]
    if near is not None:
        return min(proper, key=lambda t: abs(t - near))
    return max(proper)


def _replicates(curve: XiCurve, n_resample: int, seed) -> np.ndarray:
    if curve.replicates is not None:
        return np.asarray(curve.replicates)
    # parametric replicates for curves given without sample-level data
    rng = np.random.default_rng(_seed_for(seed, curve.L))
    noise = rng.standard_normal((n_resample, len(curve.T)))
    return curve.value[None] + noise * np.asarray(curve.sigma)[None]


def find_crossing(curves, p: float | None = None, n_resample: int = N_RESAMPLE, seed=0) -> CrossingEstimate:
    """Locate the xi_L/L crossing of two or more sizes.

    Each size pair is interpolated with monotone piecewise-cubic curves and
    the root of their difference found with Brent's method.  Pairs are
    combined by inverse-variance weights; the spread of the combined value
    over bootstrap replicates is the quoted error.  Status is "marginal"
    when fewer than 80% of replicates cross.
    """
    curves = sorted(curves, key=lambda c: c.L)
    if len(curves) < 2:
        raise ValueError("need at least two system sizes")
    if len({c.L for c in curves}) != len(curves):
        raise ValueError("duplicate system sizes")
    lo = max(np.min(c.T) for c in curves)
    hi = min(np.max(c.T) for c in curves)
    if not lo < hi:
        raise ValueError("temperature ranges of the curves do not overlap")
    reps = [_replicates(c, n_resample, seed) for c in curves]
    n_rep = min(len(r) for r in reps)

    pairs, rep_tc = [], []
    for i, j in combinations(range(len(curves)), 2):
        ci, cj = curves[i], curves[j]
        t0 = _pick(_roots(ci.T, ci.value, cj.T, cj.value, lo, hi))
        per_rep = np.full(n_rep, np.nan)
        for b in range(n_rep):
            t = _pick(_roots(ci.T, reps[i][b], cj.T, reps[j][b], lo, hi), near=t0)
            if t is not None:
                per_rep[b] = t
        ok = np.isfinite(per_rep)
        frac = float(ok.mean())
        if t0 is None and ok.any():
            t0 = float(np.median(per_rep[ok]))
        sigma = float(per_rep[ok].std()) if ok.sum() > 1 else 0.0
        pairs.append(PairCrossing((ci.L, cj.L), None if t0 is None else float(t0), sigma, frac))
        rep_tc.append(per_rep)

    found = [k for k, pc in enumerate(pairs) if pc.T_c is not None]
    if not found:
        return CrossingEstimate(p, None, math.nan, "no-crossing", pairs, None, 0.0)
    sig = np.array([pairs[k].sigma for k in found])
    tcs = np.array([pairs[k].T_c for k in found])
    if np.all(sig > 0):
        w = 1.0 / sig ** 2
    else:
        w = (sig == 0).astype(float)
    w = w / w.sum()
    T_c = float(w @ tcs)
    R = np.stack([rep_tc[k] for k in found], axis=1)
    ok = np.all(np.isfinite(R), axis=1)
    combined = R[ok] @ w
    sigma = float(combined.std()) if ok.sum() > 1 else 0.0
    frac = float(ok.mean())
    full_cross = any(
        _pick(_roots(curves[i].T, curves[i].value, curves[j].T, curves[j].value, lo, hi)) is not None
        for i, j in combinations(range(len(curves)), 2))
    status = "crossing" if (full_cross and frac >= MARGINAL_FRACTION) else "marginal"
    if not full_cross and frac == 0.0:
        status = "no-crossing"
    largest = pairs[max(found, key=lambda k: pairs[k].sizes)]
    return CrossingEstimate(p, T_c, sigma, status, pairs, largest, frac)


# --- phase boundary and threshold ------------------------------------------

@dataclass
class PhaseBoundary:
    """Piecewise-linear T_c(p) through the measured knots."""

    p: np.ndarray
    T_c: np.ndarray
    sigma: np.ndarray
    disordered_p: tuple = ()

    @property
    def monotone(self) -> bool:
        return bool(np.all(np.diff(self.T_c) <= 0))

    def __call__(self, p):
        p = np.asarray(p, dtype=float)
        if np.any(p < self.p[0] - 1e-15) or np.any(p > self.p[-1] + 1e-15):
            raise ValueError(f"p outside boundary range [{self.p[0]}, {self.p[-1]}]")
        if len(self.p) == 1:
            return np.full(p.shape, self.T_c[0]) if p.ndim else float(self.T_c[0])
        out = np.interp(p, self.p, self.T_c)
        return out if p.ndim else float(out)

    def band(self, p):
        return np.interp(p, self.p, self.sigma)


def build_phase_boundary(estimates) -> PhaseBoundary:
    """Assemble knots from crossing estimates; no-crossing entries are listed as disordered."""
    estimates = list(estimates)
    ps = [e.p for e in estimates]
    if len(set(ps)) != len(ps):
        dup = sorted({x for x in ps if ps.count(x) > 1})
        raise ValueError(f"duplicate disorder rates in boundary: {dup}")
    knots = sorted((e.p, e.T_c, e.sigma_Tc) for e in estimates if e.T_c is not None)
    disordered = tuple(sorted(e.p for e in estimates if e.T_c is None))
    if not knots:
        raise ValueError("no crossing estimates with a transition temperature")
    p, T, s = (np.array(x, dtype=float) for x in zip(*knots))
    return PhaseBoundary(p, T, s, disordered)


def nishimori_T(p) -> float:
    """Nishimori temperature with the p -> 0 limit T = 0 included."""
    return 0.0 if p == 0 else nishimori_temperature(p)


@dataclass
class ThresholdEstimate:
    p_c: float
    sigma: float
    boundary: PhaseBoundary
    bracket: tuple
    n_used: int


def _threshold(p, T, tol):
    g = np.array([T[i] - nishimori_T(p[i]) for i in range(len(p))])
    for k in range(len(p) - 1):
        if g[k] == 0:
            return p[k], (p[k], p[k])
        if g[k] * g[k + 1] < 0:
            a, b, Ta, Tb = p[k], p[k + 1], T[k], T[k + 1]
            f = lambda x: Ta + (Tb - Ta) * (x - a) / (b - a) - nishimori_T(x)
            return bisect(f, a, b, xtol=tol), (a, b)
    if g[-1] == 0:
        return p[-1], (p[-1], p[-1])
    return None, None


def intersect_nishimori(boundary: PhaseBoundary, n_resample: int = N_RESAMPLE, seed=0,
                        tol: float = 1e-12) -> ThresholdEstimate:
    """Root of T_c(p) = T_N(p) on the piecewise-linear boundary, with knot-bootstrap error."""
    p_c, bracket = _threshold(boundary.p, boundary.T_c, tol)
    if p_c is None:
        raise ValueError("boundary does not bracket threshold: T_c(p) - T_N(p) never changes sign")
    rng = np.random.default_rng(seed)
    vals = []
    for _ in range(n_resample):
        T = boundary.T_c + boundary.sigma * rng.standard_normal(len(boundary.p))
        r, _ = _threshold(boundary.p, T, tol)
        if r is not None:
            vals.append(r)
    sigma = float(np.std(vals)) if len(vals) > 1 else 0.0
    return ThresholdEstimate(float(p_c), sigma, boundary, bracket, len(vals))


# --- scaling collapse ---------------------------------------------------------

@dataclass
class CollapseResult:
    nu: float | None
    residual: float
    status: str  # "ok" | "degenerate" | "failed"


def collapse_residual(curves, T_c: float, nu: float) -> float:
    """Mean squared mismatch between each curve and the others on the scaled axis."""
    xs = [c.L ** (1.0 / nu) * (np.asarray(c.T) - T_c) for c in curves]
    total, count = 0.0, 0
    for i, ci in enumerate(curves):
        oi = np.argsort(xs[i])
        xi, yi = xs[i][oi], np.asarray(ci.value)[oi]
        for j, cj in enumerate(curves):
            if i == j:
                continue
            inside = (xs[j] >= xi[0]) & (xs[j] <= xi[-1])
            if not inside.any():
                continue
            diff = np.asarray(cj.value)[inside] - np.interp(xs[j][inside], xi, yi)
            total += float(diff @ diff)
            count += int(inside.sum())
    return total / count if count else math.inf


def scaling_collapse(curves, T_c: float, nu_bounds=(0.3, 5.0)) -> CollapseResult:
    """Fit nu in xi_L/L ~ X[L^(1/nu) (T - T_c)] by minimizing the collapse residual."""
    curves = sorted(curves, key=lambda c: c.L)
    if len(curves) < 3:
        raise ValueError("scaling collapse needs at least three sizes")
    scale = max(float(np.ptp(np.concatenate([c.value for c in curves]))), 1e-300)
    grid = np.geomspace(*nu_bounds, 25)
    res = np.array([collapse_residual(curves, T_c, nu) for nu in grid])
    if not np.all(np.isfinite(res)):
        return CollapseResult(None, math.inf, "failed")
    # flat, size-independent data collapse equally well for every nu
    if res.max() - res.min() <= 1e-10 * scale ** 2:
        return CollapseResult(None, float(res.min()), "degenerate")
    k = int(np.argmin(res))
    lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, len(grid) - 1)]
    opt = minimize_scalar(lambda lnu: collapse_residual(curves, T_c, math.exp(lnu)),
                          bounds=(math.log(lo), math.log(hi)), method="bounded",
                          options={"xatol": 1e-6})
    if not opt.success:
        return CollapseResult(None, float(res.min()), "failed")
    return CollapseResult(float(math.exp(opt.x)), float(opt.fun), "ok")


# --- ensemble-level equilibration -------------------------------------------

@dataclass
class EnsembleEquilibration:
    equilibrated: bool | None
    bins: list  # (b, mean, error) of disorder averages


def ensemble_equilibration(sample_bins) -> EnsembleEquilibration:
    """Three-bin test on disorder-averaged tracked observables.

    ``sample_bins`` holds, per sample, a list of ``(b, mean vector)``.  Only
    bins present in every sample are used; errors are sample-to-sample.
    """
    sample_bins = [dict((int(b), np.asarray(m, dtype=float)) for b, m in s) for s in sample_bins]
    if len(sample_bins) < 2:
        return EnsembleEquilibration(None, [])
    common = sorted(set.intersection(*(set(s) for s in sample_bins)))
    rows = []
    for b in common:
        x = np.stack([s[b] for s in sample_bins])
        rows.append((b, x.mean(axis=0), x.std(axis=0, ddof=1) / math.sqrt(len(x))))
    if len(rows) < 3:
        return EnsembleEquilibration(None, rows)
    return EnsembleEquilibration(bins_agree([(m, e) for _, m, e in rows[-3:]]), rows)
