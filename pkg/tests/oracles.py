"""Comparisons between Monte Carlo estimates and exhaustive enumeration, shared by several test files."""

import numpy as np

from tsccmc.engine import EngineConfig, TemperatureLadder, run_sample, sample_histogram
from tsccmc.model import enumerate_thermal, state_energies
from tsccmc.observables import thermal_estimate


def oracle_comparison(inst, temperatures, b=14, seed=0, n_sigma=3.0):
    """Rows (observable, T, estimate, error, exact, ok) for E, m_P^2, chi(0), chi(k_min)."""
    T = tuple(float(t) for t in temperatures)
    ladder = TemperatureLadder(T[0], T[-1], len(T), T)
    res = run_sample(inst.lat, inst.table, inst.disorder, ladder, EngineConfig(b=b, interval=1, cap_extra=4),
                     seed, model=inst.model)
    exact = enumerate_thermal(inst.lat, inst.table, inst.disorder, 1.0 / np.asarray(T))
    s = res.series
    sizes = np.maximum(s.sizes, 1)
    measured = {
        "E": (s.E, exact.E),
        "m2": (s.m ** 2, exact.m2),
        "chi0": (np.abs(s.M) ** 2 / sizes, exact.chi0),
        "chik": (np.abs(s.F) ** 2 / sizes, exact.chik),
    }
    rows = []
    for name, (x, ref) in measured.items():
        est = thermal_estimate(x)
        for r, t in enumerate(T):
            cols = [()] if name == "E" else [(c,) for c in range(3) if s.sizes[c] > 0]
            for c in cols:
                m, e, ex = est.mean[(r, *c)], est.error[(r, *c)], ref[(r, *c)]
                label = name if not c else f"{name}_{'ABC'[c[0]]}"
                rows.append((label, t, float(m), float(e), float(ex), abs(m - ex) <= n_sigma * e))
    return res, rows


def boltzmann_probabilities(inst, beta):
    E = state_energies(inst.lat, inst.table, inst.disorder)
    w = np.exp(-beta * (E - E.min()))
    return w / w.sum()


def histogram_comparison(inst, beta, n_sweeps, seed=0, n_batches=100):
    """Per-state (empirical, error, exact).

    Errors come from the spread of batch frequencies, floored at the
    independent-sample binomial error so rarely visited states are not judged
    against a vanishing error bar.
    """
    hist = sample_histogram(inst.model, inst.taus, beta, n_sweeps, seed, n_batches=n_batches)
    exact = boltzmann_probabilities(inst, beta)
    freq = hist / hist.sum(axis=1, keepdims=True)
    emp = freq.mean(axis=0)
    err = np.maximum(freq.std(axis=0, ddof=1) / np.sqrt(n_batches), binomial_error(exact, hist.sum()))
    return emp, err, exact


def binomial_error(p, n):
    return np.sqrt(p * (1 - p) / n)
