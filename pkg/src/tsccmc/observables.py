"""Order parameter, Fourier amplitudes and thermal statistics.

Spins are given as +-1 vectors indexed like the lattice spin registry.  A
sublattice P is a color index 0, 1, 2 or one of the letters "A", "B", "C".
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .lattice import COLORS, Lattice

KINDS = ("0", "kmin")


def _color(P) -> int:
    if isinstance(P, str):
        if P not in COLORS:
            raise ValueError(f"unknown sublattice {P!r}")
        return COLORS.index(P)
    P = int(P)
    if P not in (0, 1, 2):
        raise ValueError(f"unknown sublattice {P!r}")
    return P


def k_vector(lat: Lattice, k) -> np.ndarray:
    """Resolve ``k`` ("0", "kmin" or an explicit vector) to one of the two supported wave vectors."""
    kmin = np.array([2 * np.pi / lat.shape[0], 0.0])
    if isinstance(k, str):
        if k not in KINDS:
            raise ValueError(f"unsupported wave vector {k!r}; use '0' or 'kmin'")
        return np.zeros(2) if k == "0" else kmin
    k = np.asarray(k, dtype=float)
    if k.shape == (2,):
        if np.allclose(k, 0.0):
            return np.zeros(2)
        if np.allclose(k, kmin):
            return kmin
    raise ValueError(f"unsupported wave vector {k.tolist()}; only (0, 0) and (2pi/L, 0) are measured")


def magnetization(spins, lat: Lattice, P) -> float:
    """m_P = (1/N_P) sum of s_i over sublattice P."""
    mask = lat.spins.color == _color(P)
    return float(np.asarray(spins)[mask].sum() / mask.sum())


def magnetizations(spins, lat: Lattice) -> np.ndarray:
    return np.array([magnetization(spins, lat, c) for c in range(3)])


def fourier_amplitude(spins, lat: Lattice, P, k) -> complex:
    """F_P(k) = sum over i in P of s_i exp(i k.R_i), with R_i in lattice coordinates."""
    kv = k_vector(lat, k)
    mask = lat.spins.color == _color(P)
    phase = lat.spins.position[mask] @ kv
    return complex(np.sum(np.asarray(spins)[mask] * np.exp(1j * phase)))


# --- thermal statistics -----------------------------------------------------

def integrated_time(x, c: float = 5.0) -> np.ndarray:
    """Integrated autocorrelation time tau = 1 + 2 sum_t rho(t), per column.

    Sokal's automatic window: the sum is cut at the smallest M with
    M >= c * tau(M).  Constant columns get tau = 1.
    """
    x = np.asarray(x, dtype=float)
    flat = x.reshape(len(x), -1)
    n = len(flat)
    out = np.ones(flat.shape[1])
    if n < 2:
        return out.reshape(x.shape[1:])
    d = flat - flat.mean(axis=0)
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(d, n=size, axis=0)
    acf = np.fft.irfft(f * np.conj(f), n=size, axis=0)[:n]
    for j in range(flat.shape[1]):
        if acf[0, j] <= 0:
            continue
        rho = acf[:, j] / acf[0, j]
        taus = 2.0 * np.cumsum(rho) - 1.0
        window = np.arange(n) >= c * taus
        M = int(np.argmax(window)) if window.any() else n - 1
        out[j] = max(taus[M], 1.0)
    return out.reshape(x.shape[1:])


def blocking_time(x, min_blocks: int = 8) -> np.ndarray:
    """Conservative autocorrelation time from repeated pairwise blocking.

    At each level the variance of block means gives tau = n var(block mean) / var(x);
    the largest value over levels that still have ``min_blocks`` blocks is returned.
    This picks up slow components that a self-consistent window cuts off.
    """
    x = np.asarray(x, dtype=float)
    flat = x.reshape(len(x), -1)
    n = len(flat)
    var = flat.var(axis=0, ddof=1) if n > 1 else np.zeros(flat.shape[1])
    best = np.ones(flat.shape[1])
    blocks, size = flat, 1
    while len(blocks) >= min_blocks:
        with np.errstate(invalid="ignore", divide="ignore"):
            tau = np.where(var > 0, size * blocks.var(axis=0, ddof=1) / var, 1.0)
        best = np.maximum(best, tau)
        half = len(blocks) // 2
        blocks = 0.5 * (blocks[0:2 * half:2] + blocks[1:2 * half:2])
        size *= 2
    return best.reshape(x.shape[1:])


@dataclass(frozen=True)
class ThermalEstimate:
    mean: np.ndarray
    error: np.ndarray
    n_eff: np.ndarray
    tau: np.ndarray


def thermal_estimate(x) -> ThermalEstimate:
    """Mean along axis 0 with an error that accounts for autocorrelation."""
    x = np.asarray(x, dtype=float)
    if len(x) == 0:
        raise ValueError("empty series")
    tau = np.minimum(np.maximum(integrated_time(x), blocking_time(x)), len(x))
    n_eff = len(x) / tau
    var = x.var(axis=0, ddof=1) if len(x) > 1 else np.zeros(x.shape[1:])
    return ThermalEstimate(x.mean(axis=0), np.sqrt(var / n_eff), n_eff, tau)


# --- susceptibilities and correlation length --------------------------------

def _series_arrays(series, k):
    if len(series) == 0:
        raise ValueError("empty measurement series")
    if isinstance(k, str) and k not in KINDS:
        raise ValueError(f"unsupported wave vector {k!r}; use '0' or 'kmin'")
    return series.M if k == "0" else series.F


def susceptibility(series, P=None, k="0") -> np.ndarray:
    """chi(k) = <|F_P(k)|^2> / N_P per rung; P=None averages over the three sublattices.

    ``series`` is a MeasurementSeries (records x rungs x colors).
    """
    amp = _series_arrays(series, k)
    chi = (np.abs(amp) ** 2).mean(axis=0) / np.maximum(series.sizes, 1)
    if P is None:
        return chi.mean(axis=-1)
    return chi[..., _color(P)]


class CorrelationLength(NamedTuple):
    xi: np.ndarray | float
    status: np.ndarray | str  # "ok", "clipped" (chi0 < chik, xi set to 0) or "divergent" (chik == 0)


def correlation_length(chi0, chik, L: int) -> CorrelationLength:
    """xi_L = sqrt(chi0 / chik - 1) / (2 sin(pi / L)) from disorder-averaged susceptibilities."""
    chi0 = np.asarray(chi0, dtype=float)
    chik = np.asarray(chik, dtype=float)
    if np.any(chik < 0) or not np.all(np.isfinite(chik)):
        raise ValueError("chi(k_min) must be finite and non-negative")
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = chi0 / chik
    xi = np.sqrt(np.maximum(ratio - 1.0, 0.0)) / (2.0 * np.sin(np.pi / L))
    status = np.where(chik == 0, "divergent", np.where(ratio < 1.0, "clipped", "ok"))
    xi = np.where(chik == 0, np.inf, xi)
    if xi.ndim == 0:
        return CorrelationLength(float(xi), str(status))
    return CorrelationLength(xi, status)


def record_table(series) -> dict:
    """Per-rung thermal means of one sample: E, m_P^2, chi_P(0), chi_P(k_min).

    Arrays are (N_T,) for E and (N_T, 3) for the per-sublattice columns.
    """
    if len(series) == 0:
        raise ValueError("empty measurement series")
    sizes = np.maximum(series.sizes, 1)
    return {
        "T": np.asarray(series.temperatures),
        "E": series.E.mean(axis=0),
        "m2": (series.m ** 2).mean(axis=0),
        "chi0": (np.abs(series.M) ** 2).mean(axis=0) / sizes,
        "chik": (np.abs(series.F) ** 2).mean(axis=0) / sizes,
    }
