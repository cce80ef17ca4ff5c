"""Parallel-tempering Monte Carlo for the gauge-fixed spin model."""

from __future__ import annotations

import hashlib
import io
import json
import logging
import math
import os
import struct
from dataclasses import asdict, dataclass, field

import numpy as np

from . import _kernels as K
from .philox import stream_keys, uniforms
from .lattice import Lattice
from .observables import blocking_time, integrated_time
from .model import DisorderRealization, InteractionTable, ZZ_PATTERNS, k_min

log = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"TSCCMC-CKPT\n"
CHECKPOINT_VERSION = 1

TRACKED = ("energy", "m2")


class CheckpointError(RuntimeError):
    pass


# --- static data ------------------------------------------------------------

@dataclass(frozen=True)
class TemperatureLadder:
    T_min: float
    T_max: float
    N_T: int
    temperatures: tuple = ()

    def __post_init__(self):
        if self.N_T < 1:
            raise ValueError("ladder needs at least one rung")
        if not self.temperatures:
            object.__setattr__(self, "temperatures", tuple(_geometric(self.T_min, self.T_max, self.N_T)))
        T = np.asarray(self.temperatures)
        if len(T) != self.N_T:
            raise ValueError(f"{len(T)} temperatures given for N_T={self.N_T}")
        if T[0] != self.T_min or T[-1] != self.T_max:
            raise ValueError("ladder endpoints must equal T_min and T_max")
        if self.N_T > 1 and not np.all(np.diff(T) > 0):
            raise ValueError("temperatures must be strictly increasing")
        if T[0] <= 0:
            raise ValueError("temperatures must be positive")

    @property
    def betas(self) -> np.ndarray:
        """Descending inverse temperatures; rung 0 is the coldest."""
        return 1.0 / np.asarray(self.temperatures)


def _geometric(T_min, T_max, N_T):
    if N_T == 1:
        if T_min != T_max:
            raise ValueError("a single-rung ladder needs T_min == T_max")
        return [float(T_min)]
    T = [T_min * (T_max / T_min) ** (i / (N_T - 1)) for i in range(N_T)]
    T[0], T[-1] = float(T_min), float(T_max)
    return T


@dataclass
class SamplerModel:
    """Flat arrays describing the Hamiltonian for the kernels."""

    n: int
    n_tri: int
    term_a: np.ndarray
    term_b: np.ndarray
    link_terms: np.ndarray  # (n, 4), padded with -1
    zz_terms: np.ndarray  # (n, 2)
    tri_q: np.ndarray  # (n_tri, 3)
    color: np.ndarray  # (2n,)
    cosk: np.ndarray
    sink: np.ndarray
    sizes: np.ndarray  # spins per color
    shape: tuple

    @classmethod
    def build(cls, lat: Lattice, table: InteractionTable) -> "SamplerModel":
        n = lat.n_qubits
        term_a = table.pairs[:, :, 0].ravel().astype(np.int64)
        term_b = table.pairs[:, :, 1].ravel().astype(np.int64)
        incident = [[] for _ in range(2 * n)]
        for t in range(len(term_a)):
            incident[term_a[t]].append(t)
            incident[term_b[t]].append(t)
        width = max(len(x) for x in incident[:n])
        link_terms = np.full((n, width), -1, dtype=np.int64)
        for i in range(n):
            link_terms[i, :len(incident[i])] = incident[i]
        zz_terms = np.array([incident[n + j] for j in range(n)], dtype=np.int64)
        if zz_terms.shape != (n, 2):
            raise ValueError("each zz spin must appear in exactly two terms")
        phase = lat.spins.position @ k_min(lat)
        return cls(
            n=n,
            n_tri=lat.n_triangles,
            term_a=term_a,
            term_b=term_b,
            link_terms=link_terms,
            zz_terms=zz_terms,
            tri_q=lat.tri_qubits.astype(np.int64),
            color=lat.spins.color.astype(np.int64),
            cosk=np.cos(phase),
            sink=np.sin(phase),
            sizes=np.bincount(lat.spins.color, minlength=3),
            shape=tuple(lat.shape),
        )

    @property
    def moves_per_sweep(self) -> int:
        return self.n + self.n_tri

    @property
    def uniforms_per_sweep(self) -> int:
        return self.n + 2 * self.n_tri


def tau_bits(disorder: DisorderRealization) -> np.ndarray:
    return (disorder.tau.ravel() < 0).astype(np.uint8)


def neighbor_tables(model: SamplerModel, taus: np.ndarray) -> tuple:
    """Per-disorder (lo, lt, zo, zt) tables consumed by the sweep kernel."""
    if model.link_terms.shape[1] != 4:
        raise ValueError("every link spin must appear in exactly four terms")
    return K.neighbor_tables(taus, model.term_a, model.term_b, model.n)


def boltzmann_table(betas) -> np.ndarray:
    """``table[r, m] = exp(-beta_r * 2m)``; kernels index it with dE / 2."""
    betas = np.atleast_1d(np.asarray(betas, dtype=float))
    return np.exp(-np.outer(betas, 2.0 * np.arange(5)))


@dataclass
class SpinState:
    links: np.ndarray  # (n,) bits, 0 <-> +1
    tri: np.ndarray  # (n_tri,) admissible zz pattern index

    def bits(self, model: SamplerModel) -> np.ndarray:
        out = np.empty(2 * model.n, dtype=np.uint8)
        out[:model.n] = self.links
        out[model.n + model.tri_q] = ZZ_PATTERNS[self.tri]
        return out

    def spins(self, model: SamplerModel) -> np.ndarray:
        return 1 - 2 * self.bits(model).astype(np.int64)

    @classmethod
    def from_bits(cls, model: SamplerModel, bits: np.ndarray, tri: np.ndarray) -> "SpinState":
        return cls(links=np.array(bits[:model.n], dtype=np.uint8), tri=np.array(tri, dtype=np.uint8))

    @classmethod
    def random(cls, model: SamplerModel, rng: np.random.Generator) -> "SpinState":
        return cls(links=rng.integers(0, 2, model.n, dtype=np.uint8),
                   tri=rng.integers(0, 4, model.n_tri, dtype=np.uint8))

    @classmethod
    def from_uniforms(cls, model: SamplerModel, u: np.ndarray) -> "SpinState":
        """Hot start from ``n + n_tri`` uniforms."""
        return cls(links=(u[:model.n] < 0.5).astype(np.uint8),
                   tri=np.minimum((u[model.n:model.n + model.n_tri] * 4).astype(np.uint8), 3))

    @classmethod
    def all_up(cls, model: SamplerModel) -> "SpinState":
        return cls(links=np.zeros(model.n, dtype=np.uint8), tri=np.zeros(model.n_tri, dtype=np.uint8))


def state_energy(model: SamplerModel, taus: np.ndarray, state: SpinState) -> int:
    return int(K.full_energy(state.bits(model), taus, model.term_a, model.term_b))


def metropolis_sweep(state: SpinState, model: SamplerModel, taus: np.ndarray, beta: float,
                     rng: np.random.Generator) -> tuple[SpinState, int]:
    bits = state.bits(model)
    tri = state.tri.copy()
    u = rng.random(model.uniforms_per_sweep)
    _, acc = K.sweep(bits, tri, u, boltzmann_table(beta)[0], *neighbor_tables(model, taus), model.tri_q)
    return SpinState.from_bits(model, bits, tri), int(acc)


def move_delta(model: SamplerModel, taus: np.ndarray, state: SpinState, move: tuple) -> int:
    """Local energy change of ``("link", i)`` or ``("tri", t, new_pattern)``."""
    bits = state.bits(model)
    lo, lt, zo, zt = neighbor_tables(model, taus)
    if move[0] == "link":
        return int(K.link_delta(bits, move[1], lo, lt))
    _, t, new = move
    return int(K.tri_delta(bits, t, new, state.tri, model.tri_q, zo, zt))


def apply_move(state: SpinState, move: tuple) -> SpinState:
    out = SpinState(state.links.copy(), state.tri.copy())
    if move[0] == "link":
        out.links[move[1]] ^= 1
    else:
        out.tri[move[1]] = move[2]
    return out


def sample_histogram(model: SamplerModel, taus: np.ndarray, beta: float, n_sweeps: int,
                     seed, n_batches: int = 100) -> np.ndarray:
    """Visit counts per state of a single-temperature chain, split into batches."""
    n_states = 1 << (model.n + 2 * model.n_tri)
    key = stream_keys(seed, 1)[0]
    state = SpinState.from_uniforms(model, uniforms(key, 0, K.PURPOSE_INIT, model.n + model.n_tri))
    bits, tri = state.bits(model), state.tri.copy()
    hist = np.zeros((n_batches, n_states), dtype=np.int64)
    per_batch = n_sweeps // n_batches
    boltz = boltzmann_table(beta)[0]
    tables = neighbor_tables(model, taus)
    for b in range(n_batches):
        K.state_histogram(bits, tri, key, b * per_batch, boltz, *tables, model.tri_q, per_batch, hist[b])
    return hist


# --- equilibration ----------------------------------------------------------

class EquilibrationTracker:
    """Tracked observables binned by base-2 logarithmic sweep windows.

    Bin b collects records taken at sweeps in ``[2**b, 2**(b+1))``.
    """

    def __init__(self, names=TRACKED):
        self.names = tuple(names)
        self._sweeps: list[np.ndarray] = []
        self._values: list[np.ndarray] = []

    def add(self, sweeps, values):
        sweeps = np.atleast_1d(np.asarray(sweeps, dtype=np.int64))
        values = np.asarray(values, dtype=float).reshape(len(sweeps), len(self.names))
        if len(sweeps):
            self._sweeps.append(sweeps)
            self._values.append(values)

    @property
    def sweeps(self) -> np.ndarray:
        return np.concatenate(self._sweeps) if self._sweeps else np.zeros(0, dtype=np.int64)

    @property
    def values(self) -> np.ndarray:
        return np.concatenate(self._values) if self._values else np.zeros((0, len(self.names)))

    def bins(self, now: int | None = None) -> list[tuple[int, np.ndarray, np.ndarray]]:
        """Complete bins as ``(b, mean, standard error)``, one entry per tracked name.

        Errors use the autocorrelation time measured on the second half of the
        data (the larger of the windowed and blocking estimates), capped so a bin never claims fewer than one
        independent measurement.
        """
        sweeps, values = self.sweeps, self.values
        if not len(sweeps):
            return []
        now = int(sweeps.max()) + 1 if now is None else now
        late = values[sweeps >= now // 2]
        tau = np.maximum(integrated_time(late), blocking_time(late)) if len(late) > 1 else np.ones(values.shape[1])
        out = []
        b = 0
        while 2 ** (b + 1) <= now:
            sel = (sweeps >= 2 ** b) & (sweeps < 2 ** (b + 1))
            n = int(sel.sum())
            if n >= 2:
                x = values[sel]
                err = x.std(axis=0, ddof=1) * np.sqrt(np.minimum(tau, n) / n)
                out.append((b, x.mean(axis=0), err))
            b += 1
        return out


def is_equilibrated(tracker: EquilibrationTracker, now: int | None = None, names=None) -> bool | None:
    """True when the last three bins agree pairwise for every tracked observable.

    Two bin means agree when their one-sigma error bars overlap.  ``names``
    restricts the test to a subset of the tracked observables.  Returns None
    ("undecided") with fewer than three complete bins.
    """
    bins = tracker.bins(now)
    if len(bins) < 3:
        return None
    cols = [tracker.names.index(n) for n in (names or tracker.names)]
    return bins_agree([(m[cols], e[cols]) for _, m, e in bins[-3:]])


def bins_agree(last) -> bool:
    """Pairwise one-sigma agreement of ``(mean, error)`` bins."""
    for i in range(len(last)):
        for j in range(i + 1, len(last)):
            (mi, ei), (mj, ej) = last[i], last[j]
            if np.any(np.abs(np.asarray(mi) - mj) > np.asarray(ei) + ej):
                return False
    return True


# --- ensemble -----------------------------------------------------------------

@dataclass
class EngineConfig:
    b: int  # equilibration sweeps = 2**b
    interval: int = 4  # sweeps between measurements
    cap_extra: int = 3  # hard cap at 2**(b + cap_extra) equilibration sweeps
    block: int = 64  # sweeps per kernel call
    checkpoint_every: int | None = None  # sweeps; None disables periodic checkpoints
    gate: tuple = ("energy",)  # tracked observables that decide per-sample equilibration

    def __post_init__(self):
        self.gate = tuple(self.gate)
        unknown = set(self.gate) - set(TRACKED)
        if unknown:
            raise ValueError(f"unknown gate observables {sorted(unknown)}; choose from {TRACKED}")
        if 2 ** self.b < 2 * self.interval:
            raise ValueError(f"2**b = {2 ** self.b} too short for measurement interval {self.interval}")
        if self.block % self.interval:
            raise ValueError("block must be a multiple of the measurement interval")


class ReplicaEnsemble:
    """N_T replicas on a temperature ladder; ``perm[r]`` is the replica at rung r."""

    def __init__(self, model: SamplerModel, disorder: DisorderRealization,
                 ladder: TemperatureLadder, seed, _init: bool = True):
        self.model = model
        self.disorder = disorder
        self.taus = tau_bits(disorder)
        self.tables = neighbor_tables(model, self.taus)
        self.ladder = ladder
        self.seed = _entropy(seed)
        NT = ladder.N_T
        # one counter-based stream per rung plus one for the swap passes
        self.keys = stream_keys(self.seed, NT + 1)
        self.bits = np.zeros((NT, 2 * model.n), dtype=np.uint8)
        self.tri = np.zeros((NT, model.n_tri), dtype=np.uint8)
        self.E = np.zeros(NT, dtype=np.int64)
        self.perm = np.arange(NT, dtype=np.int64)
        self.sweep = 0
        self.sweep_acc = np.zeros(NT, dtype=np.int64)
        self.swap_acc = np.zeros(max(NT - 1, 0), dtype=np.int64)
        self.swap_try = np.zeros(max(NT - 1, 0), dtype=np.int64)
        self.betas = ladder.betas
        self.boltz = boltzmann_table(self.betas)
        if _init:
            for r in range(NT):
                st = SpinState.from_uniforms(
                    model, uniforms(self.keys[r], 0, K.PURPOSE_INIT, model.n + model.n_tri))
                self.bits[r] = st.bits(model)
                self.tri[r] = st.tri
                self.E[r] = state_energy(model, self.taus, st)

    def state(self, replica: int) -> SpinState:
        return SpinState.from_bits(self.model, self.bits[replica], self.tri[replica])

    def advance(self, n_sweeps: int, interval: int):
        """Run ``n_sweeps`` sweeps; returns (record sweeps, E, M, F) for records taken."""
        m, NT = self.model, self.ladder.N_T
        n_max = n_sweeps // interval + 1
        rec_E = np.zeros((n_max, NT))
        rec_M = np.zeros((n_max, NT, 3))
        rec_Fr = np.zeros((n_max, NT, 3))
        rec_Fi = np.zeros((n_max, NT, 3))
        n_rec = K.pt_block(self.bits, self.tri, self.E, self.perm, self.boltz, self.betas,
                           self.keys, n_sweeps, self.sweep, interval, *self.tables,
                           m.tri_q, m.color, m.cosk, m.sink,
                           rec_E, rec_M, rec_Fr, rec_Fi, self.sweep_acc, self.swap_acc, self.swap_try)
        first = (self.sweep // interval + 1) * interval
        sweeps = first + interval * np.arange(n_rec)
        self.sweep += n_sweeps
        return sweeps, rec_E[:n_rec], rec_M[:n_rec], rec_Fr[:n_rec] + 1j * rec_Fi[:n_rec]

    def check_energies(self) -> bool:
        return all(
            int(K.full_energy(self.bits[r], self.taus, self.model.term_a, self.model.term_b)) == self.E[r]
            for r in range(self.ladder.N_T)
        )

    def swap_rates(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.swap_try > 0, self.swap_acc / np.maximum(self.swap_try, 1), np.nan)

    def acceptance_rates(self) -> np.ndarray:
        return self.sweep_acc / max(self.sweep * self.model.moves_per_sweep, 1)


def pt_swap_probability(beta1: float, beta2: float, E1: float, E2: float) -> float:
    return min(1.0, math.exp((beta1 - beta2) * (E1 - E2)))


def pt_swap_pass(ensemble: ReplicaEnsemble, rng: np.random.Generator, parity: int | None = None) -> None:
    """One alternating-pair replica-exchange pass (outside the fused kernel)."""
    NT = ensemble.ladder.N_T
    parity = ensemble.sweep % 2 if parity is None else parity
    for r in range(parity, NT - 1, 2):
        a, b = ensemble.perm[r], ensemble.perm[r + 1]
        p = pt_swap_probability(ensemble.betas[r], ensemble.betas[r + 1], ensemble.E[a], ensemble.E[b])
        ensemble.swap_try[r] += 1
        if rng.random() < p:
            ensemble.perm[r], ensemble.perm[r + 1] = b, a
            ensemble.swap_acc[r] += 1


def _entropy(seed) -> int:
    if isinstance(seed, np.random.SeedSequence):
        return int(seed.entropy)
    return int(seed)


# --- measurement series -----------------------------------------------------

@dataclass
class MeasurementSeries:
    temperatures: np.ndarray
    sizes: np.ndarray  # spins per color
    sweeps: np.ndarray  # (m,)
    E: np.ndarray  # (m, N_T)
    M: np.ndarray  # (m, N_T, 3) summed spins per color
    F: np.ndarray  # (m, N_T, 3) complex Fourier amplitude at k_min

    @property
    def m(self) -> np.ndarray:
        return self.M / np.maximum(self.sizes, 1)

    def __len__(self):
        return len(self.sweeps)

    @classmethod
    def empty(cls, temperatures, sizes):
        NT = len(temperatures)
        return cls(np.asarray(temperatures, dtype=float), np.asarray(sizes), np.zeros(0, dtype=np.int64),
                   np.zeros((0, NT)), np.zeros((0, NT, 3)), np.zeros((0, NT, 3), dtype=complex))

    def extend(self, sweeps, E, M, F):
        self.sweeps = np.concatenate([self.sweeps, sweeps])
        self.E = np.concatenate([self.E, E])
        self.M = np.concatenate([self.M, M])
        self.F = np.concatenate([self.F, F])


def tracked_values(model: SamplerModel, E, M) -> np.ndarray:
    """Per record: energy per term and m_P^2, both averaged over the whole ladder.

    Ladder means still expose the drift away from the hot start but are not
    dominated by the long autocorrelation of the coldest rungs.
    """
    energy = E.mean(axis=1) / (3 * model.n)
    present = model.sizes > 0
    m = M[:, :, present] / model.sizes[present]
    return np.stack([energy, (m ** 2).mean(axis=(1, 2))], axis=1)


# --- one disorder sample ----------------------------------------------------

@dataclass
class SampleResult:
    status: str  # "done" | "unequilibrated" | "interrupted"
    t_eq: int | None
    sweeps: int
    series: MeasurementSeries
    acceptance: np.ndarray
    swap_rates: np.ndarray
    seed: int
    bins: list = field(default_factory=list)  # (b, mean) of every tracked observable


class SampleRun:
    """Equilibrate, then measure, one disorder realization; checkpointable at block edges."""

    def __init__(self, model: SamplerModel, disorder: DisorderRealization,
                 ladder: TemperatureLadder, config: EngineConfig, seed):
        self.model = model
        self.config = config
        self.ensemble = ReplicaEnsemble(model, disorder, ladder, seed)
        self.tracker = EquilibrationTracker()
        self.series = MeasurementSeries.empty(ladder.temperatures, model.sizes)
        self.status = "equilibrating"
        self.eq_target = 2 ** config.b
        self.t_eq: int | None = None

    @property
    def cap(self) -> int:
        return 2 ** (self.config.b + self.config.cap_extra)

    @property
    def finished(self) -> bool:
        return self.status in ("done", "unequilibrated")

    def run(self, stop_at: int | None = None, checkpoint_path=None) -> SampleResult:
        """Advance to completion, or until ``stop_at`` sweeps (then checkpoint and return)."""
        ens, cfg = self.ensemble, self.config
        while not self.finished:
            target = self.eq_target if self.status == "equilibrating" else 2 * self.t_eq
            while ens.sweep < target:
                step = min(cfg.block, target - ens.sweep)
                if cfg.checkpoint_every:
                    step = min(step, cfg.checkpoint_every - ens.sweep % cfg.checkpoint_every)
                if stop_at is not None:
                    if ens.sweep >= stop_at:
                        if checkpoint_path:
                            self.checkpoint(checkpoint_path)
                        return self.result("interrupted")
                    step = min(step, stop_at - ens.sweep)
                sweeps, E, M, F = ens.advance(step, cfg.interval)
                if self.status == "equilibrating":
                    self.tracker.add(sweeps, tracked_values(self.model, E, M))
                else:
                    self.series.extend(sweeps, E, M, F)
                if checkpoint_path and cfg.checkpoint_every and ens.sweep % cfg.checkpoint_every == 0:
                    self.checkpoint(checkpoint_path)
            self._phase_done()
        if checkpoint_path and cfg.checkpoint_every:
            self.checkpoint(checkpoint_path)
        return self.result(self.status)

    def _phase_done(self):
        if self.status == "measuring":
            self.status = "done"
            return
        ok = is_equilibrated(self.tracker, now=self.eq_target, names=self.config.gate)
        if ok:
            self.t_eq = self.eq_target
            self.status = "measuring"
        elif self.eq_target < self.cap:
            log.debug("not equilibrated at %d sweeps, extending", self.eq_target)
            self.eq_target *= 2
        else:
            log.info("sample not equilibrated within %d sweeps", self.cap)
            self.status = "unequilibrated"

    def result(self, status: str) -> SampleResult:
        ens = self.ensemble
        return SampleResult(status=status, t_eq=self.t_eq, sweeps=ens.sweep, series=self.series,
                            acceptance=ens.acceptance_rates(), swap_rates=ens.swap_rates(), seed=ens.seed,
                            bins=[(b, mean) for b, mean, _ in self.tracker.bins(ens.sweep)])

    # --- checkpointing ---

    def checkpoint(self, path) -> None:
        ens = self.ensemble
        meta = {
            "n": self.model.n,
            "n_tri": self.model.n_tri,
            "shape": list(self.model.shape),
            "ladder": list(ens.ladder.temperatures),
            "disorder": ens.disorder.to_json(),
            "config": asdict(self.config),
            "seed": str(ens.seed),
            "sweep": ens.sweep,
            "status": self.status,
            "eq_target": self.eq_target,
            "t_eq": self.t_eq,
            # stream keys derive from the seed; the only RNG counter is the sweep number
            "rng_counter": ens.sweep,
        }
        arrays = {
            "links": np.packbits(ens.bits[:, :self.model.n], axis=1),
            "tri": ens.tri, "E": ens.E, "perm": ens.perm,
            "sweep_acc": ens.sweep_acc, "swap_acc": ens.swap_acc, "swap_try": ens.swap_try,
            "trk_sweeps": self.tracker.sweeps, "trk_values": self.tracker.values,
            "ser_sweeps": self.series.sweeps, "ser_E": self.series.E,
            "ser_M": self.series.M, "ser_F": self.series.F,
        }
        write_checkpoint(path, meta, arrays)

    @classmethod
    def restore(cls, path, model: SamplerModel) -> "SampleRun":
        meta, arrays = read_checkpoint(path)
        if (meta["n"], meta["n_tri"]) != (model.n, model.n_tri) or tuple(meta["shape"]) != tuple(model.shape):
            raise CheckpointError(
                f"checkpoint layout (n={meta['n']}, n_tri={meta['n_tri']}, shape={meta['shape']}) "
                f"does not match model (n={model.n}, n_tri={model.n_tri}, shape={list(model.shape)})")
        temps = meta["ladder"]
        ladder = TemperatureLadder(temps[0], temps[-1], len(temps), tuple(temps))
        disorder = DisorderRealization.from_json(meta["disorder"])
        run = cls.__new__(cls)
        run.model = model
        run.config = EngineConfig(**meta["config"])
        ens = ReplicaEnsemble(model, disorder, ladder, int(meta["seed"]), _init=False)
        links = np.unpackbits(arrays["links"], axis=1, count=model.n)
        ens.tri[:] = arrays["tri"]
        ens.bits[:, :model.n] = links
        for r in range(ladder.N_T):
            ens.bits[r, model.n + model.tri_q] = ZZ_PATTERNS[ens.tri[r]]
        ens.E[:] = arrays["E"]
        ens.perm[:] = arrays["perm"]
        ens.sweep_acc[:] = arrays["sweep_acc"]
        ens.swap_acc[:] = arrays["swap_acc"]
        ens.swap_try[:] = arrays["swap_try"]
        ens.sweep = meta["sweep"]
        if meta["rng_counter"] != ens.sweep:
            raise CheckpointError("RNG counter does not match the stored sweep number")
        if not ens.check_energies():
            raise CheckpointError("stored energies disagree with stored spin states")
        run.ensemble = ens
        run.tracker = EquilibrationTracker()
        run.tracker.add(arrays["trk_sweeps"], arrays["trk_values"])
        run.series = MeasurementSeries(np.asarray(temps), model.sizes, arrays["ser_sweeps"],
                                       arrays["ser_E"], arrays["ser_M"], arrays["ser_F"])
        run.status = meta["status"]
        run.eq_target = meta["eq_target"]
        run.t_eq = meta["t_eq"]
        return run


def run_sample(lat: Lattice, table: InteractionTable, disorder: DisorderRealization,
               ladder: TemperatureLadder, config: EngineConfig, seed,
               model: SamplerModel | None = None) -> SampleResult:
    model = model or SamplerModel.build(lat, table)
    return SampleRun(model, disorder, ladder, config, seed).run()


def write_checkpoint(path, meta: dict, arrays: dict) -> None:
    buf = io.BytesIO()
    np.savez(buf, **arrays)
    payload = buf.getvalue()
    meta_bytes = json.dumps({"version": CHECKPOINT_VERSION, **meta}, sort_keys=True).encode()
    body = (CHECKPOINT_MAGIC + struct.pack("<I", CHECKPOINT_VERSION)
            + struct.pack("<Q", len(meta_bytes)) + meta_bytes
            + struct.pack("<Q", len(payload)) + payload)
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(body + hashlib.sha256(body).digest())
    os.replace(tmp, path)


def read_checkpoint(path) -> tuple[dict, dict]:
    with open(path, "rb") as fh:
        data = fh.read()
    if not data.startswith(CHECKPOINT_MAGIC):
        raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
    body, digest = data[:-32], data[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise CheckpointError(f"{path}: checksum mismatch, file is corrupted or truncated")
    off = len(CHECKPOINT_MAGIC)
    (version,) = struct.unpack_from("<I", body, off)
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: checkpoint version {version}, expected {CHECKPOINT_VERSION}")
    off += 4
    (n_meta,) = struct.unpack_from("<Q", body, off)
    off += 8
    meta = json.loads(body[off:off + n_meta])
    off += n_meta
    (n_pay,) = struct.unpack_from("<Q", body, off)
    off += 8
    with np.load(io.BytesIO(body[off:off + n_pay])) as z:
        arrays = {k: z[k] for k in z.files}
    return meta, arrays
