"""Classical disordered spin model equivalent to the subsystem color code.

Each gauge generator carries an Ising spin.  A single-qubit Pauli sigma^w_j
becomes the product of the spins whose generators anticommute with it; after
replacing the two Z-generator spins at qubit j by ``s_j^zz`` every such
product has exactly two factors, giving

    H = -J sum_j  tau_j^x s_j^x s_j^zz + tau_j^y s_j^y s_j^zz + tau_j^z s_j^x s_j^y

with ``s_j^x`` (``s_j^y``) the spin of the X (Y) link at qubit j.  In the raw
anticommutation form the X-link/zz product comes from sigma^y and the
Y-link/zz product from sigma^x; the couplings above attach tau^x to the
X-link product instead.  That is a swap of the X and Y error labels, under
which the depolarizing distribution is invariant.  :data:`SLOT_OF_PAULI`
records the correspondence and :func:`verify_gauge_fixing` accounts for it.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .lattice import COLORS, KIND_X, KIND_Y, KIND_Z, Lattice

J = 1

PAULI_I, PAULI_X, PAULI_Y, PAULI_Z = 0, 1, 2, 3
PAULI_NAMES = "IXYZ"
SLOTS = "xyz"

# slot (0=x, 1=y, 2=z) of the two-spin term generated by sigma^x, sigma^y, sigma^z
SLOT_OF_PAULI = {PAULI_X: 1, PAULI_Y: 0, PAULI_Z: 2}

# admissible zz patterns of a triangle, as spin bits (0 <-> +1); pattern index = b0 + 2*b1
ZZ_PATTERNS = np.array([[0, 0, 0], [1, 0, 1], [0, 1, 1], [1, 1, 0]], dtype=np.uint8)

MAX_ENUMERATION_SPINS = 24


class CompileError(ValueError):
    pass


class EnumerationTooLarge(ValueError):
    pass


@dataclass(frozen=True)
class PauliString:
    x_bits: np.ndarray
    z_bits: np.ndarray

    @property
    def n(self) -> int:
        return len(self.x_bits)

    @classmethod
    def single(cls, n: int, qubit: int, pauli: int) -> "PauliString":
        return cls.from_sites(n, {qubit: pauli})

    @classmethod
    def from_sites(cls, n: int, sites: dict) -> "PauliString":
        x = np.zeros(n, dtype=np.uint8)
        z = np.zeros(n, dtype=np.uint8)
        for q, w in sites.items():
            if isinstance(w, str):
                w = PAULI_NAMES.index(w.upper())
            x[q] = w in (PAULI_X, PAULI_Y)
            z[q] = w in (PAULI_Z, PAULI_Y)
        return cls(x, z)

    def commutes(self, other: "PauliString") -> bool:
        parity = int(np.dot(self.x_bits, other.z_bits)) + int(np.dot(self.z_bits, other.x_bits))
        return parity % 2 == 0


def generator_pauli(lat: Lattice, g: int) -> PauliString:
    w = {KIND_X: PAULI_X, KIND_Y: PAULI_Y, KIND_Z: PAULI_Z}[int(lat.gen_kind[g])]
    q0, q1 = lat.gen_qubits[g]
    return PauliString.from_sites(lat.n_qubits, {int(q0): w, int(q1): w})


def _incident_generators(lat: Lattice) -> list[list[int]]:
    inc = [[] for _ in range(lat.n_qubits)]
    for g, (q0, q1) in enumerate(lat.gen_qubits):
        inc[q0].append(g)
        if q1 != q0:
            inc[q1].append(g)
    return inc


def anticommuting_generators(lat: Lattice, full: bool = False) -> dict:
    """Map (qubit j, Pauli w) -> sorted generator ids that anticommute with sigma^w_j.

    Generators with support disjoint from j commute trivially and are skipped
    unless ``full`` is set, in which case every generator is tested.
    """
    n = lat.n_qubits
    inc = _incident_generators(lat)
    paulis = {}
    out = {}
    for j in range(n):
        candidates = range(lat.n_generators) if full else inc[j]
        for w in (PAULI_X, PAULI_Y, PAULI_Z):
            sigma = PauliString.single(n, j, w)
            hits = []
            for g in candidates:
                if g not in paulis:
                    paulis[g] = generator_pauli(lat, g)
                if not sigma.commutes(paulis[g]):
                    hits.append(g)
            out[j, w] = sorted(hits)
    return out


@dataclass
class InteractionTable:
    """Two-spin couplings: ``pairs[j, slot]`` are the spins multiplying ``tau_j^slot``."""

    pairs: np.ndarray  # (n, 3, 2) spin indices
    pauli: np.ndarray  # (n, 3) Pauli whose anticommutation set produced the term
    J: int = J

    @property
    def n_qubits(self) -> int:
        return len(self.pairs)

    @property
    def n_terms(self) -> int:
        return 3 * len(self.pairs)

    def to_dict(self) -> dict:
        return {
            "J": self.J,
            "terms": [
                {"qubit": j, "slot": SLOTS[s], "spins": self.pairs[j, s].tolist(),
                 "pauli": PAULI_NAMES[self.pauli[j, s]]}
                for j in range(self.n_qubits) for s in range(3)
            ],
        }


def compile_interactions(lat: Lattice) -> InteractionTable:
    n = lat.n_qubits
    reg = lat.spins
    link_gens = np.concatenate([reg.x_spins, reg.y_spins])
    spin_of_gen = {int(g): s for s, g in enumerate(link_gens)}
    # the two Z generators at each qubit, whose spin product becomes s^zz
    z_at = [[] for _ in range(n)]
    for g in np.flatnonzero(lat.gen_kind == KIND_Z):
        for q in lat.gen_qubits[g]:
            z_at[q].append(int(g))

    anti = anticommuting_generators(lat)
    pairs = np.full((n, 3, 2), -1, dtype=np.int64)
    pauli = np.zeros((n, 3), dtype=np.int8)
    for j in range(n):
        if len(z_at[j]) != 2:
            raise CompileError(f"qubit {j}: expected two Z generators, found {len(z_at[j])}")
        for w in (PAULI_X, PAULI_Y, PAULI_Z):
            gens = anti[j, w]
            zs = [g for g in gens if lat.gen_kind[g] == KIND_Z]
            links = [spin_of_gen[g] for g in gens if lat.gen_kind[g] != KIND_Z]
            factors = list(links)
            if sorted(zs) == sorted(z_at[j]):
                factors.append(n + j)
            elif zs:
                raise CompileError(f"qubit {j}: sigma^{PAULI_NAMES[w]} anticommutes with "
                                   f"Z generators {zs} that do not reduce to s^zz")
            if len(factors) != 2:
                raise CompileError(f"qubit {j}: sigma^{PAULI_NAMES[w]} term has "
                                   f"{len(factors)} spin factors, expected 2")
            slot = _slot_of(factors, reg.qubit_spins[j])
            if slot is None or pairs[j, slot, 0] >= 0:
                raise CompileError(f"qubit {j}: sigma^{PAULI_NAMES[w]} term {factors} "
                                   "does not match the gauge-fixed form")
            order = {int(reg.qubit_spins[j, 0]): 0, int(reg.qubit_spins[j, 1]): 1, n + j: 2}
            pairs[j, slot] = sorted(factors, key=order.__getitem__)
            pauli[j, slot] = w
    return InteractionTable(pairs=pairs, pauli=pauli)


def _slot_of(factors, qspins):
    sx, sy, szz = (int(s) for s in qspins)
    key = frozenset(int(f) for f in factors)
    return {frozenset((sx, szz)): 0, frozenset((sy, szz)): 1, frozenset((sx, sy)): 2}.get(key)


# --- disorder -------------------------------------------------------------

@dataclass
class DisorderRealization:
    errors: np.ndarray  # (n,) Pauli labels 0..3
    p: float
    seed: int | None = None

    @property
    def tau(self) -> np.ndarray:
        return tau_from_errors(self.errors)

    def to_json(self) -> str:
        return json.dumps({"p": self.p, "seed": self.seed,
                           "errors": "".join(PAULI_NAMES[e] for e in self.errors)})

    @classmethod
    def from_json(cls, text: str) -> "DisorderRealization":
        d = json.loads(text)
        errors = np.array([PAULI_NAMES.index(c) for c in d["errors"]], dtype=np.int8)
        return cls(errors=errors, p=d["p"], seed=d["seed"])


def tau_from_errors(errors: np.ndarray) -> np.ndarray:
    """tau_j^w = -1 exactly when the error on qubit j anticommutes with sigma^w."""
    errors = np.asarray(errors)
    tau = np.ones((len(errors), 3), dtype=np.int8)
    for w in (PAULI_X, PAULI_Y, PAULI_Z):
        # two non-identity Paulis anticommute iff they differ
        tau[:, w - 1] = np.where((errors != PAULI_I) & (errors != w), -1, 1)
    return tau


def sample_disorder(lat: Lattice | int, p: float, seed=None) -> DisorderRealization:
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"error probability must lie in [0, 1], got {p}")
    n = lat if isinstance(lat, (int, np.integer)) else lat.n_qubits
    rng = np.random.Generator(np.random.Philox(seed))
    errors = rng.choice(4, size=n, p=[1.0 - p, p / 3, p / 3, p / 3]).astype(np.int8)
    return DisorderRealization(errors=errors, p=float(p), seed=seed)


def clean_disorder(lat: Lattice) -> DisorderRealization:
    return DisorderRealization(errors=np.zeros(lat.n_qubits, dtype=np.int8), p=0.0)


# --- energy ---------------------------------------------------------------

def state_spins(state, lat: Lattice) -> np.ndarray:
    """+-1 vector over all spins (links, then zz) from a SpinState or a spin vector."""
    if hasattr(state, "links") and hasattr(state, "tri"):
        bits = np.empty(2 * lat.n_qubits, dtype=np.uint8)
        bits[:lat.n_qubits] = state.links
        bits[lat.n_qubits:] = ZZ_PATTERNS[np.asarray(state.tri)].ravel()
        return 1 - 2 * bits.astype(np.int64)
    spins = np.asarray(state, dtype=np.int64)
    if spins.shape != (2 * lat.n_qubits,):
        raise ValueError(f"spin vector has shape {spins.shape}, expected ({2 * lat.n_qubits},)")
    return spins


def energy(table: InteractionTable, disorder: DisorderRealization, state, lat: Lattice) -> int:
    spins = state_spins(state, lat)
    if not np.all(np.abs(spins) == 1):
        raise ValueError("spins must be +-1")
    prod = spins[lat.spins.constraint_groups].prod(axis=1)
    if np.any(prod != 1):
        raise ValueError(f"zz constraint violated on triangles {np.flatnonzero(prod != 1)[:10].tolist()}")
    tau = disorder.tau
    if tau.shape[0] != table.n_qubits:
        raise ValueError("disorder and interaction table sizes differ")
    terms = spins[table.pairs[:, :, 0]] * spins[table.pairs[:, :, 1]]
    return int(-table.J * np.sum(tau * terms))


# --- Nishimori line -------------------------------------------------------

def nishimori_temperature(p: float) -> float:
    if not 0.0 < p < 0.75:
        raise ValueError(f"Nishimori temperature requires 0 < p < 3/4, got {p}")
    return 4.0 * J / math.log(3.0 * (1.0 - p) / p)


def nishimori_p(T: float) -> float:
    """Inverse of :func:`nishimori_temperature`."""
    if T <= 0:
        raise ValueError(f"temperature must be positive, got {T}")
    return 3.0 / (3.0 + math.exp(4.0 * J / T))


@dataclass(frozen=True)
class NishimoriPoint:
    p: float
    T: float

    @property
    def beta(self) -> float:
        return 1.0 / self.T

    @classmethod
    def at(cls, p: float) -> "NishimoriPoint":
        return cls(p=p, T=nishimori_temperature(p))


# --- exact enumeration ----------------------------------------------------

def k_min(lat: Lattice) -> np.ndarray:
    return np.array([2 * np.pi / lat.shape[0], 0.0])


def _state_chunks(lat: Lattice, chunk: int = 1 << 20):
    """Yield (link bits, triangle patterns) for all constraint-satisfying states.

    State index bit layout: link spin i at bit i, triangle t's pattern at bits
    n + 2t and n + 2t + 1.
    """
    n, nt = lat.n_qubits, lat.n_triangles
    total = 1 << (n + 2 * nt)
    for start in range(0, total, chunk):
        idx = np.arange(start, min(total, start + chunk), dtype=np.int64)
        links = ((idx[:, None] >> np.arange(n)) & 1).astype(np.uint8)
        tri = ((idx[:, None] >> (n + 2 * np.arange(nt))) & 3).astype(np.uint8)
        yield idx, links, tri


def _spins_from_bits(lat: Lattice, links, tri) -> np.ndarray:
    zz = ZZ_PATTERNS[tri].reshape(len(tri), -1)
    bits = np.concatenate([links, zz], axis=1)
    return 1 - 2 * bits.astype(np.int8)


@dataclass
class ExactThermal:
    beta: np.ndarray
    E: np.ndarray  # (n_beta,)
    m: np.ndarray  # (n_beta, 3), <m_P>
    m2: np.ndarray  # (n_beta, 3), <m_P^2>
    chi0: np.ndarray  # (n_beta, 3)
    chik: np.ndarray  # (n_beta, 3)
    sizes: np.ndarray  # N_P


def enumerate_thermal(lat: Lattice, table: InteractionTable, disorder: DisorderRealization,
                      beta, max_free: int = MAX_ENUMERATION_SPINS) -> ExactThermal:
    """Exact Boltzmann averages over every constraint-satisfying state."""
    if lat.n_free_spins > max_free:
        raise EnumerationTooLarge(
            f"instance has {lat.n_free_spins} free spins, enumeration bound is {max_free}")
    betas = np.atleast_1d(np.asarray(beta, dtype=float))
    tau = disorder.tau.astype(np.int64)
    color = lat.spins.color
    sizes = np.bincount(color, minlength=3)
    phase = np.exp(1j * (lat.spins.position @ k_min(lat)))
    masks = [(color == c) for c in range(3)]

    # Energies are integers bounded by 3n; shifting by -3n keeps weights <= 1.
    shift = -3 * lat.n_qubits
    Z = np.zeros(len(betas))
    acc = {k: np.zeros((len(betas), 3)) for k in ("m", "m2", "f2")}
    accE = np.zeros(len(betas))
    for _, links, tri in _state_chunks(lat):
        s = _spins_from_bits(lat, links, tri).astype(np.int64)
        E = -table.J * np.sum(tau[None] * s[:, table.pairs[:, :, 0]] * s[:, table.pairs[:, :, 1]],
                              axis=(1, 2))
        M = np.stack([s[:, mk].sum(axis=1) for mk in masks], axis=1).astype(float)
        F = np.stack([(s[:, mk] * phase[mk]).sum(axis=1) for mk in masks], axis=1)
        w = np.exp(-np.outer(betas, E - shift))
        Z += w.sum(axis=1)
        accE += w @ E
        with np.errstate(invalid="ignore", divide="ignore"):
            m = np.where(sizes > 0, M / np.maximum(sizes, 1), 0.0)
        acc["m"] += w @ m
        acc["m2"] += w @ (m * m)
        acc["f2"] += w @ (np.abs(F) ** 2)
    nz = np.maximum(sizes, 1)
    return ExactThermal(
        beta=betas,
        E=accE / Z,
        m=acc["m"] / Z[:, None],
        m2=acc["m2"] / Z[:, None],
        chi0=(acc["m2"] / Z[:, None]) * sizes,
        chik=acc["f2"] / Z[:, None] / nz,
        sizes=sizes,
    )


def state_energies(lat: Lattice, table: InteractionTable, disorder: DisorderRealization,
                   max_free: int = MAX_ENUMERATION_SPINS) -> np.ndarray:
    """Energy of every state, indexed by the layout of :func:`_state_chunks`."""
    if lat.n_free_spins > max_free:
        raise EnumerationTooLarge(
            f"instance has {lat.n_free_spins} free spins, enumeration bound is {max_free}")
    tau = disorder.tau.astype(np.int64)
    out = []
    for _, links, tri in _state_chunks(lat):
        s = _spins_from_bits(lat, links, tri).astype(np.int64)
        out.append(-table.J * np.sum(tau[None] * s[:, table.pairs[:, :, 0]] * s[:, table.pairs[:, :, 1]],
                                     axis=(1, 2)))
    return np.concatenate(out)


def state_index(lat: Lattice, links, tri) -> int:
    n = lat.n_qubits
    idx = 0
    for i, bit in enumerate(np.asarray(links)):
        idx |= int(bit) << i
    for t, pat in enumerate(np.asarray(tri)):
        idx |= int(pat) << (n + 2 * t)
    return idx


# --- gauge fixing ---------------------------------------------------------

@dataclass
class GaugeFixingReport:
    equivalent: bool
    degeneracy_factor: int
    n_levels: int
    first_mismatch: tuple | None  # (energy, ungauged count, gauge-fixed count x factor)


def ungauged_energies(lat: Lattice, disorder: DisorderRealization, max_spins: int = 24) -> Counter:
    """Energy multiset of the model with one free spin per gauge generator.

    Built directly from the anticommutation structure, with each sigma^w_j
    weighted by tau_j^w (no gauge fixing, no relabeling).
    """
    n_gen = lat.n_generators
    if n_gen > max_spins:
        raise EnumerationTooLarge(f"{n_gen} generator spins exceed the bound {max_spins}")
    anti = anticommuting_generators(lat)
    tau = disorder.tau
    terms = [(int(tau[j, w - 1]), gens) for (j, w), gens in anti.items()]
    counts = Counter()
    total = 1 << n_gen
    chunk = 1 << 20
    for start in range(0, total, chunk):
        idx = np.arange(start, min(total, start + chunk), dtype=np.int64)
        s = 1 - 2 * ((idx[:, None] >> np.arange(n_gen)) & 1)
        E = np.zeros(len(idx), dtype=np.int64)
        for t, gens in terms:
            E -= J * t * s[:, gens].prod(axis=1)
        vals, cnt = np.unique(E, return_counts=True)
        for v, c in zip(vals.tolist(), cnt.tolist()):
            counts[v] += c
    return counts


def relabel_xy(disorder: DisorderRealization) -> DisorderRealization:
    """Swap X and Y error labels (the relabeling between the two coupling conventions)."""
    errors = disorder.errors.copy()
    x, y = errors == PAULI_X, errors == PAULI_Y
    errors[x], errors[y] = PAULI_Y, PAULI_X
    return DisorderRealization(errors=errors, p=disorder.p, seed=disorder.seed)


def verify_gauge_fixing(lat: Lattice, disorder: DisorderRealization,
                        table: InteractionTable | None = None) -> GaugeFixingReport:
    """Compare the ungauged and gauge-fixed energy spectra level by level."""
    table = table or compile_interactions(lat)
    ungauged = ungauged_energies(lat, disorder)
    fixed_E = state_energies(lat, table, relabel_xy(disorder))
    vals, cnt = np.unique(fixed_E, return_counts=True)
    factor = 2 ** lat.n_triangles
    fixed = Counter({int(v): int(c) * factor for v, c in zip(vals, cnt)})
    mismatch = None
    for level in sorted(set(ungauged) | set(fixed)):
        if ungauged.get(level, 0) != fixed.get(level, 0):
            mismatch = (level, ungauged.get(level, 0), fixed.get(level, 0))
            break
    return GaugeFixingReport(
        equivalent=mismatch is None,
        degeneracy_factor=factor,
        n_levels=len(set(ungauged) | set(fixed)),
        first_mismatch=mismatch,
    )


def color_name(c: int) -> str:
    return COLORS[c]
