"""Periodic triangular-lattice geometry of the topological subsystem color code.

The code lives on the "ruby" decoration of an L x L periodic triangular
lattice: every triangular face (up- and down-pointing) carries a triangle of
three qubits joined by ZZ generators, and every edge of the triangular lattice
carries two links between the qubit triangles on either side, one XX and one
YY.  Around each lattice vertex the six qubits sitting in the six incident
faces form a ring whose links alternate X, Y, X, Y, X, Y.

Coordinates are oblique lattice coordinates ``(a, b)`` with the lattice
vectors ``e1 = (1, 0)`` and ``e2 = (1/2, sqrt(3)/2)`` in the Cartesian plane.
Vertex ``(a, b)`` has color ``(a - b) mod 3``; that coloring is proper on the
torus only when ``L`` is a multiple of 3.

Numbering (stable, row-major over cells ``c = b * L + a``):

* triangle ``2c`` is the up face with corners (a,b), (a+1,b), (a,b+1);
  triangle ``2c + 1`` is the down face with corners (a+1,b), (a+1,b+1), (a,b+1)
* qubit ``3t + k`` sits at corner ``k`` of triangle ``t``
* generators: Z generators first (``3t + k`` joins corners k and k+1 of
  triangle t), then the X links, then the Y links, both in cell order
* spins: X-link spins ``[0, n/2)``, Y-link spins ``[n/2, n)``, and the
  gauge-fixed zz spin of qubit ``j`` at ``n + j``
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

KIND_X, KIND_Y, KIND_Z = 0, 1, 2
KIND_NAMES = "XYZ"
COLORS = "ABC"

FORMAT_VERSION = 1

# corner offsets of the up and down faces, relative to the cell origin
_UP = ((0, 0), (1, 0), (0, 1))
_DOWN = ((1, 0), (1, 1), (0, 1))

# fraction of the corner-to-centroid distance at which a qubit is drawn
_QUBIT_INSET = 0.25


class LatticeError(ValueError):
    pass


@dataclass(frozen=True)
class LatticeSpec:
    L: int
    boundary: str = "periodic"

    def violations(self) -> list[str]:
        out = []
        if not isinstance(self.L, (int, np.integer)) or isinstance(self.L, bool):
            out.append(f"L must be an integer, got {self.L!r}")
            return out
        if self.L < 3:
            out.append(f"L >= 3 required, got L={self.L}")
        if self.L % 3 != 0:
            out.append(f"L mod 3 = 0 required for a periodic three-coloring, got L={self.L}")
        if self.boundary != "periodic":
            out.append(f"only periodic boundaries are supported, got {self.boundary!r}")
        return out


class GaugeGenerator(NamedTuple):
    id: int
    kind: str
    qubit_pair: tuple[int, int]
    position: tuple[float, float]
    color: str | None


@dataclass
class SpinRegistry:
    """Ising spins of the gauge-fixed model.

    ``qubit_spins[j]`` holds the indices ``(s_j^x, s_j^y, s_j^zz)``.
    """

    n_qubits: int
    x_spins: np.ndarray  # generator id of each X-link spin
    y_spins: np.ndarray
    zz_spins: np.ndarray  # qubit id of each zz spin
    color: np.ndarray  # int in {0, 1, 2}
    position: np.ndarray  # (n_spins, 2), oblique lattice coordinates
    qubit_spins: np.ndarray  # (n_qubits, 3)
    constraint_groups: np.ndarray  # (n_triangles, 3) zz-spin indices

    @property
    def n_spins(self) -> int:
        return len(self.color)

    @property
    def n_links(self) -> int:
        return len(self.x_spins) + len(self.y_spins)


@dataclass
class Lattice:
    spec: LatticeSpec
    shape: tuple[int, int]
    vertex_color: np.ndarray  # (Ly * Lx,)
    qubit_triangle: np.ndarray
    qubit_vertex: np.ndarray
    qubit_position: np.ndarray
    gen_kind: np.ndarray
    gen_qubits: np.ndarray  # (n_gen, 2)
    gen_position: np.ndarray
    gen_color: np.ndarray  # -1 for Z generators, which straddle two colors
    tri_qubits: np.ndarray  # (n_tri, 3)
    tri_zgens: np.ndarray  # (n_tri, 3)
    spins: SpinRegistry
    _edges: list = field(default_factory=list, repr=False)

    @property
    def L(self) -> int:
        return self.spec.L

    @property
    def n_qubits(self) -> int:
        return len(self.qubit_triangle)

    @property
    def n_triangles(self) -> int:
        return len(self.tri_qubits)

    @property
    def n_generators(self) -> int:
        return len(self.gen_kind)

    @property
    def n_free_spins(self) -> int:
        """Independent binary degrees of freedom: every link spin plus two bits per triangle."""
        return self.spins.n_links + 2 * self.n_triangles

    def generator(self, i: int) -> GaugeGenerator:
        color = int(self.gen_color[i])
        return GaugeGenerator(
            id=i,
            kind=KIND_NAMES[self.gen_kind[i]],
            qubit_pair=(int(self.gen_qubits[i, 0]), int(self.gen_qubits[i, 1])),
            position=(float(self.gen_position[i, 0]), float(self.gen_position[i, 1])),
            color=COLORS[color] if color >= 0 else None,
        )

    def vertex_neighbors(self) -> list[tuple[int, int]]:
        """Vertex pairs joined by an edge of the underlying triangular lattice."""
        return list(self._edges)


def _color_index(color) -> int:
    if isinstance(color, str):
        return COLORS.index(color.upper())
    return int(color)


def build_lattice(spec: LatticeSpec | int) -> Lattice:
    if not isinstance(spec, LatticeSpec):
        spec = LatticeSpec(int(spec))
    problems = spec.violations()
    if problems:
        raise LatticeError("; ".join(problems))
    lat = _build(spec, spec.L, spec.L)
    problems = validate_lattice(lat)
    if problems:
        raise LatticeError("embedding failed its own checks: " + "; ".join(problems[:5]))
    return lat


def small_instance(Lx: int, Ly: int = 1) -> Lattice:
    """Tiny torus for exact-enumeration checks.

    Uses the same decoration as :func:`build_lattice` but skips the
    ``L mod 3`` requirement, so the vertex coloring is generally improper and
    :func:`validate_lattice` will report it.  The Hamiltonian, the constraint
    structure and the Monte Carlo machinery are all well defined regardless.
    """
    if Lx < 1 or Ly < 1:
        raise LatticeError("torus extents must be positive")
    return _build(LatticeSpec(Lx), Lx, Ly)


def _build(spec: LatticeSpec, Lx: int, Ly: int) -> Lattice:
    n_cells = Lx * Ly
    n_tri = 2 * n_cells
    n = 3 * n_tri

    def vid(a, b):
        return (b % Ly) * Lx + (a % Lx)

    def cell(a, b):
        return (b % Ly) * Lx + (a % Lx)

    def qubit(face, a, b, corner):
        return 3 * (2 * cell(a, b) + face) + corner

    vertex_color = np.array([(a - b) % 3 for b in range(Ly) for a in range(Lx)], dtype=np.int8)

    qubit_triangle = np.repeat(np.arange(n_tri), 3)
    qubit_vertex = np.empty(n, dtype=np.int64)
    # unwrapped positions, anchored at the qubit's own vertex
    qubit_position = np.empty((n, 2))
    for b in range(Ly):
        for a in range(Lx):
            for face, corners in enumerate((_UP, _DOWN)):
                centroid = np.array([sum(c[0] for c in corners), sum(c[1] for c in corners)]) / 3.0
                for k, (da, db) in enumerate(corners):
                    q = qubit(face, a, b, k)
                    va, vb = (a + da) % Lx, (b + db) % Ly
                    qubit_vertex[q] = vid(va, vb)
                    qubit_position[q] = np.array([va, vb]) + _QUBIT_INSET * (centroid - (da, db))

    tri_qubits = np.arange(n).reshape(n_tri, 3)
    tri_zgens = np.arange(n).reshape(n_tri, 3)

    z_pairs = np.empty((n, 2), dtype=np.int64)
    for t in range(n_tri):
        for k in range(3):
            z_pairs[3 * t + k] = (3 * t + k, 3 * t + (k + 1) % 3)

    x_pairs, y_pairs, edges = [], [], []
    for b in range(Ly):
        for a in range(Lx):
            # edge e1: (a,b)-(a+1,b), faces up(a,b) and down(a,b-1)
            x_pairs.append((qubit(0, a, b, 0), qubit(1, a, b - 1, 2)))
            y_pairs.append((qubit(0, a, b, 1), qubit(1, a, b - 1, 1)))
            # edge e2: (a,b)-(a,b+1), faces up(a,b) and down(a-1,b)
            y_pairs.append((qubit(0, a, b, 0), qubit(1, a - 1, b, 0)))
            x_pairs.append((qubit(0, a, b, 2), qubit(1, a - 1, b, 1)))
            # edge e3: (a+1,b)-(a,b+1), faces up(a,b) and down(a,b)
            x_pairs.append((qubit(0, a, b, 1), qubit(1, a, b, 0)))
            y_pairs.append((qubit(0, a, b, 2), qubit(1, a, b, 2)))
            edges.append((vid(a, b), vid(a + 1, b)))
            edges.append((vid(a, b), vid(a, b + 1)))
            edges.append((vid(a + 1, b), vid(a, b + 1)))
    x_pairs = np.array(x_pairs, dtype=np.int64)
    y_pairs = np.array(y_pairs, dtype=np.int64)

    gen_qubits = np.concatenate([z_pairs, x_pairs, y_pairs])
    gen_kind = np.concatenate([
        np.full(n, KIND_Z), np.full(len(x_pairs), KIND_X), np.full(len(y_pairs), KIND_Y)
    ]).astype(np.int8)
    # links join two qubits at the same vertex, so the midpoint is taken between unwrapped positions
    gen_position = 0.5 * (qubit_position[gen_qubits[:, 0]] + qubit_position[gen_qubits[:, 1]])
    gen_color = np.where(
        gen_kind == KIND_Z, -1, vertex_color[qubit_vertex[gen_qubits[:, 0]]]
    ).astype(np.int8)

    spins = _spin_registry(n, gen_kind, gen_qubits, gen_position, gen_color,
                           qubit_position, vertex_color[qubit_vertex], tri_qubits)

    return Lattice(
        spec=spec,
        shape=(Lx, Ly),
        vertex_color=vertex_color,
        qubit_triangle=qubit_triangle,
        qubit_vertex=qubit_vertex,
        qubit_position=qubit_position,
        gen_kind=gen_kind,
        gen_qubits=gen_qubits,
        gen_position=gen_position,
        gen_color=gen_color,
        tri_qubits=tri_qubits,
        tri_zgens=tri_zgens,
        spins=spins,
        _edges=edges,
    )


def _spin_registry(n, gen_kind, gen_qubits, gen_position, gen_color,
                   qubit_position, qubit_color, tri_qubits) -> SpinRegistry:
    x_gens = np.flatnonzero(gen_kind == KIND_X)
    y_gens = np.flatnonzero(gen_kind == KIND_Y)
    link_gens = np.concatenate([x_gens, y_gens])

    color = np.concatenate([gen_color[link_gens], qubit_color]).astype(np.int8)
    position = np.concatenate([gen_position[link_gens], qubit_position])

    qubit_spins = np.full((n, 3), -1, dtype=np.int64)
    for s, g in enumerate(link_gens):
        slot = 0 if gen_kind[g] == KIND_X else 1
        for q in gen_qubits[g]:
            qubit_spins[q, slot] = s
    qubit_spins[:, 2] = n + np.arange(n)

    return SpinRegistry(
        n_qubits=n,
        x_spins=x_gens,
        y_spins=y_gens,
        zz_spins=np.arange(n),
        color=color,
        position=position,
        qubit_spins=qubit_spins,
        constraint_groups=n + tri_qubits,
    )


def validate_lattice(lat: Lattice) -> list[str]:
    """Return every violated structural invariant (empty when the lattice is sound)."""
    out = []
    n = lat.n_qubits
    if n != 3 * lat.n_triangles:
        out.append(f"qubit count {n} != 3 x triangle count {lat.n_triangles}")

    incident = [[] for _ in range(n)]
    for g in range(lat.n_generators):
        for q in lat.gen_qubits[g]:
            if 0 <= q < n:
                incident[q].append(int(lat.gen_kind[g]))
    for q in range(n):
        kinds = sorted(incident[q])
        if kinds != [KIND_X, KIND_Y, KIND_Z, KIND_Z]:
            names = "".join(KIND_NAMES[k] for k in kinds)
            out.append(f"qubit {q} has generator kinds {{{names}}}, expected {{X,Y,Z,Z}}")

    tri = lat.qubit_triangle
    for g in range(lat.n_generators):
        q0, q1 = lat.gen_qubits[g]
        if q0 == q1:
            out.append(f"generator {g} acts twice on qubit {q0}")
            continue
        same = tri[q0] == tri[q1]
        if lat.gen_kind[g] == KIND_Z and not same:
            out.append(f"Z generator spans two triangles: generator {g} ({q0}, {q1})")
        if lat.gen_kind[g] != KIND_Z and same:
            out.append(f"{KIND_NAMES[lat.gen_kind[g]]} generator {g} stays inside triangle {tri[q0]}")

    for t in range(lat.n_triangles):
        zq = {int(q) for g in lat.tri_zgens[t] for q in lat.gen_qubits[g]}
        if zq != {int(q) for q in lat.tri_qubits[t]}:
            out.append(f"triangle {t}: Z generators do not cover its qubits")

    vc = lat.vertex_color
    for u, w in lat.vertex_neighbors():
        if vc[u] == vc[w]:
            out.append(f"adjacent vertices share color: {u}, {w} ({COLORS[vc[u]]})")
    qcol = vc[lat.qubit_vertex]
    for t in range(lat.n_triangles):
        if len(set(qcol[lat.tri_qubits[t]].tolist())) != 3:
            out.append(f"triangle {t} does not touch three distinct colors")
    for g in np.flatnonzero(lat.gen_kind != KIND_Z):
        q0, q1 = lat.gen_qubits[g]
        if qcol[q0] != qcol[q1]:
            out.append(f"link {g} joins qubits of different colors")

    out.extend(_validate_registry(lat))
    return out


def _validate_registry(lat: Lattice) -> list[str]:
    out = []
    reg = lat.spins
    n = lat.n_qubits
    if len(reg.x_spins) * 2 != n or len(reg.y_spins) * 2 != n:
        out.append(f"link spin counts ({len(reg.x_spins)}, {len(reg.y_spins)}) != n/2 with n={n}")
    if len(reg.zz_spins) != n:
        out.append(f"zz spin count {len(reg.zz_spins)} != n={n}")

    groups = np.sort(reg.constraint_groups.ravel())
    if not np.array_equal(groups, n + np.arange(n)):
        out.append("zz constraint groups do not partition the zz spins")
    for t, grp in enumerate(reg.constraint_groups):
        if sorted(int(s) - n for s in grp) != sorted(int(q) for q in lat.tri_qubits[t]):
            out.append(f"constraint group {t} does not match triangle {t}")

    refs = np.zeros(reg.n_links, dtype=np.int64)
    for q in range(n):
        for slot in (0, 1):
            s = reg.qubit_spins[q, slot]
            if 0 <= s < reg.n_links:
                refs[s] += 1
            else:
                out.append(f"qubit {q} has no {'xy'[slot]} spin")
    for s in np.flatnonzero(refs != 2):
        out.append(f"link spin {s} referenced by {refs[s]} qubits, expected 2")

    counts = np.bincount(reg.color, minlength=3)
    if not (counts[0] == counts[1] == counts[2]):
        out.append(f"sublattice sizes differ: {dict(zip(COLORS, counts.tolist()))}")
    return out


def sublattice_members(lat: Lattice, color) -> np.ndarray:
    return np.flatnonzero(lat.spins.color == _color_index(color))


def cartesian(position: np.ndarray) -> np.ndarray:
    position = np.asarray(position, dtype=float)
    return np.stack([position[..., 0] + 0.5 * position[..., 1],
                     (np.sqrt(3) / 2) * position[..., 1]], axis=-1)


def to_dict(lat: Lattice) -> dict:
    reg = lat.spins
    return {
        "format": "tsccmc-lattice",
        "version": FORMAT_VERSION,
        "spec": {"L": int(lat.spec.L), "boundary": lat.spec.boundary, "shape": list(lat.shape)},
        "qubits": [
            {"id": q, "triangle": int(lat.qubit_triangle[q]), "vertex": int(lat.qubit_vertex[q]),
             "position": [round(float(x), 12) for x in lat.qubit_position[q]]}
            for q in range(lat.n_qubits)
        ],
        "generators": [
            {"id": g.id, "kind": g.kind, "qubits": list(g.qubit_pair),
             "position": [round(x, 12) for x in g.position], "color": g.color}
            for g in (lat.generator(i) for i in range(lat.n_generators))
        ],
        "spins": {
            "x_spins": reg.x_spins.tolist(),
            "y_spins": reg.y_spins.tolist(),
            "zz_spins": reg.zz_spins.tolist(),
            "color": [COLORS[c] for c in reg.color],
            "position": [[round(float(x), 12) for x in p] for p in reg.position],
            "qubit_spins": reg.qubit_spins.tolist(),
        },
        "constraint_groups": reg.constraint_groups.tolist(),
    }


def dumps(lat: Lattice) -> str:
    """Canonical serialization: identical specs give identical bytes."""
    return json.dumps(to_dict(lat), sort_keys=True, separators=(",", ":"))


def fingerprint(lat: Lattice) -> str:
    return hashlib.sha256(dumps(lat).encode()).hexdigest()
