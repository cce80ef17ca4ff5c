import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tsccmc.lattice import (COLORS, KIND_X, KIND_Y, KIND_Z, LatticeError, LatticeSpec, build_lattice,
                            cartesian, dumps, fingerprint, small_instance, sublattice_members,
                            validate_lattice)

VALID_L = [3, 6, 9, 12]


@pytest.mark.parametrize("L", VALID_L)
def test_counts(L):
    lat = build_lattice(L)
    n = lat.n_qubits
    assert lat.n_triangles == 2 * L * L
    assert n == 3 * lat.n_triangles == 6 * L * L
    assert len(lat.spins.x_spins) == len(lat.spins.y_spins) == n // 2
    assert len(lat.spins.zz_spins) == n
    assert lat.spins.constraint_groups.shape == (lat.n_triangles, 3)
    assert np.sum(lat.gen_kind == KIND_Z) == n


@pytest.mark.parametrize("L", VALID_L)
def test_valid_lattice_has_no_violations(L):
    assert validate_lattice(build_lattice(L)) == []


def test_minimum_size_is_three():
    lat = build_lattice(3)
    assert validate_lattice(lat) == []
    assert lat.n_qubits % 2 == 0


@pytest.mark.parametrize("L", [0, 1, 2, 4, 5, 7, 10])
def test_invalid_sizes_rejected(L):
    with pytest.raises(LatticeError, match="L"):
        build_lattice(L)


def test_spec_violations_name_constraint():
    assert any("mod 3" in v for v in LatticeSpec(4).violations())
    assert any(">= 3" in v for v in LatticeSpec(0).violations())
    assert LatticeSpec(6).violations() == []


def test_degree_invariant(lat6):
    kinds = [[] for _ in range(lat6.n_qubits)]
    for g, (a, b) in enumerate(lat6.gen_qubits):
        kinds[a].append(lat6.gen_kind[g])
        kinds[b].append(lat6.gen_kind[g])
    for k in kinds:
        assert sorted(k) == [KIND_X, KIND_Y, KIND_Z, KIND_Z]


def test_generator_locality(lat6):
    tri = lat6.qubit_triangle
    for g in range(lat6.n_generators):
        a, b = lat6.gen_qubits[g]
        assert (tri[a] == tri[b]) == (lat6.gen_kind[g] == KIND_Z)


def test_link_spins_referenced_twice(lat6):
    refs = np.bincount(lat6.spins.qubit_spins[:, :2].ravel(), minlength=lat6.spins.n_links)
    assert np.all(refs == 2)


def test_constraint_groups_partition_zz(lat6):
    n = lat6.n_qubits
    groups = lat6.spins.constraint_groups
    assert sorted(groups.ravel().tolist()) == list(range(n, 2 * n))
    for t, grp in enumerate(groups):
        assert sorted(grp - n) == sorted(lat6.tri_qubits[t])


def test_adjacent_triangles_differ_in_color(lat6):
    # triangles joined by an X or Y link carry qubits at differently colored vertices
    vc = lat6.vertex_color
    for t in range(lat6.n_triangles):
        assert len(set(vc[lat6.qubit_vertex[lat6.tri_qubits[t]]].tolist())) == 3
    for u, w in lat6.vertex_neighbors():
        assert vc[u] != vc[w]


def test_z_generator_fault_detected():
    lat = build_lattice(6)
    g = int(np.flatnonzero(lat.gen_kind == KIND_Z)[0])
    other = int(np.flatnonzero(lat.qubit_triangle != lat.qubit_triangle[lat.gen_qubits[g, 0]])[0])
    lat.gen_qubits[g, 1] = other
    assert any("Z generator spans two triangles" in v for v in validate_lattice(lat))


def test_recolor_fault_detected():
    lat = build_lattice(6)
    u, w = lat.vertex_neighbors()[0]
    lat.vertex_color[u] = lat.vertex_color[w]
    assert any("adjacent vertices share color" in v for v in validate_lattice(lat))


@pytest.mark.parametrize("L", [3, 6, 9])
def test_sublattices_partition(L):
    lat = build_lattice(L)
    classes = [sublattice_members(lat, c) for c in COLORS]
    assert len({len(c) for c in classes}) == 1
    allm = np.concatenate(classes)
    assert len(allm) == lat.spins.n_spins
    assert len(np.unique(allm)) == lat.spins.n_spins


def test_color_relabel_swaps_classes(lat6):
    a = sublattice_members(lat6, "A")
    b = sublattice_members(lat6, "B")
    relabeled = lat6.spins.color.copy()
    relabeled[lat6.spins.color == 0] = 1
    relabeled[lat6.spins.color == 1] = 0
    np.testing.assert_array_equal(np.flatnonzero(relabeled == 1), a)
    np.testing.assert_array_equal(np.flatnonzero(relabeled == 0), b)


def _periodic_distance(lat, x, y):
    """Euclidean distance on the torus between oblique coordinates x (m, 2) and y (k, 2)."""
    Lx, Ly = lat.shape
    d = x[:, None, :] - y[None, :, :]
    best = np.full(d.shape[:2], np.inf)
    for sx in (-1, 0, 1):
        for sy in (-1, 0, 1):
            shifted = d + np.array([sx * Lx, sy * Ly])
            best = np.minimum(best, np.linalg.norm(cartesian(shifted), axis=-1))
    return best


def test_class_members_nearest_to_own_color(lat6):
    # brute force: every spin's nearest vertex (periodic metric) has the spin's color
    Lx, Ly = lat6.shape
    vx, vy = np.meshgrid(np.arange(Lx), np.arange(Ly))
    verts = np.stack([vx.ravel(), vy.ravel()], axis=1).astype(float)
    dist = _periodic_distance(lat6, lat6.spins.position, verts)
    nearest = lat6.vertex_color[np.argmin(dist, axis=1)]
    np.testing.assert_array_equal(nearest, lat6.spins.color)


def test_deterministic_serialization():
    a, b = build_lattice(6), build_lattice(6)
    assert dumps(a) == dumps(b)
    assert fingerprint(a) == fingerprint(b)
    assert fingerprint(a) != fingerprint(build_lattice(9))
    doc = json.loads(dumps(a))
    assert doc["spec"]["L"] == 6
    assert len(doc["qubits"]) == a.n_qubits


@settings(max_examples=10, deadline=None)
@given(Lx=st.integers(1, 4), Ly=st.integers(1, 4))
def test_small_instances_keep_local_structure(Lx, Ly):
    # colors may be improper on tiny tori, but the degree and locality structure holds
    lat = small_instance(Lx, Ly)
    problems = validate_lattice(lat)
    assert not any("generator kinds" in p or "spans two triangles" in p for p in problems)
    assert lat.n_free_spins == lat.n_qubits + 2 * lat.n_triangles
