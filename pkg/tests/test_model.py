import dataclasses
from decimal import Decimal, getcontext
from itertools import product

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tsccmc.lattice import KIND_X, build_lattice, small_instance
from tsccmc.model import (MAX_ENUMERATION_SPINS, PAULI_I, PAULI_X, PAULI_Y, PAULI_Z, CompileError,
                          DisorderRealization, EnumerationTooLarge, NishimoriPoint, PauliString,
                          clean_disorder, compile_interactions, energy, enumerate_thermal,
                          nishimori_p, nishimori_temperature, sample_disorder, state_energies,
                          tau_from_errors, verify_gauge_fixing)

PAULI_MATRICES = [
    np.eye(2),
    np.array([[0, 1], [1, 0]]),
    np.array([[0, -1j], [1j, 0]]),
    np.array([[1, 0], [0, -1]]),
]


def _matrix(labels):
    out = np.eye(1)
    for w in labels:
        out = np.kron(out, PAULI_MATRICES[w])
    return out


def _eq4_energy(lat, tau, spins):
    """Direct transcription: -sum_j tau^x s^x s^zz + tau^y s^y s^zz + tau^z s^x s^y."""
    n = lat.n_qubits
    total = 0
    for j in range(n):
        sx, sy = spins[lat.spins.qubit_spins[j, 0]], spins[lat.spins.qubit_spins[j, 1]]
        szz = spins[n + j]
        total -= tau[j, 0] * sx * szz + tau[j, 1] * sy * szz + tau[j, 2] * sx * sy
    return total


def _random_state(lat, rng):
    """Random +-1 spin vector obeying the triangle constraints."""
    n = lat.n_qubits
    s = rng.choice([-1, 1], size=2 * n)
    for grp in lat.spins.constraint_groups:
        s[grp[2]] = s[grp[0]] * s[grp[1]]
    return s


# --- Pauli algebra ----------------------------------------------------------

@pytest.mark.parametrize("n", [1, 2, 3])
def test_symplectic_commutation_matches_matrices(n):
    labels = list(product(range(4), repeat=n))
    for a in labels:
        for b in labels[:64]:
            A, B = _matrix(a), _matrix(b)
            commute = np.allclose(A @ B, B @ A)
            pa = PauliString.from_sites(n, dict(enumerate(a)))
            pb = PauliString.from_sites(n, dict(enumerate(b)))
            assert pa.commutes(pb) == commute


# --- interaction table ------------------------------------------------------

@pytest.mark.parametrize("L", [3, 6])
def test_three_terms_per_qubit(L):
    lat = build_lattice(L)
    table = compile_interactions(lat)
    assert table.n_terms == 3 * lat.n_qubits
    n = lat.n_qubits
    qs = lat.spins.qubit_spins
    for j in range(n):
        assert sorted(table.pairs[j, 0]) == sorted([qs[j, 0], n + j])
        assert sorted(table.pairs[j, 1]) == sorted([qs[j, 1], n + j])
        assert sorted(table.pairs[j, 2]) == sorted([qs[j, 0], qs[j, 1]])


def test_removed_x_generator_fails_compilation():
    lat = build_lattice(3)
    g = int(np.flatnonzero(lat.gen_kind == KIND_X)[0])
    keep = np.arange(lat.n_generators) != g
    broken = dataclasses.replace(lat, gen_kind=lat.gen_kind[keep], gen_qubits=lat.gen_qubits[keep],
                                 gen_position=lat.gen_position[keep], gen_color=lat.gen_color[keep])
    with pytest.raises(CompileError, match=f"qubit {lat.gen_qubits[g, 0]}"):
        compile_interactions(broken)


def test_spectrum_matches_transcription(small):
    lat, tau = small.lat, small.disorder.tau
    E = state_energies(lat, small.table, small.disorder)
    # independent enumeration of the same constrained states
    rng = np.random.default_rng(0)
    idx = rng.choice(len(E), size=400, replace=False)
    n, nt = lat.n_qubits, lat.n_triangles
    patterns = [(0, 0, 0), (1, 0, 1), (0, 1, 1), (1, 1, 0)]
    for i in idx:
        bits = np.zeros(2 * n, dtype=int)
        bits[:n] = (i >> np.arange(n)) & 1
        for t in range(nt):
            bits[n + lat.tri_qubits[t]] = patterns[(i >> (n + 2 * t)) & 3]
        assert E[i] == _eq4_energy(lat, tau, 1 - 2 * bits)


# --- disorder ---------------------------------------------------------------

def test_clean_disorder(lat6):
    d = sample_disorder(lat6, 0.0, 1)
    assert np.all(d.tau == 1)
    assert np.all(clean_disorder(lat6).tau == 1)


def test_tau_from_error_labels():
    tau = tau_from_errors(np.array([PAULI_I, PAULI_X, PAULI_Y, PAULI_Z]))
    np.testing.assert_array_equal(tau, [[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]])


@pytest.mark.parametrize("p, expected", [(0.06, [0.94, 0.02, 0.02, 0.02]), (0.75, [0.25] * 4)])
def test_disorder_frequencies(p, expected):
    n = 10 ** 6
    d = sample_disorder(n, p, seed=2024)
    freq = np.bincount(d.errors, minlength=4) / n
    sigma = np.sqrt(np.array(expected) * (1 - np.array(expected)) / n)
    assert np.all(np.abs(freq - expected) < 5 * sigma)
    assert np.all(d.tau.prod(axis=1) == 1)


def test_disorder_deterministic_and_serializable():
    a = sample_disorder(500, 0.1, seed=9)
    b = sample_disorder(500, 0.1, seed=9)
    np.testing.assert_array_equal(a.errors, b.errors)
    c = DisorderRealization.from_json(a.to_json())
    np.testing.assert_array_equal(c.errors, a.errors)
    assert (c.p, c.seed) == (a.p, a.seed)


@pytest.mark.parametrize("p", [-0.1, 1.5])
def test_disorder_rejects_bad_p(p):
    with pytest.raises(ValueError):
        sample_disorder(10, p, 0)


# --- energy -----------------------------------------------------------------

def test_all_up_energy(lat6):
    table = compile_interactions(lat6)
    spins = np.ones(2 * lat6.n_qubits, dtype=int)
    assert energy(table, clean_disorder(lat6), spins, lat6) == -3 * lat6.n_qubits


@pytest.fixture(scope="module")
def l3():
    lat = build_lattice(3)
    return lat, compile_interactions(lat)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), p=st.floats(0, 0.75), pair=st.sampled_from([(0, 1), (0, 2), (1, 2)]))
def test_two_class_flip_symmetry(l3, seed, p, pair):
    lat, table = l3
    rng = np.random.default_rng(seed)
    d = sample_disorder(lat, p, seed)
    s = _random_state(lat, rng)
    flipped = s * np.where(np.isin(lat.spins.color, pair), -1, 1)
    assert energy(table, d, flipped, lat) == energy(table, d, s, lat)
    # the pairing that forces <m_P> = 0 for each flipped class
    for c in pair:
        mask = lat.spins.color == c
        assert flipped[mask].sum() == -s[mask].sum()


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1))
def test_energy_matches_transcription(l3, seed):
    lat, table = l3
    rng = np.random.default_rng(seed)
    d = sample_disorder(lat, 0.3, seed)
    s = _random_state(lat, rng)
    assert energy(table, d, s, lat) == _eq4_energy(lat, d.tau, s)


def test_energy_rejects_bad_states(l3):
    lat, table = l3
    d = clean_disorder(lat)
    with pytest.raises(ValueError, match="shape"):
        energy(table, d, np.ones(5), lat)
    s = np.ones(2 * lat.n_qubits, dtype=int)
    s[lat.spins.constraint_groups[0, 0]] = -1
    with pytest.raises(ValueError, match="constraint"):
        energy(table, d, s, lat)


# --- Nishimori line -----------------------------------------------------------

def _nishimori_decimal(p):
    getcontext().prec = 50
    p = Decimal(p)
    return Decimal(4) / (3 * (1 - p) / p).ln()


@pytest.mark.parametrize("p, T", [(0.055, 1.0146), (0.048, 0.9789)])
def test_nishimori_reference_values(p, T):
    exact = float(_nishimori_decimal(str(p)))
    assert nishimori_temperature(p) == pytest.approx(exact, rel=1e-14)
    assert abs(exact - T) < 1e-4


@settings(max_examples=200)
@given(p=st.floats(1e-6, 0.749))
def test_nishimori_round_trip(p):
    assert abs(nishimori_p(nishimori_temperature(p)) - p) < 1e-12


def test_nishimori_point_beta():
    pt = NishimoriPoint.at(0.05)
    assert 4 * pt.beta == pytest.approx(np.log(0.95 / (0.05 / 3)), abs=1e-14)


def test_nishimori_small_p_goes_to_zero():
    assert nishimori_temperature(1e-12) < 0.15
    assert nishimori_temperature(1e-6) < nishimori_temperature(1e-3)


@pytest.mark.parametrize("p", [0.0, -0.1, 0.75, 0.9])
def test_nishimori_domain(p):
    with pytest.raises(ValueError):
        nishimori_temperature(p)


# --- exact enumeration -------------------------------------------------------

def test_enumeration_beta_zero_is_plain_mean(small):
    ex = enumerate_thermal(small.lat, small.table, small.disorder, 0.0)
    E = state_energies(small.lat, small.table, small.disorder)
    assert ex.E[0] == pytest.approx(E.mean(), abs=1e-9)


def test_enumeration_ground_state_limit():
    lat = small_instance(2, 1)
    ex = enumerate_thermal(lat, compile_interactions(lat), clean_disorder(lat), 20.0)
    assert ex.E[0] == pytest.approx(-3 * lat.n_qubits, abs=1e-6)


def test_enumeration_bound(lat6):
    with pytest.raises(EnumerationTooLarge, match=str(MAX_ENUMERATION_SPINS)):
        enumerate_thermal(lat6, compile_interactions(lat6), clean_disorder(lat6), 1.0)


def test_chi0_is_np_times_m2(small):
    ex = enumerate_thermal(small.lat, small.table, small.disorder, [0.3, 1.0])
    np.testing.assert_allclose(ex.chi0, ex.m2 * ex.sizes)


# --- gauge fixing -------------------------------------------------------------

@pytest.mark.parametrize("errors", [None, {0: PAULI_X}, {2: PAULI_Y}, {4: PAULI_Z}])
def test_gauge_fixing_tiny(errors):
    lat = small_instance(1, 1)
    e = np.zeros(lat.n_qubits, dtype=np.int8)
    for q, w in (errors or {}).items():
        e[q] = w
    report = verify_gauge_fixing(lat, DisorderRealization(e, p=0.0))
    assert report.equivalent, report.first_mismatch
    assert report.degeneracy_factor == 2 ** lat.n_triangles == 4


@pytest.mark.parametrize("seed", range(5))
def test_gauge_fixing_random_disorder(seed):
    lat = small_instance(1, 1)
    assert verify_gauge_fixing(lat, sample_disorder(lat, 0.5, seed)).equivalent


def test_gauge_fixing_detects_wrong_table():
    lat = small_instance(1, 1)
    table = compile_interactions(lat)
    pairs = table.pairs.copy()
    pairs[0, 2] = pairs[0, 0]
    bad = dataclasses.replace(table, pairs=pairs)
    d = DisorderRealization(np.array([PAULI_X, 0, 0, 0, 0, 0], dtype=np.int8), p=0.0)
    report = verify_gauge_fixing(lat, d, bad)
    assert not report.equivalent
    assert report.first_mismatch is not None


@pytest.mark.slow
def test_gauge_fixing_two_cell_torus():
    lat = small_instance(2, 1)
    report = verify_gauge_fixing(lat, sample_disorder(lat, 0.3, 1))
    assert report.equivalent
    assert report.degeneracy_factor == 16
