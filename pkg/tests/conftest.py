import numpy as np
import pytest

from tsccmc.engine import SamplerModel, tau_bits
from tsccmc.lattice import build_lattice, small_instance
from tsccmc.model import compile_interactions, sample_disorder


class Instance:
    """Lattice, couplings, disorder and the flat sampler model of one test system."""

    def __init__(self, lat, p=0.0, seed=0):
        self.lat = lat
        self.table = compile_interactions(lat)
        self.disorder = sample_disorder(lat, p, seed)
        self.model = SamplerModel.build(lat, self.table)
        self.taus = tau_bits(self.disorder)


@pytest.fixture(scope="session")
def lat6():
    return build_lattice(6)


@pytest.fixture(scope="session")
def tiny():
    """1x1 torus: 6 qubits, 2 triangles, 10 free spins."""
    return Instance(small_instance(1, 1), p=0.3, seed=5)


@pytest.fixture(scope="session")
def small():
    """2x1 torus: 20 free spins, the largest enumerable shape."""
    return Instance(small_instance(2, 1), p=0.1, seed=11)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE = {}


def record_criterion(number: int, ok: bool, detail: str):
    """Store one acceptance line; printed in the terminal summary and returned for asserting."""
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE[number] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
