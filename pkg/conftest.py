import os
import sys

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import numpy as np
import pytest

from bath_models import BathSpec, bath_spectrum
from dynamics import degeneracy_classes, eigendecompose
from hilbert_core import CompositeHamiltonian, CouplingSpec, SystemSpec, build_hamiltonian


def rabi_hamiltonian(coupling: float, delta: float) -> CompositeHamiltonian:
    """Two levels, one bath state, H = [[0, lambda], [lambda, delta]]."""
    matrix = np.array([[0.0, coupling], [coupling, delta]])
    return CompositeHamiltonian.from_matrix(matrix, SystemSpec.two_level(1.0), 1)


def rabi_p0(coupling: float, delta: float) -> float:
    return 1 - 2 * coupling ** 2 / (4 * coupling ** 2 + delta ** 2)


@pytest.fixture
def small_composite():
    """Random-matrix bath, N = 8, dense random coupling: (spectrum, H, eigensystem, classes)."""
    spectrum = bath_spectrum(BathSpec(model="random-matrix", n_states=8, seed=3))
    hamiltonian = build_hamiltonian(SystemSpec(), spectrum.energies, CouplingSpec(strength=0.2, seed=3))
    eig = eigendecompose(hamiltonian)
    return spectrum, hamiltonian, eig, degeneracy_classes(eig.frequencies)


@pytest.fixture
def output_dir(tmp_path):
    return tmp_path / "results"
