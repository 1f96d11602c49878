import math

import mpmath
import numpy as np
import pytest
from scipy.special import comb

from app.core.error_handling import DomainError, ValidationError
from bath_models import BathSpec, bath_spectrum, density_of_states, gibbs_weights


# ============================================================
# SPECTRA
# ============================================================

def test_ladder_spectrum():
    spectrum = bath_spectrum(BathSpec(model="ladder", n_states=5, spectral_width=4.0))
    np.testing.assert_allclose(spectrum.energies, [0, 1, 2, 3, 4], atol=1e-15)
    assert spectrum.n_states == 5


def test_single_state_ladder_sits_at_zero():
    spectrum = bath_spectrum(BathSpec(model="ladder", n_states=1))
    np.testing.assert_array_equal(spectrum.energies, [0.0])


def test_spin_gas_subset_sums():
    spectrum = bath_spectrum(BathSpec(model="spin-gas", n_states=4, splittings=(1.0, 2.0)))
    np.testing.assert_array_equal(spectrum.energies, [0.0, 1.0, 2.0, 3.0])


def test_spin_gas_needs_power_of_two():
    with pytest.raises(ValidationError):
        BathSpec(model="spin-gas", n_states=6)
    with pytest.raises(ValidationError):
        BathSpec(model="spin-gas", n_states=8, splittings=(1.0, 2.0))


@pytest.mark.parametrize("ensemble", ["GUE", "GOE"])
def test_random_matrix_spans_width(ensemble):
    spectrum = bath_spectrum(BathSpec(model="random-matrix", n_states=64, spectral_width=2.5,
                                      seed=17, ensemble=ensemble))
    assert abs(spectrum.energies[0]) < 1e-12
    assert abs(spectrum.energies[-1] - 2.5) < 1e-12
    assert np.all(np.diff(spectrum.energies) >= 0)


def test_random_matrix_is_semicircle_shaped():
    spectrum = bath_spectrum(BathSpec(model="random-matrix", n_states=64, seed=4))
    counts = density_of_states(spectrum, 4).counts
    assert counts[1] + counts[2] > counts[0] + counts[3]


def test_random_matrix_is_seeded():
    a = bath_spectrum(BathSpec(model="random-matrix", n_states=16, seed=9)).energies
    b = bath_spectrum(BathSpec(model="random-matrix", n_states=16, seed=9)).energies
    c = bath_spectrum(BathSpec(model="random-matrix", n_states=16, seed=10)).energies
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_spectrum_is_read_only():
    spectrum = bath_spectrum(BathSpec())
    with pytest.raises(ValueError):
        spectrum.energies[0] = 1.0


def test_bath_spec_rejects_bad_input():
    with pytest.raises(ValidationError):
        BathSpec(model="fermi-sea")
    with pytest.raises(ValidationError):
        BathSpec(spectral_width=0.0)
    with pytest.raises(ValidationError):
        BathSpec(n_states=0)


def test_resizing_spin_gas_drops_explicit_splittings():
    spec = BathSpec(model="spin-gas", n_states=4, splittings=(1.0, 2.0))
    resized = spec.with_overrides(n_states=8)
    assert resized.splittings is None
    assert resized.n_particles == 3


# ============================================================
# GIBBS WEIGHTS
# ============================================================

def test_infinite_temperature_is_uniform():
    weights = gibbs_weights(bath_spectrum(BathSpec(model="ladder", n_states=4)), 0.0)
    np.testing.assert_allclose(weights.weights, 0.25)
    assert weights.partition == pytest.approx(4.0)


def test_two_state_ratio():
    weights = gibbs_weights(np.array([0.0, 1.0]), math.log(2))
    np.testing.assert_allclose(weights.weights, [2 / 3, 1 / 3], rtol=1e-14)
    assert weights.ground_weight == pytest.approx(2 / 3)


def test_weights_match_extended_precision():
    energies = bath_spectrum(BathSpec(model="ladder", n_states=5, spectral_width=4.0)).energies
    weights = gibbs_weights(energies, 1.0)

    with mpmath.workdps(40):
        terms = [mpmath.exp(-mpmath.mpf(float(e))) for e in energies]
        z = mpmath.fsum(terms)
        reference = [float(t / z) for t in terms]
        log_z = float(mpmath.log(z))

    np.testing.assert_allclose(weights.weights, reference, rtol=1e-14)
    assert weights.log_partition == pytest.approx(log_z, rel=1e-14)


def test_very_cold_bath_stays_finite():
    weights = gibbs_weights(np.array([0.0, 1.0, 2.0]), 5000.0)
    assert weights.weights[0] == 1.0
    assert weights.log_partition == 0.0


def test_unrepresentable_partition_is_none():
    weights = gibbs_weights(np.array([1000.0, 1001.0]), 1.0)
    assert weights.partition is None
    assert weights.log_partition == pytest.approx(-1000.0 + math.log1p(math.exp(-1.0)))
    assert weights.weights.sum() == pytest.approx(1.0)


def test_ground_weight_grows_as_bath_cools():
    spectrum = bath_spectrum(BathSpec(model="random-matrix", n_states=32, seed=9))
    ground = [gibbs_weights(spectrum, beta).ground_weight for beta in np.linspace(0.0, 40.0, 81)]
    assert ground[0] == pytest.approx(1 / 32)
    assert np.all(np.diff(ground) >= 0)


def test_beta_domain():
    with pytest.raises(DomainError):
        gibbs_weights(np.array([0.0, 1.0]), -0.1)
    with pytest.raises(DomainError):
        gibbs_weights(np.array([0.0, 1.0]), float("inf"))
    with pytest.raises(DomainError):
        gibbs_weights(np.array([0.0, 1.0]), 10.0, max_beta=5.0)


def test_mean_energy():
    weights = gibbs_weights(np.array([0.0, 2.0]), 0.0)
    assert weights.mean_energy(np.array([0.0, 2.0])) == pytest.approx(1.0)


# ============================================================
# DENSITY OF STATES
# ============================================================

def test_uniform_grid_density():
    dos = density_of_states(np.array([0.0, 1.0, 2.0, 3.0, 4.0]), 5)
    np.testing.assert_allclose(dos.widths, 0.8)
    np.testing.assert_allclose(dos.omega, 1.25)
    assert np.sum(dos.omega * dos.widths) == pytest.approx(5.0)


def test_single_energy_gets_one_bin():
    dos = density_of_states(np.array([2.0]), 8)
    assert dos.counts.tolist() == [1]
    np.testing.assert_allclose(dos.bin_edges, [1.5, 2.5])
    assert dos.centers[0] == 2.0


def test_spin_gas_density_is_binomial():
    spectrum = bath_spectrum(BathSpec(model="spin-gas", n_states=1024, spectral_width=10.0))
    dos = density_of_states(spectrum, 11)
    expected = [comb(10, m, exact=True) for m in range(11)]
    assert dos.counts.tolist() == expected
    assert dos.total_states == 1024


def test_spin_gas_density_grows_with_particle_count():
    peaks = {}
    for k in (8, 12):
        spectrum = bath_spectrum(BathSpec(model="spin-gas", n_states=2 ** k, spectral_width=12.0))
        peaks[k] = float(density_of_states(spectrum, 16).omega.max())
    assert peaks[12] > peaks[8]


def test_density_rejects_empty_input():
    with pytest.raises(ValidationError):
        density_of_states(np.array([]), 4)
    with pytest.raises(ValidationError):
        density_of_states(np.array([0.0, 1.0]), 0)
