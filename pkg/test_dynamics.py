import math

import numpy as np
import pytest
from scipy import linalg

from app.core.error_handling import BasisIndexError, ConsistencyError, DomainError
from app.core.random_streams import random_stream
from bath_models import BathSpec, bath_spectrum, density_of_states, gibbs_weights
from conftest import rabi_hamiltonian, rabi_p0
from dynamics import (
    active_gaps,
    bath_energy_shift,
    degeneracy_classes,
    diagonal_ensemble,
    eigendecompose,
    evolve,
    f_binned,
    f_weights,
    f_weights_all_levels,
    initial_composite_state,
    time_average,
    time_average_samples,
)
from hilbert_core import CouplingSpec, SystemSpec, build_hamiltonian, partial_trace_bath, validate_density_matrix


def uncoupled(levels=(0.0, 10.0), n_bath=4, width=1.0):
    spectrum = bath_spectrum(BathSpec(model="ladder", n_states=n_bath, spectral_width=width))
    h = build_hamiltonian(SystemSpec(levels), spectrum.energies, CouplingSpec(strength=0.0))
    return spectrum, h, eigendecompose(h)


# ============================================================
# EIGENSYSTEM
# ============================================================

def test_uncoupled_frequencies_are_product_sums():
    _, h, eig = uncoupled()
    np.testing.assert_allclose(eig.frequencies, np.sort(h.bare_energies), atol=1e-14)
    np.testing.assert_allclose(np.abs(eig.transform), np.eye(8), atol=1e-14)


def test_rabi_eigenvalues():
    lam, delta = 0.3, 1.0
    eig = eigendecompose(rabi_hamiltonian(lam, delta))
    root = math.sqrt(delta ** 2 + 4 * lam ** 2)
    np.testing.assert_allclose(eig.frequencies, [(delta - root) / 2, (delta + root) / 2], atol=1e-14)


def test_reconstruction(small_composite):
    _, h, eig, _ = small_composite
    rebuilt = eig.from_eigenbasis(np.diag(eig.frequencies))
    assert np.max(np.abs(rebuilt - h.matrix)) < 1e-9 * np.linalg.norm(h.matrix, 2)


def test_phases_are_fixed(small_composite):
    _, _, eig, _ = small_composite
    pivots = np.argmax(np.abs(eig.transform), axis=1)
    anchors = eig.transform[np.arange(eig.dimension), pivots]
    np.testing.assert_allclose(anchors.imag, 0.0, atol=1e-15)
    assert np.all(anchors.real > 0)


def test_non_hermitian_rejected():
    with pytest.raises(DomainError):
        eigendecompose(np.array([[0.0, 1.0], [0.0, 1.0]]), n_levels=2, n_bath=1)


def test_level_block_range():
    eig = eigendecompose(rabi_hamiltonian(0.3, 1.0))
    with pytest.raises(BasisIndexError):
        eig.level_block(2)


# ============================================================
# STATES AND EVOLUTION
# ============================================================

def test_initial_state_placement():
    rho0 = initial_composite_state(0, np.array([0.75, 0.25]))
    np.testing.assert_array_equal(rho0.matrix, np.diag([0.75, 0.25, 0.0, 0.0]))
    np.testing.assert_allclose(partial_trace_bath(rho0, 2, 2).matrix, [[1, 0], [0, 0]])

    excited = initial_composite_state(1, gibbs_weights(np.zeros(3), 0.0))
    np.testing.assert_allclose(excited.populations(), [0, 0, 0, 1 / 3, 1 / 3, 1 / 3])


def test_initial_state_bad_level():
    with pytest.raises(BasisIndexError):
        initial_composite_state(2, np.array([1.0]))


def test_evolve_at_zero_is_identity(small_composite):
    _, _, eig, _ = small_composite
    rho0 = initial_composite_state(0, np.full(8, 1 / 8))
    assert evolve(rho0, eig, 0.0) is rho0


def test_uncoupled_state_is_stationary():
    spectrum, _, eig = uncoupled()
    rho0 = initial_composite_state(0, gibbs_weights(spectrum, 1.0))
    for t in (0.5, 3.0, 100.0):
        np.testing.assert_allclose(evolve(rho0, eig, t).matrix, rho0.matrix, atol=1e-12)


def test_evolve_matches_matrix_exponential():
    spectrum = bath_spectrum(BathSpec(model="random-matrix", n_states=8, seed=8))
    h = build_hamiltonian(SystemSpec(), spectrum.energies, CouplingSpec(strength=0.4, seed=8))
    eig = eigendecompose(h)
    rho0 = initial_composite_state(0, gibbs_weights(spectrum, 0.5))
    for t in random_stream(8, "times").uniform(0.0, 50.0, size=20):
        u = linalg.expm(1j * h.matrix * t)
        error = np.max(np.abs(evolve(rho0, eig, t).matrix - u @ rho0.matrix @ u.conj().T))
        assert error <= 1e-8, t


def test_evolution_invariants(small_composite):
    spectrum, _, eig, _ = small_composite
    rho0 = initial_composite_state(0, gibbs_weights(spectrum, 1.3))
    before = linalg.eigvalsh(rho0.matrix)
    rho_t = evolve(rho0, eig, 41.7).matrix
    assert abs(np.trace(rho_t) - 1) < 1e-9
    assert np.max(np.abs(rho_t - rho_t.conj().T)) < 1e-9
    np.testing.assert_allclose(linalg.eigvalsh(rho_t), before, atol=1e-9)


# ============================================================
# DEGENERACY CLASSES
# ============================================================

def test_distinct_frequencies_are_singletons():
    classes = degeneracy_classes([0.0, 1.0, 2.0], 1e-10)
    assert classes.labels.tolist() == [0, 1, 2]
    assert classes.size_histogram() == {1: 3}


def test_exact_degeneracy_is_grouped():
    classes = degeneracy_classes([0.0, 0.0, 1.0], 1e-10)
    assert classes.labels.tolist() == [0, 0, 1]
    assert [m.tolist() for m in classes.members()] == [[0, 1], [2]]
    assert classes.summary()["n_degenerate_classes"] == 1


def test_chained_class_is_counted():
    classes = degeneracy_classes([0.0, 0.6, 1.2, 5.0], 1.0)
    assert classes.labels.tolist() == [0, 0, 0, 1]
    assert classes.n_chained == 1
    assert classes.spreads[0] == pytest.approx(1.2)


def test_default_tolerance_scales_with_span():
    assert degeneracy_classes([0.0, 2.0]).tolerance == pytest.approx(2e-9)
    assert degeneracy_classes([3.0]).tolerance == pytest.approx(1e-9)


def test_uncoupled_spin_gas_classes_are_binomial():
    spectrum = bath_spectrum(BathSpec(model="spin-gas", n_states=8, spectral_width=3.0))
    h = build_hamiltonian(SystemSpec((0.0, 1.0)), spectrum.energies, CouplingSpec(strength=0.0))
    classes = degeneracy_classes(eigendecompose(h).frequencies)
    assert classes.sizes.tolist() == [1, 4, 6, 4, 1]


def test_inconsistent_partition_raises(small_composite):
    _, _, eig, _ = small_composite
    wrong = degeneracy_classes(eig.frequencies, tolerance=1e3)
    with pytest.raises(ConsistencyError):
        f_weights(eig, degeneracy_classes(np.arange(eig.dimension + 1, dtype=float)))
    rho0 = initial_composite_state(0, np.full(8, 1 / 8))
    assert diagonal_ensemble(eig, rho0, wrong).class_summary["n_classes"] == 1

    tampered = degeneracy_classes(eig.frequencies)
    object.__setattr__(tampered, "tolerance", 1e3)
    with pytest.raises(ConsistencyError):
        diagonal_ensemble(eig, rho0, tampered)


# ============================================================
# f WEIGHTS AND THE DIAGONAL ENSEMBLE
# ============================================================

def test_uncoupled_f_is_one():
    _, _, eig = uncoupled()
    f = f_weights(eig, degeneracy_classes(eig.frequencies))
    np.testing.assert_allclose(f, 1.0, atol=1e-14)


def test_f_sum_rule(small_composite):
    _, _, eig, classes = small_composite
    table = f_weights_all_levels(eig, classes)
    np.testing.assert_allclose(table.sum(axis=0), 1.0, atol=1e-10)


def test_f_matches_quadruple_loop(small_composite):
    _, _, eig, classes = small_composite
    t = eig.transform
    n = eig.n_bath
    labels = classes.labels
    expected = np.zeros(n)
    for j in range(n):
        total = 0.0
        for l in range(eig.dimension):
            for m in range(eig.dimension):
                if labels[l] != labels[m]:
                    continue
                for k in range(n):
                    total += np.conj(t[l, j]) * t[m, j] * t[l, k] * np.conj(t[m, k])
        expected[j] = total.real
    np.testing.assert_allclose(f_weights(eig, classes, n_bath=n), expected, atol=1e-10)


def test_probability_is_weighted_f(small_composite):
    spectrum, _, eig, classes = small_composite
    for beta in (0.0, 0.7, 4.0):
        weights = gibbs_weights(spectrum, beta)
        result = diagonal_ensemble(eig, initial_composite_state(0, weights), classes)
        assert abs(result.p0 - np.dot(weights.weights, result.f_weights)) < 1e-10
        assert validate_density_matrix(result.system_state).valid
        assert result.diagonal_contribution + result.offdiagonal_contribution == pytest.approx(result.p0)


def test_f_does_not_depend_on_temperature(small_composite):
    spectrum, _, eig, classes = small_composite
    cold = diagonal_ensemble(eig, initial_composite_state(0, gibbs_weights(spectrum, 5.0)), classes)
    hot = diagonal_ensemble(eig, initial_composite_state(0, gibbs_weights(spectrum, 0.1)), classes)
    assert cold.f_weights.tobytes() == hot.f_weights.tobytes()


def test_uncoupled_ground_state_never_leaves():
    spectrum, _, eig = uncoupled()
    result = diagonal_ensemble(eig, initial_composite_state(0, gibbs_weights(spectrum, 1.0)),
                               degeneracy_classes(eig.frequencies))
    assert result.p0 == pytest.approx(1.0, abs=1e-14)


@pytest.mark.parametrize("delta", [0.0, 0.5, 1.0, 2.0, 5.0])
@pytest.mark.parametrize("lam", [0.01, 0.05, 0.1, 0.3, 1.0])
def test_rabi_closed_form(lam, delta):
    eig = eigendecompose(rabi_hamiltonian(lam, delta))
    result = diagonal_ensemble(eig, initial_composite_state(0, np.array([1.0])),
                               degeneracy_classes(eig.frequencies))
    assert result.p0 == pytest.approx(rabi_p0(lam, delta), abs=1e-10)
    if delta == 0.0:
        assert result.p0 == pytest.approx(0.5, abs=1e-14)


def test_bath_energy_shift_vanishes_without_coupling():
    spectrum, _, eig = uncoupled()
    weights = gibbs_weights(spectrum, 2.0)
    result = diagonal_ensemble(eig, initial_composite_state(0, weights), degeneracy_classes(eig.frequencies))
    shift = bath_energy_shift(result, weights, spectrum.energies)
    assert shift.shift == pytest.approx(0.0, abs=1e-14)
    assert shift.initial == pytest.approx(weights.mean_energy(spectrum.energies))


# ============================================================
# BINNED f(x)
# ============================================================

def test_single_bin_is_the_mean():
    energies = np.array([0.0, 1.0, 2.0])
    profile = f_binned(np.array([0.2, 0.4, 0.9]), energies, density_of_states(energies, 1))
    assert profile.f_mean.tolist() == pytest.approx([0.5])


def test_aligned_bins_reproduce_f():
    energies = bath_spectrum(BathSpec(model="ladder", n_states=5, spectral_width=4.0)).energies
    f = np.array([0.9, 0.8, 0.7, 0.6, 0.5])
    profile = f_binned(f, energies, density_of_states(energies, 5))
    np.testing.assert_allclose(profile.f_mean, f)
    assert profile.absent_bins == 0


def test_empty_bins_are_absent():
    energies = np.array([0.0, 0.1, 4.0])
    profile = f_binned(np.array([1.0, 0.5, 0.25]), energies, density_of_states(energies, 4))
    assert profile.present.tolist() == [True, False, False, True]
    assert np.isnan(profile.f_mean[1]) and np.isnan(profile.f_mean[2])
    assert profile.f_mean[0] == pytest.approx(0.75)


# ============================================================
# FINITE-TIME AVERAGE
# ============================================================

def test_uncoupled_time_average_is_initial_state():
    spectrum, _, eig = uncoupled()
    rho0 = initial_composite_state(0, gibbs_weights(spectrum, 1.0))
    averaged = time_average(rho0, eig, 50.0, 16)
    np.testing.assert_allclose(averaged.matrix, [[1, 0], [0, 0]], atol=1e-12)
    assert active_gaps(eig, rho0).minimum is None


def test_rabi_time_average():
    lam, delta = 0.3, 1.0
    eig = eigendecompose(rabi_hamiltonian(lam, delta))
    rho0 = initial_composite_state(0, np.array([1.0]))
    gaps = active_gaps(eig, rho0)
    t_avg = 1e3 * 2 * np.pi / gaps.minimum
    averaged = time_average(rho0, eig, t_avg, time_average_samples(t_avg, gaps.maximum))
    assert abs(averaged.matrix[0, 0].real - rabi_p0(lam, delta)) < 1e-3


def test_time_average_converges_to_diagonal_ensemble(small_composite):
    spectrum, _, eig, classes = small_composite
    rho0 = initial_composite_state(0, gibbs_weights(spectrum, 1.0))
    target = diagonal_ensemble(eig, rho0, classes).p0
    gaps = active_gaps(eig, rho0)
    t_avg = 1e3 / gaps.minimum
    p_bar = time_average(rho0, eig, t_avg, time_average_samples(t_avg, gaps.maximum)).matrix[0, 0].real
    assert abs(p_bar - target) <= 10 / (t_avg * gaps.minimum)


def test_time_average_does_not_depend_on_workers(small_composite):
    spectrum, _, eig, _ = small_composite
    rho0 = initial_composite_state(0, gibbs_weights(spectrum, 1.0))
    serial = time_average(rho0, eig, 200.0, 1000, n_jobs=1, chunk_size=64)
    threaded = time_average(rho0, eig, 200.0, 1000, n_jobs=3, chunk_size=64)
    np.testing.assert_allclose(serial.matrix, threaded.matrix, rtol=0, atol=1e-14)


def test_sample_count():
    assert time_average_samples(10.0, None) == 2
    assert time_average_samples(math.pi, 1.0) == 3
    assert time_average_samples(1e6, 10.0, max_samples=500) == 500


def test_time_average_domain():
    eig = eigendecompose(rabi_hamiltonian(0.3, 1.0))
    rho0 = initial_composite_state(0, np.array([1.0]))
    with pytest.raises(DomainError):
        time_average(rho0, eig, 0.0, 10)
    with pytest.raises(DomainError):
        time_average(rho0, eig, 1.0, 1)


def coupled_instance(seed, n_bath=8, coupling=0.2, beta=1.0):
    """(eigensystem, rho0, infinite-time P0) for a random-matrix bath."""
    spectrum = bath_spectrum(BathSpec(model="random-matrix", n_states=n_bath, seed=seed))
    h = build_hamiltonian(SystemSpec(), spectrum.energies, CouplingSpec(strength=coupling, seed=seed))
    eig = eigendecompose(h)
    rho0 = initial_composite_state(0, gibbs_weights(spectrum, beta))
    return eig, rho0, diagonal_ensemble(eig, rho0, degeneracy_classes(eig.frequencies)).p0


def averaged_p0(eig, rho0, horizon_factor):
    gaps = active_gaps(eig, rho0)
    t_avg = horizon_factor / gaps.minimum
    return time_average(rho0, eig, t_avg, time_average_samples(t_avg, gaps.maximum)).matrix[0, 0].real


def test_longer_horizon_does_not_move_away():
    short, long = [], []
    for seed in range(5):
        eig, rho0, p0 = coupled_instance(seed)
        short.append(abs(averaged_p0(eig, rho0, 1e2) - p0))
        long.append(abs(averaged_p0(eig, rho0, 1e3) - p0))
    assert np.median(long) <= np.median(short) + 1e-12


def test_time_average_at_default_horizon():
    errors = []
    for seed in range(5):
        eig, rho0, p0 = coupled_instance(seed)
        errors.append(abs(averaged_p0(eig, rho0, 1e4) - p0))
    assert np.median(errors) <= 1e-3


# ============================================================
# VALIDITY
# ============================================================

def test_every_produced_density_matrix_is_valid():
    cases = 0
    for seed in range(25):
        rng = random_stream(seed, "validity")
        levels = (0.0, 1.0) if seed % 2 else (0.0, 0.7, 1.9)
        n_bath = int(rng.integers(1, 9))
        coupling = CouplingSpec(strength=float(rng.uniform(0.0, 0.5)), seed=seed,
                                structure="system-flip" if seed % 3 == 0 else "random-hermitian")
        spectrum = bath_spectrum(BathSpec(model="random-matrix", n_states=n_bath, seed=seed))
        eig = eigendecompose(build_hamiltonian(SystemSpec(levels), spectrum.energies, coupling))
        classes = degeneracy_classes(eig.frequencies)

        for beta in (0.0, 0.5, 2.0, 10.0):
            rho0 = initial_composite_state(0, gibbs_weights(spectrum, beta))
            t = float(rng.uniform(0.0, 50.0))
            rho_t = evolve(rho0, eig, t)
            produced = [
                rho0,
                rho_t,
                partial_trace_bath(rho_t, len(levels), n_bath),
                diagonal_ensemble(eig, rho0, classes).system_state,
                time_average(rho0, eig, t + 1.0, 64),
            ]
            for rho in produced:
                diagnostics = validate_density_matrix(rho)
                assert diagnostics.valid, (seed, beta, diagnostics.violations())
            cases += 1
    assert cases >= 100
