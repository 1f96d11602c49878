"""
dynamics.py
================
Exact dynamics of the composite: diagonalization, unitary evolution, the
infinite-time (diagonal-ensemble) average, the f_j transition weights, and
an explicit finite-time average used as an independent check.

Conventions
-----------
T[l, p] is the component of interacting eigenvector l on product state p,
so the rows of T are eigenvectors. A product-basis matrix M has eigenbasis
entries (T* M T^T)[l, m], and an entry (l, m) evolves with the phase
exp(+i (w_l - w_m) t), matching rho(t) = U rho0 U^H with U = exp(iHt).

Only pairs (l, m) inside one degeneracy class survive the infinite-time
average. Classes are built greedily on the ascending spectrum with a
tolerance eps; everything downstream (diagonal_ensemble, f_weights) takes
the partition as given and checks it against the frequencies first.
"""

from dataclasses import dataclass
from typing import List, Optional, Union
import logging
import math

import numpy as np
from scipy import linalg

from app.core.error_handling import (
    BasisIndexError,
    ConsistencyError,
    DomainError,
    ShapeError,
    ValidationError,
    log_performance,
)
from app.core.performance import ordered_map
from bath_models import DensityOfStates, ThermalWeights
from config.constants import (
    DEGENERACY_RTOL,
    HAMILTONIAN_HERMITICITY_RTOL,
    TIME_AVERAGE_CHUNK,
    TIME_AVERAGE_MAX_SAMPLES,
)
from hilbert_core import (
    CompositeHamiltonian,
    DensityMatrix,
    hermitize,
    partial_trace_bath,
    partial_trace_system,
)

logger = logging.getLogger(__name__)


def _frozen(array) -> np.ndarray:
    array = np.array(array, copy=True)
    array.setflags(write=False)
    return array


# ============================================================
# EIGENSYSTEM
# ============================================================

@dataclass(frozen=True)
class EigenSystem:
    frequencies: np.ndarray     # ascending, length D
    transform: np.ndarray       # D x D, rows are eigenvectors in the product basis
    n_levels: int
    n_bath: int

    @property
    def dimension(self) -> int:
        return self.frequencies.size

    def to_eigenbasis(self, matrix: np.ndarray) -> np.ndarray:
        t = self.transform
        return t.conj() @ matrix @ t.T

    def from_eigenbasis(self, matrix: np.ndarray) -> np.ndarray:
        t = self.transform
        return t.T @ matrix @ t.conj()

    def level_block(self, level: int) -> np.ndarray:
        """Columns of T on the product states |level, j>, j = 1..N."""
        if not 0 <= level < self.n_levels:
            raise BasisIndexError(f"system level {level} out of range [0, {self.n_levels})")
        return self.transform[:, level * self.n_bath:(level + 1) * self.n_bath]


def _fix_phases(vectors: np.ndarray) -> np.ndarray:
    """Rotate each column so its largest-magnitude entry is real positive."""
    pivots = np.argmax(np.abs(vectors), axis=0)
    anchors = vectors[pivots, np.arange(vectors.shape[1])]
    return vectors * (np.abs(anchors) / anchors)


@log_performance
def eigendecompose(hamiltonian: Union[CompositeHamiltonian, np.ndarray],
                   n_levels: Optional[int] = None,
                   n_bath: Optional[int] = None) -> EigenSystem:
    """
    Full spectral decomposition of a Hermitian composite Hamiltonian.

    A bare matrix is accepted when n_levels and n_bath are supplied.
    """
    if isinstance(hamiltonian, CompositeHamiltonian):
        matrix = hamiltonian.matrix
        n_levels, n_bath = hamiltonian.n_levels, hamiltonian.n_bath
    else:
        matrix = np.asarray(hamiltonian, dtype=complex)
        if n_levels is None or n_bath is None:
            raise ValidationError("a bare matrix needs n_levels and n_bath")

    dim = n_levels * n_bath
    if matrix.shape != (dim, dim):
        raise ShapeError(f"Hamiltonian shape {matrix.shape} does not match {n_levels} x {n_bath}")

    scale = max(float(np.max(np.abs(matrix))), 1.0)
    asymmetry = float(np.max(np.abs(matrix - matrix.conj().T)))
    if asymmetry > HAMILTONIAN_HERMITICITY_RTOL * scale:
        raise DomainError(f"Hamiltonian is not Hermitian (max |H - H^H| = {asymmetry:.3e})")

    frequencies, vectors = linalg.eigh(hermitize(matrix))
    vectors = _fix_phases(vectors)

    return EigenSystem(
        frequencies=_frozen(frequencies),
        transform=_frozen(vectors.T),
        n_levels=n_levels,
        n_bath=n_bath,
    )


# ============================================================
# STATES AND EVOLUTION
# ============================================================

def initial_composite_state(level: int,
                            weights: Union[ThermalWeights, np.ndarray],
                            n_levels: int = 2) -> DensityMatrix:
    """rho(0) = sum_j A_j |i0 j><i0 j|."""
    a = np.asarray(weights.weights if isinstance(weights, ThermalWeights) else weights, dtype=float)
    if not 0 <= level < n_levels:
        raise BasisIndexError(f"initial level {level} out of range [0, {n_levels})")
    n_bath = a.size
    diagonal = np.zeros(n_levels * n_bath)
    diagonal[level * n_bath:(level + 1) * n_bath] = a
    return DensityMatrix(np.diag(diagonal).astype(complex), "composite")


def evolve(rho0: DensityMatrix, eig: EigenSystem, t: float) -> DensityMatrix:
    t = float(t)
    if not np.isfinite(t):
        raise DomainError(f"time must be finite, got {t}")
    if rho0.dimension != eig.dimension:
        raise ShapeError(f"state dimension {rho0.dimension} != eigensystem dimension {eig.dimension}")
    if t == 0.0:
        return rho0

    rotor = np.exp(1j * eig.frequencies * t)
    phases = np.outer(rotor, rotor.conj())
    rho_t = eig.from_eigenbasis(eig.to_eigenbasis(rho0.matrix) * phases)
    return DensityMatrix(hermitize(rho_t), "composite")


# ============================================================
# DEGENERACY CLASSES
# ============================================================

@dataclass(frozen=True)
class DegeneracyClasses:
    """
    labels[l] is the class of eigenvalue l; labels are 0, 1, 2, ... in
    spectrum order. spreads[c] is max w - min w inside class c. Greedy
    clustering can chain near-equal frequencies into a class wider than
    eps; such classes are counted in n_chained.
    """
    labels: np.ndarray
    tolerance: float
    spreads: np.ndarray

    @property
    def n_classes(self) -> int:
        return self.spreads.size

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_classes)

    @property
    def n_chained(self) -> int:
        return int(np.count_nonzero(self.spreads > self.tolerance))

    def members(self) -> List[np.ndarray]:
        boundaries = np.flatnonzero(np.diff(self.labels)) + 1
        return np.split(np.arange(self.labels.size), boundaries)

    def pair_mask(self) -> np.ndarray:
        return self.labels[:, None] == self.labels[None, :]

    def size_histogram(self) -> dict:
        """{class size: number of classes of that size}."""
        values, counts = np.unique(self.sizes, return_counts=True)
        return {int(v): int(c) for v, c in zip(values, counts)}

    def summary(self) -> dict:
        sizes = self.sizes
        return {
            "n_classes": self.n_classes,
            "max_class_size": int(sizes.max()),
            "mean_class_size": float(sizes.mean()),
            "n_degenerate_classes": int(np.count_nonzero(sizes > 1)),
            "n_chained_classes": self.n_chained,
            "degeneracy_tolerance": self.tolerance,
        }


def default_degeneracy_tolerance(frequencies: np.ndarray, rtol: float = DEGENERACY_RTOL) -> float:
    span = float(frequencies[-1] - frequencies[0]) if frequencies.size else 0.0
    return rtol * span if span > 0 else rtol


def degeneracy_classes(frequencies, tolerance: Optional[float] = None) -> DegeneracyClasses:
    w = np.asarray(frequencies, dtype=float)
    if w.ndim != 1 or w.size == 0:
        raise ValidationError("frequencies must be a non-empty vector")
    if np.any(np.diff(w) < 0):
        raise ValidationError("frequencies must be ascending")
    eps = default_degeneracy_tolerance(w) if tolerance is None else float(tolerance)
    if not (np.isfinite(eps) and eps >= 0):
        raise ValidationError(f"degeneracy tolerance must be finite and >= 0, got {eps}")

    labels = np.concatenate([[0], np.cumsum(np.diff(w) > eps)]).astype(int)
    n_classes = int(labels[-1]) + 1
    spreads = np.zeros(n_classes)
    np.maximum.at(spreads, labels, w - w[np.searchsorted(labels, labels)])

    classes = DegeneracyClasses(labels=_frozen(labels), tolerance=eps, spreads=_frozen(spreads))
    if classes.n_chained:
        logger.warning(f"{classes.n_chained} degeneracy class(es) span more than eps={eps:.3e}; "
                       f"widest spread {spreads.max():.3e}")
    return classes


def check_classes(eig: EigenSystem, classes: DegeneracyClasses) -> None:
    """Raise ConsistencyError unless classes is the greedy partition of eig's spectrum."""
    labels = np.asarray(classes.labels)
    if labels.size != eig.dimension:
        raise ConsistencyError(f"partition covers {labels.size} eigenvalues, spectrum has {eig.dimension}")
    if labels[0] != 0:
        raise ConsistencyError("class labels must start at 0")
    steps = np.diff(labels)
    if np.any((steps != 0) & (steps != 1)):
        raise ConsistencyError("class labels must be contiguous in spectrum order")
    merged = np.diff(eig.frequencies) <= classes.tolerance
    if np.any(merged != (steps == 0)):
        bad = int(np.flatnonzero(merged != (steps == 0))[0])
        raise ConsistencyError(
            f"partition disagrees with the spectrum between eigenvalues {bad} and {bad + 1} "
            f"(gap {eig.frequencies[bad + 1] - eig.frequencies[bad]:.3e}, eps {classes.tolerance:.3e})"
        )


# ============================================================
# f WEIGHTS
# ============================================================

def _transition_weights(eig: EigenSystem, mask: np.ndarray, target_level: int, initial_level: int) -> np.ndarray:
    # f_j = sum_{l,m in class} conj(T[l,(i0 j)]) T[m,(i0 j)] sum_k T[l,(n k)] conj(T[m,(n k)])
    source = eig.level_block(initial_level)
    target = eig.level_block(target_level)
    kernel = np.where(mask, target @ target.conj().T, 0.0)
    return np.real(np.sum((source.conj().T @ kernel) * source.T, axis=1))


def f_weights(eig: EigenSystem,
              classes: DegeneracyClasses,
              n_bath: Optional[int] = None,
              target_level: int = 0,
              initial_level: int = 0) -> np.ndarray:
    """
    Infinite-time probability of finding the system in target_level when the
    composite starts in |initial_level, j>. Temperature independent.
    """
    if n_bath is not None and n_bath != eig.n_bath:
        raise ShapeError(f"bath size {n_bath} does not match the eigensystem ({eig.n_bath})")
    check_classes(eig, classes)
    return _frozen(_transition_weights(eig, classes.pair_mask(), target_level, initial_level))


def f_weights_all_levels(eig: EigenSystem, classes: DegeneracyClasses, initial_level: int = 0) -> np.ndarray:
    """(n_levels, N) table of f weights; each column sums to 1."""
    check_classes(eig, classes)
    mask = classes.pair_mask()
    table = np.vstack([
        _transition_weights(eig, mask, level, initial_level) for level in range(eig.n_levels)
    ])
    return _frozen(table)


# ============================================================
# DIAGONAL ENSEMBLE
# ============================================================

@dataclass(frozen=True)
class DiagonalEnsembleResult:
    """
    Infinite-time average of the composite started in rho0.

    p0                        (rho_S)_00
    f_weights                 f_j for the ground level, sum_j A_j f_j = p0
    diagonal_contribution     part of p0 carried by l == m terms
    offdiagonal_contribution  part carried by l != m pairs inside a class
    """
    system_state: DensityMatrix
    bath_state: DensityMatrix
    p0: float
    populations: np.ndarray
    f_weights: np.ndarray
    diagonal_contribution: float
    offdiagonal_contribution: float
    class_size_histogram: dict
    class_summary: dict


@log_performance
def diagonal_ensemble(eig: EigenSystem,
                      rho0: DensityMatrix,
                      classes: DegeneracyClasses,
                      initial_level: int = 0) -> DiagonalEnsembleResult:
    if rho0.dimension != eig.dimension:
        raise ShapeError(f"state dimension {rho0.dimension} != eigensystem dimension {eig.dimension}")
    check_classes(eig, classes)
    mask = classes.pair_mask()

    rho_eig = eig.to_eigenbasis(rho0.matrix)
    composite = hermitize(eig.from_eigenbasis(np.where(mask, rho_eig, 0.0)))
    system = partial_trace_bath(composite, eig.n_levels, eig.n_bath)
    bath = partial_trace_system(composite, eig.n_levels, eig.n_bath)
    p0 = float(system.matrix[0, 0].real)

    ground = eig.level_block(0)
    ground_overlap = np.sum(np.abs(ground) ** 2, axis=1)
    diagonal = float(np.real(np.sum(np.diag(rho_eig) * ground_overlap)))

    return DiagonalEnsembleResult(
        system_state=system,
        bath_state=bath,
        p0=p0,
        populations=_frozen(system.populations()),
        f_weights=_frozen(_transition_weights(eig, mask, 0, initial_level)),
        diagonal_contribution=diagonal,
        offdiagonal_contribution=p0 - diagonal,
        class_size_histogram=classes.size_histogram(),
        class_summary=classes.summary(),
    )


@dataclass(frozen=True)
class BathEnergyShift:
    initial: float      # sum_j A_j E_j
    final: float        # <H_R> in the diagonal ensemble

    @property
    def shift(self) -> float:
        return self.final - self.initial


def bath_energy_shift(result: DiagonalEnsembleResult,
                      weights: Union[ThermalWeights, np.ndarray],
                      bath_energies: np.ndarray) -> BathEnergyShift:
    a = np.asarray(weights.weights if isinstance(weights, ThermalWeights) else weights, dtype=float)
    energies = np.asarray(bath_energies, dtype=float)
    if a.size != energies.size or result.bath_state.dimension != energies.size:
        raise ShapeError("weights, bath energies and bath state disagree in size")
    return BathEnergyShift(
        initial=float(np.dot(a, energies)),
        final=float(np.dot(result.bath_state.populations(), energies)),
    )


# ============================================================
# BINNED f(x)
# ============================================================

@dataclass(frozen=True)
class FProfile:
    """
    f(x) on the bins of a bath density of states. f_mean is NaN where a bin
    holds no bath state; use `present` rather than testing for zero.
    """
    bin_edges: np.ndarray
    f_mean: np.ndarray
    counts: np.ndarray
    omega: np.ndarray
    present: np.ndarray

    @property
    def centers(self) -> np.ndarray:
        return (self.bin_edges[:-1] + self.bin_edges[1:]) / 2

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.bin_edges)

    @property
    def absent_bins(self) -> int:
        return int(np.count_nonzero(~self.present))


def f_binned(f: np.ndarray, bath_energies: np.ndarray, dos: DensityOfStates) -> FProfile:
    """Average f_j over the bath states falling in each bin of dos."""
    f = np.asarray(f, dtype=float)
    energies = np.asarray(bath_energies, dtype=float)
    if f.size != energies.size:
        raise ShapeError(f"{f.size} f weights for {energies.size} bath energies")

    counts, _ = np.histogram(energies, bins=dos.bin_edges)
    sums, _ = np.histogram(energies, bins=dos.bin_edges, weights=f)
    present = counts > 0
    f_mean = np.full(counts.size, np.nan)
    f_mean[present] = sums[present] / counts[present]

    return FProfile(
        bin_edges=_frozen(dos.bin_edges),
        f_mean=_frozen(f_mean),
        counts=_frozen(counts),
        omega=_frozen(counts / np.diff(dos.bin_edges)),
        present=_frozen(present),
    )


# ============================================================
# FINITE-TIME AVERAGE
# ============================================================

@dataclass(frozen=True)
class ActiveGaps:
    """Smallest and largest nonzero |w_l - w_m| over pairs carrying weight in rho0."""
    minimum: Optional[float]
    maximum: Optional[float]


def active_gaps(eig: EigenSystem, rho0: DensityMatrix,
                weight_tol: float = 1e-14, gap_rtol: float = 1e-12) -> ActiveGaps:
    rho_eig = np.abs(eig.to_eigenbasis(rho0.matrix))
    w = eig.frequencies
    span = float(w[-1] - w[0])
    gaps = np.abs(np.subtract.outer(w, w))
    active = (rho_eig > weight_tol * max(float(rho_eig.max()), 1.0)) & (gaps > gap_rtol * max(span, 1.0))
    if not np.any(active):
        return ActiveGaps(minimum=None, maximum=None)
    return ActiveGaps(minimum=float(gaps[active].min()), maximum=float(gaps[active].max()))


def time_average_samples(t_avg: float, max_gap: Optional[float],
                         max_samples: int = TIME_AVERAGE_MAX_SAMPLES) -> int:
    """Grid size with step h such that h * max_gap <= pi / 2, capped at max_samples."""
    if not max_gap:
        return 2
    needed = math.ceil(2.0 * t_avg * max_gap / math.pi) + 1
    if needed > max_samples:
        logger.warning(f"time average wants {needed} samples, capped at {max_samples}")
    return int(min(max(needed, 2), max_samples))


def _phase_gram(frequencies: np.ndarray, times: np.ndarray) -> np.ndarray:
    rotor = np.exp(1j * np.outer(times, frequencies))
    return rotor.T @ rotor.conj()


@log_performance
def time_average(rho0: DensityMatrix,
                 eig: EigenSystem,
                 t_avg: float,
                 n_samples: int,
                 n_jobs: int = 1,
                 chunk_size: int = TIME_AVERAGE_CHUNK) -> DensityMatrix:
    """
    Mean of partial_trace_bath(evolve(rho0, t)) over the uniform grid
    t_k = k T / (n - 1), k = 0..n-1. The grid is cut into chunks reduced in
    index order, so the result does not depend on n_jobs.
    """
    if not (np.isfinite(t_avg) and t_avg > 0):
        raise DomainError(f"T_avg must be finite and > 0, got {t_avg}")
    if int(n_samples) < 2:
        raise DomainError(f"time average needs at least 2 samples, got {n_samples}")
    if rho0.dimension != eig.dimension:
        raise ShapeError(f"state dimension {rho0.dimension} != eigensystem dimension {eig.dimension}")

    n_samples = int(n_samples)
    step = t_avg / (n_samples - 1)
    starts = range(0, n_samples, int(chunk_size))

    def chunk_sum(start: int) -> np.ndarray:
        stop = min(start + int(chunk_size), n_samples)
        return _phase_gram(eig.frequencies, np.arange(start, stop) * step)

    phase_sum = np.zeros((eig.dimension, eig.dimension), dtype=complex)
    for partial in ordered_map(chunk_sum, starts, n_jobs=n_jobs):
        phase_sum += partial

    rho_eig = eig.to_eigenbasis(rho0.matrix)
    averaged = hermitize(eig.from_eigenbasis(rho_eig * phase_sum / n_samples))
    return partial_trace_bath(averaged, eig.n_levels, eig.n_bath)


if __name__ == "__main__":
    from hilbert_core import SystemSpec

    print("=" * 60)
    print("TEST 1: Rabi pair, closed-form infinite-time average")
    print("=" * 60)
    lam, delta = 0.3, 1.0
    h = CompositeHamiltonian.from_matrix(np.array([[0.0, lam], [lam, delta]]), SystemSpec.two_level(delta), 1)
    eig = eigendecompose(h)
    rho0 = initial_composite_state(0, np.array([1.0]))
    result = diagonal_ensemble(eig, rho0, degeneracy_classes(eig.frequencies))
    expected = 1 - 2 * lam ** 2 / (4 * lam ** 2 + delta ** 2)
    print(f"P0 = {result.p0:.12f}  |  closed form = {expected:.12f}")
    assert abs(result.p0 - expected) < 1e-12

    print("\n" + "=" * 60)
    print("TEST 2: finite-time average approaches the diagonal ensemble")
    print("=" * 60)
    gaps = active_gaps(eig, rho0)
    t_avg = 1e3 * 2 * np.pi / gaps.minimum
    p_bar = time_average(rho0, eig, t_avg, time_average_samples(t_avg, gaps.maximum)).matrix[0, 0].real
    print(f"P0(T) = {p_bar:.8f}  |  |diff| = {abs(p_bar - result.p0):.2e}")
    assert abs(p_bar - result.p0) < 1e-3
