"""
bath_models.py
================
Reservoir spectra, their Gibbs weights, and binned densities of states.

Three bath families:

  ladder          E_j = (j-1) W / (N-1)            analytic control
  random-matrix   eigenvalues of a seeded GUE/GOE  generic level repulsion
                  matrix, rescaled onto [0, W]
  spin-gas        all 2^k subset sums of k         exponentially growing
                  per-particle splittings           density of states

The bath is non-interacting and its spectrum never depends on temperature;
beta only enters through gibbs_weights().
"""

from dataclasses import dataclass
from typing import Optional, Tuple
import logging
import math

import numpy as np
from scipy import linalg
from scipy.special import logsumexp

from app.core.error_handling import DomainError, ValidationError
from app.core.random_streams import random_stream
from config.constants import MAX_BETA

logger = logging.getLogger(__name__)

BATH_MODELS = ("ladder", "random-matrix", "spin-gas")
ENSEMBLES = ("GUE", "GOE")


def _frozen(array) -> np.ndarray:
    array = np.array(array, dtype=float, copy=True)
    array.setflags(write=False)
    return array


# ============================================================
# SPECS AND SPECTRA
# ============================================================

@dataclass(frozen=True)
class BathSpec:
    """
    model           one of BATH_MODELS
    n_states        N (for spin-gas N must be 2^k)
    spectral_width  W > 0; for spin-gas without explicit splittings each of the
                    k particles gets splitting W / k
    seed            64-bit seed of the "bath" stream (random-matrix only)
    ensemble        GUE (complex Hermitian) or GOE (real symmetric), random-matrix only
    splittings      explicit per-particle splittings, spin-gas only
    """
    model: str = "ladder"
    n_states: int = 16
    spectral_width: float = 1.0
    seed: int = 0
    ensemble: str = "GUE"
    splittings: Optional[Tuple[float, ...]] = None

    def __post_init__(self):
        if self.model not in BATH_MODELS:
            raise ValidationError(f"unknown bath model '{self.model}' (expected one of {BATH_MODELS})")
        if int(self.n_states) < 1:
            raise ValidationError(f"bath needs at least one state, got n_states={self.n_states}")
        if not (np.isfinite(self.spectral_width) and self.spectral_width > 0):
            raise ValidationError(f"spectral_width must be finite and > 0, got {self.spectral_width}")
        if self.ensemble not in ENSEMBLES:
            raise ValidationError(f"unknown ensemble '{self.ensemble}' (expected one of {ENSEMBLES})")
        if self.splittings is not None:
            object.__setattr__(self, "splittings", tuple(float(s) for s in self.splittings))
        if self.model == "spin-gas":
            n_particles = self.n_particles
            if 2 ** n_particles != self.n_states:
                raise ValidationError(
                    f"spin-gas needs n_states = 2^k, got n_states={self.n_states} "
                    f"for k={n_particles} particles"
                )
            if not all(np.isfinite(s) and s >= 0 for s in self.particle_splittings()):
                raise ValidationError("spin-gas splittings must be finite and >= 0")

    @property
    def n_particles(self) -> int:
        if self.splittings is not None:
            return len(self.splittings)
        return max(0, int(round(math.log2(self.n_states))))

    def particle_splittings(self) -> Tuple[float, ...]:
        if self.splittings is not None:
            return self.splittings
        k = self.n_particles
        return tuple([self.spectral_width / k] * k) if k else ()

    def with_overrides(self, seed: Optional[int] = None, n_states: Optional[int] = None) -> "BathSpec":
        splittings = self.splittings
        if n_states is not None and self.model == "spin-gas" and splittings is not None:
            # explicit splittings pin N; resizing falls back to equal splittings
            splittings = None
        return BathSpec(
            model=self.model,
            n_states=self.n_states if n_states is None else n_states,
            spectral_width=self.spectral_width,
            seed=self.seed if seed is None else seed,
            ensemble=self.ensemble,
            splittings=splittings,
        )


@dataclass(frozen=True)
class BathSpectrum:
    energies: np.ndarray        # ascending, length N
    spec: BathSpec

    @property
    def n_states(self) -> int:
        return self.energies.size


def _ladder(spec: BathSpec) -> np.ndarray:
    if spec.n_states == 1:
        return np.zeros(1)
    j = np.arange(spec.n_states)
    return j * spec.spectral_width / (spec.n_states - 1)


def _random_matrix(spec: BathSpec) -> np.ndarray:
    rng = random_stream(spec.seed, "bath")
    n = spec.n_states
    g = rng.standard_normal((n, n))
    if spec.ensemble == "GUE":
        g = g + 1j * rng.standard_normal((n, n))
    h = (g + g.conj().T) / 2
    eigenvalues = linalg.eigvalsh(h)
    span = eigenvalues[-1] - eigenvalues[0]
    if n == 1 or span == 0:
        return np.zeros(n)
    return (eigenvalues - eigenvalues[0]) / span * spec.spectral_width


def _spin_gas(spec: BathSpec) -> np.ndarray:
    splittings = np.asarray(spec.particle_splittings(), dtype=float)
    k = splittings.size
    occupation = (np.arange(2 ** k)[:, None] >> np.arange(k)) & 1
    return occupation @ splittings


def bath_spectrum(spec: BathSpec) -> BathSpectrum:
    """Sorted, finite bath energies for the spec; deterministic given its seed."""
    if spec.model == "ladder":
        energies = _ladder(spec)
    elif spec.model == "random-matrix":
        energies = _random_matrix(spec)
    else:
        energies = _spin_gas(spec)

    energies = np.sort(np.asarray(energies, dtype=float))
    if not np.all(np.isfinite(energies)):
        raise DomainError(f"bath model {spec.model} produced non-finite energies")
    logger.debug(f"Bath spectrum: model={spec.model}, N={energies.size}, "
                 f"range=[{energies[0]:.4g}, {energies[-1]:.4g}]")
    return BathSpectrum(energies=_frozen(energies), spec=spec)


# ============================================================
# THERMAL WEIGHTS
# ============================================================

@dataclass(frozen=True)
class ThermalWeights:
    """
    weights               A_j = exp(-beta (E_j - E_min)) / sum_j (...)
    partition_shifted     sum_j exp(-beta (E_j - E_min))
    log_partition         log Z, always finite
    partition             Z = sum_j exp(-beta E_j) when representable, else None
    """
    beta: float
    weights: np.ndarray
    energy_shift: float
    partition_shifted: float
    log_partition: float
    partition: Optional[float]

    @property
    def ground_weight(self) -> float:
        return float(self.weights[0])

    def mean_energy(self, energies: np.ndarray) -> float:
        return float(np.dot(self.weights, energies))


def _check_beta(beta: float, max_beta: float = MAX_BETA) -> float:
    beta = float(beta)
    if not np.isfinite(beta):
        raise DomainError(f"beta must be finite, got {beta}")
    if beta < 0:
        raise DomainError(f"beta must be >= 0 (negative temperatures are out of scope), got {beta}")
    if beta > max_beta:
        raise DomainError(f"beta={beta} exceeds the configured maximum {max_beta}")
    return beta


def gibbs_weights(spectrum: BathSpectrum, beta: float, max_beta: float = MAX_BETA) -> ThermalWeights:
    beta = _check_beta(beta, max_beta)
    energies = np.asarray(spectrum.energies if isinstance(spectrum, BathSpectrum) else spectrum, dtype=float)
    shift = float(energies.min())
    exponents = -beta * (energies - shift)
    boltzmann = np.exp(exponents)
    partition_shifted = float(boltzmann.sum())

    log_partition = float(logsumexp(-beta * energies))
    partition = math.exp(log_partition) if -700.0 < log_partition < 700.0 else None

    return ThermalWeights(
        beta=beta,
        weights=_frozen(boltzmann / partition_shifted),
        energy_shift=shift,
        partition_shifted=partition_shifted,
        log_partition=log_partition,
        partition=partition,
    )


# ============================================================
# DENSITY OF STATES
# ============================================================

@dataclass(frozen=True)
class DensityOfStates:
    """Equal-width histogram; omega = count / bin width, so sum(omega * widths) = N."""
    bin_edges: np.ndarray
    omega: np.ndarray
    counts: np.ndarray
    total_states: int

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.bin_edges)

    @property
    def centers(self) -> np.ndarray:
        return (self.bin_edges[:-1] + self.bin_edges[1:]) / 2


def density_of_states(energies, n_bins: int) -> DensityOfStates:
    """
    Histogram of a bath spectrum or a set of composite eigenfrequencies over
    [min E, max E]. If every energy is identical there is one bin of nominal
    width 1 centred on that energy.
    """
    if isinstance(energies, BathSpectrum):
        energies = energies.energies
    energies = np.asarray(energies, dtype=float).ravel()
    if energies.size == 0:
        raise ValidationError("density_of_states needs at least one energy")
    if int(n_bins) < 1:
        raise ValidationError(f"n_bins must be >= 1, got {n_bins}")

    lo, hi = float(energies.min()), float(energies.max())
    if hi == lo:
        edges = np.array([lo - 0.5, lo + 0.5])
    else:
        edges = np.linspace(lo, hi, int(n_bins) + 1)
    counts, _ = np.histogram(energies, bins=edges)

    return DensityOfStates(
        bin_edges=_frozen(edges),
        omega=_frozen(counts / np.diff(edges)),
        counts=np.asarray(counts, dtype=int),
        total_states=int(energies.size),
    )
