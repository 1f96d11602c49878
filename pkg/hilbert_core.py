"""
hilbert_core.py
================
Product-space bookkeeping for a small quantum system coupled to a finite
bath: basis labels, composite Hamiltonian assembly, density matrices and
partial traces. Everything else in thermaleq is built on these pieces.

Basis convention
----------------
The composite basis state |i j> (system level i, bath state j) sits at
index i*N + (j-1). Bath labels are 1-based, as in reports; internal
arrays are 0-based. System-major ordering makes every system level a
contiguous N-block, so tracing out the bath is a reshape plus a sum.

No I/O, no CLI, no global state: all functions are pure and every
returned object is immutable (arrays are flagged read-only).
"""

from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Tuple, Union
import logging

import numpy as np
from scipy import linalg

from app.core.error_handling import (
    BasisIndexError,
    CapacityError,
    DomainError,
    ShapeError,
    ValidationError,
)
from app.core.random_streams import random_stream
from config.constants import (
    COUPLING_NORM_TOL,
    DEFAULT_LEVEL_ENERGIES,
    HERMITICITY_TOL,
    MAX_DIMENSION,
    POSITIVITY_TOL,
    TRACE_TOL,
)

logger = logging.getLogger(__name__)

COUPLING_STRUCTURES = ("random-hermitian", "system-flip")
SPACE_TAGS = ("composite", "system", "bath")


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, copy=True)
    array.setflags(write=False)
    return array


# ============================================================
# SPECS
# ============================================================

@dataclass(frozen=True)
class SystemSpec:
    """The small system: n_levels energies in strictly ascending order."""
    level_energies: Tuple[float, ...] = DEFAULT_LEVEL_ENERGIES

    def __post_init__(self):
        energies = tuple(float(e) for e in self.level_energies)
        object.__setattr__(self, "level_energies", energies)
        if len(energies) < 2:
            raise ValidationError("system needs at least 2 levels")
        if not all(np.isfinite(energies)):
            raise ValidationError("system level energies must be finite")
        if any(b <= a for a, b in zip(energies, energies[1:])):
            raise ValidationError(f"system level energies must be strictly ascending, got {energies}")

    @classmethod
    def two_level(cls, gap: float) -> "SystemSpec":
        return cls(level_energies=(0.0, float(gap)))

    @property
    def n_levels(self) -> int:
        return len(self.level_energies)

    @property
    def gap(self) -> float:
        """delta: spacing between the two lowest levels."""
        return self.level_energies[1] - self.level_energies[0]


@dataclass(frozen=True)
class CouplingSpec:
    """
    strength     lambda >= 0, applied after V is normalized to unit operator norm
    structure    "random-hermitian": dense GUE-like V on the whole composite space
                 "system-flip":      X (nearest-level flip on the system) x B (random
                                     Hermitian bath operator); always drives transitions
    seed         64-bit seed for the "coupling" random streams
    """
    strength: float = 0.1
    structure: str = "random-hermitian"
    seed: int = 0

    def __post_init__(self):
        if not np.isfinite(self.strength) or self.strength < 0:
            raise ValidationError(f"coupling strength must be finite and >= 0, got {self.strength}")
        if self.structure not in COUPLING_STRUCTURES:
            raise ValidationError(
                f"unknown coupling structure '{self.structure}' (expected one of {COUPLING_STRUCTURES})"
            )

    def with_overrides(self, strength: Optional[float] = None, seed: Optional[int] = None) -> "CouplingSpec":
        return CouplingSpec(
            strength=self.strength if strength is None else strength,
            structure=self.structure,
            seed=self.seed if seed is None else seed,
        )


# ============================================================
# BASIS LABELS
# ============================================================

def product_index(i: int, j: int, n_bath: int, n_levels: int = 2) -> int:
    """Composite index of |i j>; i is 0-based, the bath label j is 1-based."""
    if not 0 <= i < n_levels:
        raise BasisIndexError(f"system level {i} outside [0, {n_levels})")
    if not 1 <= j <= n_bath:
        raise BasisIndexError(f"bath index {j} outside [1, {n_bath}]")
    return i * n_bath + (j - 1)


def split_index(index: int, n_bath: int, n_levels: int = 2) -> Tuple[int, int]:
    """Inverse of product_index: composite index -> (i, j) with 1-based j."""
    if not 0 <= index < n_levels * n_bath:
        raise BasisIndexError(f"composite index {index} outside [0, {n_levels * n_bath})")
    i, j0 = divmod(index, n_bath)
    return i, j0 + 1


def check_dimension(n_levels: int, n_bath: int, max_dimension: int = MAX_DIMENSION) -> int:
    dim = n_levels * n_bath
    if dim > max_dimension:
        raise CapacityError(
            f"composite dimension {dim} = {n_levels} x {n_bath} exceeds the cap of {max_dimension}; "
            f"reduce the bath size or raise max_dimension (dense storage needs {dim * dim * 16 / 2**20:.0f} MiB per matrix)"
        )
    return dim


# ============================================================
# HAMILTONIAN
# ============================================================

@dataclass(frozen=True)
class CompositeHamiltonian:
    """
    H = H_S x I + I x H_R + lambda V, stored as the diagonal of the bare part
    plus the (already scaled) coupling matrix. `matrix` is assembled once.
    """
    system: SystemSpec
    n_bath: int
    bare_energies: np.ndarray          # length D, E_i^S + E_j^R at product_index(i, j)
    coupling_matrix: np.ndarray        # D x D, lambda V
    matrix: np.ndarray = field(repr=False)

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_levels(self) -> int:
        return self.system.n_levels

    def system_part(self) -> np.ndarray:
        return np.kron(np.diag(self.system.level_energies), np.eye(self.n_bath))

    def bath_part(self) -> np.ndarray:
        bath = self.bare_energies[: self.n_bath] - self.system.level_energies[0]
        return np.kron(np.eye(self.n_levels), np.diag(bath))

    @classmethod
    def from_matrix(cls, matrix: np.ndarray, system: SystemSpec, n_bath: int) -> "CompositeHamiltonian":
        """Wrap an explicit Hermitian matrix; its diagonal is taken as the bare part."""
        matrix = np.asarray(matrix, dtype=complex)
        dim = system.n_levels * n_bath
        if matrix.shape != (dim, dim):
            raise ShapeError(f"matrix shape {matrix.shape} does not match {system.n_levels} x {n_bath}")
        bare = np.real(np.diag(matrix))
        return cls(
            system=system,
            n_bath=n_bath,
            bare_energies=_frozen(bare),
            coupling_matrix=_frozen(matrix - np.diag(bare)),
            matrix=_frozen(matrix),
        )


def _hermitian_unit_norm(matrix: np.ndarray) -> np.ndarray:
    """Scale a Hermitian matrix to operator norm 1, sign fixed so the
    largest-magnitude eigenvalue is positive."""
    eigenvalues = linalg.eigvalsh(matrix)
    top = eigenvalues[np.argmax(np.abs(eigenvalues))]
    if top == 0:
        raise DomainError("cannot normalize a zero coupling matrix")
    return matrix / top


def random_hermitian(dim: int, rng: np.random.Generator) -> np.ndarray:
    """i.i.d. complex Gaussian entries, Hermitized exactly as (G + G^H) / 2."""
    g = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    return (g + g.conj().T) / 2


def flip_operator(n_levels: int) -> np.ndarray:
    """Nearest-level flip (sigma_x for two levels), unit operator norm."""
    x = np.diag(np.ones(n_levels - 1), 1) + np.diag(np.ones(n_levels - 1), -1)
    if n_levels == 2:
        return x
    return x / (2 * np.cos(np.pi / (n_levels + 1)))


def coupling_operator(coupling: CouplingSpec, n_levels: int, n_bath: int) -> np.ndarray:
    """
    Unit-norm Hermitian V for the requested structure. Depends only on the
    structure, the dimensions and the seed; temperature never enters.
    """
    if coupling.structure == "random-hermitian":
        rng = random_stream(coupling.seed, "coupling")
        v = _hermitian_unit_norm(random_hermitian(n_levels * n_bath, rng))
    else:
        rng = random_stream(coupling.seed, "coupling/bath-operator")
        bath_op = _hermitian_unit_norm(random_hermitian(n_bath, rng))
        v = np.kron(flip_operator(n_levels), bath_op)

    norm = np.max(np.abs(linalg.eigvalsh(v)))
    if abs(norm - 1.0) > COUPLING_NORM_TOL:
        raise DomainError(f"coupling normalization drifted: |V| = {norm!r}")
    return v


def build_hamiltonian(system: SystemSpec,
                      bath_energies: Iterable[float],
                      coupling: CouplingSpec,
                      max_dimension: int = MAX_DIMENSION) -> CompositeHamiltonian:
    """
    Assemble H = H_S x I + I x H_R + lambda V with H_R = diag(bath_energies).
    Deterministic given the coupling seed: the same specs give bitwise-identical
    matrices.
    """
    bath = np.asarray(list(bath_energies), dtype=float)
    if bath.ndim != 1 or bath.size == 0:
        raise ValidationError("bath_energies must be a non-empty vector")
    if not np.all(np.isfinite(bath)):
        raise ValidationError("bath_energies must be finite")

    n_bath = bath.size
    check_dimension(system.n_levels, n_bath, max_dimension)

    bare = np.add.outer(np.asarray(system.level_energies), bath).ravel()
    if coupling.strength == 0:
        coupling_matrix = np.zeros((bare.size, bare.size), dtype=complex)
    else:
        coupling_matrix = coupling.strength * coupling_operator(coupling, system.n_levels, n_bath)

    matrix = np.diag(bare).astype(complex) + coupling_matrix
    logger.debug(f"Built H: D={bare.size}, lambda={coupling.strength}, structure={coupling.structure}")

    return CompositeHamiltonian(
        system=system,
        n_bath=n_bath,
        bare_energies=_frozen(bare),
        coupling_matrix=_frozen(coupling_matrix),
        matrix=_frozen(matrix),
    )


# ============================================================
# DENSITY MATRICES
# ============================================================

@dataclass(frozen=True)
class DensityMatrix:
    """A density matrix tagged with the space it lives on. The constructor
    only checks shape; use validate_density_matrix for the physical invariants."""
    matrix: np.ndarray
    space: str = "composite"

    def __post_init__(self):
        if self.space not in SPACE_TAGS:
            raise ValidationError(f"unknown space tag '{self.space}'")
        m = np.asarray(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ShapeError(f"density matrix must be square, got shape {m.shape}")
        object.__setattr__(self, "matrix", _frozen(m))

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    def populations(self) -> np.ndarray:
        return np.real(np.diag(self.matrix))


@dataclass(frozen=True)
class DensityDiagnostics:
    trace_deviation: float
    hermiticity_deviation: float
    min_eigenvalue: float

    @property
    def trace_ok(self) -> bool:
        return self.trace_deviation <= TRACE_TOL

    @property
    def hermitian_ok(self) -> bool:
        return self.hermiticity_deviation <= HERMITICITY_TOL

    @property
    def positive_ok(self) -> bool:
        return self.min_eigenvalue >= -POSITIVITY_TOL

    @property
    def valid(self) -> bool:
        return self.trace_ok and self.hermitian_ok and self.positive_ok

    def violations(self) -> List[str]:
        out = []
        if not self.trace_ok:
            out.append(f"trace off by {self.trace_deviation:.3e}")
        if not self.hermitian_ok:
            out.append(f"non-Hermitian by {self.hermiticity_deviation:.3e}")
        if not self.positive_ok:
            out.append(f"negative eigenvalue {self.min_eigenvalue:.3e}")
        return out


def _as_matrix(rho: Union[DensityMatrix, np.ndarray]) -> np.ndarray:
    return rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho, dtype=complex)


def hermitize(matrix: np.ndarray) -> np.ndarray:
    return (matrix + matrix.conj().T) / 2


def validate_density_matrix(rho: Union[DensityMatrix, np.ndarray]) -> DensityDiagnostics:
    """Trace deviation, Hermiticity deviation and smallest eigenvalue (of the
    Hermitian part). Always computable for a square matrix."""
    m = _as_matrix(rho)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ShapeError(f"density matrix must be square, got shape {m.shape}")
    return DensityDiagnostics(
        trace_deviation=float(abs(np.trace(m) - 1.0)),
        hermiticity_deviation=float(np.max(np.abs(m - m.conj().T))) if m.size else 0.0,
        min_eigenvalue=float(linalg.eigvalsh(hermitize(m))[0]),
    )


def product_state(rho_system: np.ndarray, rho_bath: np.ndarray) -> DensityMatrix:
    """rho_S x rho_R in the system-major basis."""
    return DensityMatrix(np.kron(rho_system, rho_bath), "composite")


# ============================================================
# PARTIAL TRACES
# ============================================================

def _blocks(m: np.ndarray, n_levels: int, n_bath: int) -> np.ndarray:
    dim = n_levels * n_bath
    if m.shape != (dim, dim):
        raise ShapeError(f"matrix of shape {m.shape} is not on a {n_levels} x {n_bath} product space")
    return m.reshape(n_levels, n_bath, n_levels, n_bath)


def partial_trace_bath(rho: Union[DensityMatrix, np.ndarray], n_levels: int, n_bath: int) -> DensityMatrix:
    """(rho_S)_{in} = sum_k rho_{(ik),(nk)}."""
    reduced = np.einsum("ikjk->ij", _blocks(_as_matrix(rho), n_levels, n_bath))
    return DensityMatrix(reduced, "system")


def partial_trace_system(rho: Union[DensityMatrix, np.ndarray], n_levels: int, n_bath: int) -> DensityMatrix:
    """(rho_R)_{jk} = sum_i rho_{(ij),(ik)}."""
    reduced = np.einsum("ijik->jk", _blocks(_as_matrix(rho), n_levels, n_bath))
    return DensityMatrix(reduced, "bath")
