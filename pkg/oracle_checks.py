"""
oracle_checks.py
================
Independent cross-checks of the exact machinery on small instances
(D <= 64). Each oracle recomputes a quantity a second way (explicit
loops, a matrix exponential, a closed form, a finite-time average) and
reports the measured error against a fixed threshold.

A run passes only if every oracle passes.
"""

from dataclasses import dataclass, field
from typing import Callable, List
import logging
import math

import numpy as np
import pandas as pd
from scipy import linalg

from app.core.error_handling import CapacityError
from bath_models import bath_spectrum, gibbs_weights
from config.constants import ORACLE_MAX_DIMENSION
from dynamics import (
    EigenSystem,
    active_gaps,
    degeneracy_classes,
    diagonal_ensemble,
    eigendecompose,
    evolve,
    f_weights,
    f_weights_all_levels,
    initial_composite_state,
    time_average,
    time_average_samples,
)
from app.core.random_streams import random_stream
from experiment_runner import ExperimentConfig
from gibbs_laplace import PartitionModel, deviation_report, gibbs_p0, residue
from hilbert_core import (
    CompositeHamiltonian,
    DensityMatrix,
    SystemSpec,
    build_hamiltonian,
    partial_trace_bath,
    partial_trace_system,
    validate_density_matrix,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class OracleResult:
    name: str
    error: float
    threshold: float
    detail: str = ""

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.error) and self.error <= self.threshold)


@dataclass
class OracleReport:
    dimension: int
    results: List[OracleResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    @property
    def failures(self) -> List[OracleResult]:
        return [r for r in self.results if not r.passed]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([
            {"oracle": r.name, "error": r.error, "threshold": r.threshold, "passed": r.passed, "detail": r.detail}
            for r in self.results
        ])

    def to_json_dict(self) -> dict:
        return {
            "dimension": self.dimension,
            "passed": self.passed,
            "oracles": self.to_frame().to_dict(orient="records"),
        }


def _random_density(dim: int, seed: int) -> np.ndarray:
    rng = random_stream(seed, "oracle/density")
    g = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    rho = g @ g.conj().T
    return rho / np.trace(rho)


# ============================================================
# ORACLES
# ============================================================

def partial_trace_oracle(n_levels: int, n_bath: int, seed: int) -> OracleResult:
    rho = _random_density(n_levels * n_bath, seed)
    system = np.zeros((n_levels, n_levels), dtype=complex)
    bath = np.zeros((n_bath, n_bath), dtype=complex)
    for i in range(n_levels):
        for n in range(n_levels):
            for k in range(n_bath):
                system[i, n] += rho[i * n_bath + k, n * n_bath + k]
    for j in range(n_bath):
        for k in range(n_bath):
            for i in range(n_levels):
                bath[j, k] += rho[i * n_bath + j, i * n_bath + k]
    error = max(
        float(np.max(np.abs(partial_trace_bath(rho, n_levels, n_bath).matrix - system))),
        float(np.max(np.abs(partial_trace_system(rho, n_levels, n_bath).matrix - bath))),
    )
    return OracleResult("partial_trace_brute_force", error, 1e-14)


def eigensystem_oracle(hamiltonian: CompositeHamiltonian, eig: EigenSystem) -> OracleResult:
    t = eig.transform
    scale = max(float(np.linalg.norm(hamiltonian.matrix, 2)), 1.0)
    rebuilt = t.T @ np.diag(eig.frequencies) @ t.conj()
    reconstruction = float(np.max(np.abs(rebuilt - hamiltonian.matrix))) / scale
    unitarity = float(np.max(np.abs(t @ t.conj().T - np.eye(eig.dimension))))
    return OracleResult("eigensystem_reconstruction", max(reconstruction, unitarity), 1e-9,
                        f"reconstruction {reconstruction:.2e}, unitarity {unitarity:.2e}")


def propagator_oracle(hamiltonian: CompositeHamiltonian, eig: EigenSystem, rho0: DensityMatrix,
                      n_times: int = 20) -> OracleResult:
    """evolve() against U rho0 U^H with U = expm(iHt)."""
    scale = max(float(np.linalg.norm(hamiltonian.matrix, 2)), 1.0)
    worst = 0.0
    for t in np.linspace(0.0, 10.0, n_times) / scale:
        u = linalg.expm(1j * hamiltonian.matrix * t)
        reference = u @ rho0.matrix @ u.conj().T
        worst = max(worst, float(np.max(np.abs(evolve(rho0, eig, t).matrix - reference))))
    return OracleResult("propagator_vs_expm", worst, 1e-8)


def evolution_invariants_oracle(eig: EigenSystem, rho0: DensityMatrix, n_times: int = 20) -> OracleResult:
    """Trace, Hermiticity and the spectrum of rho(t) stay those of rho0."""
    span = max(float(eig.frequencies[-1] - eig.frequencies[0]), 1.0)
    spectrum0 = linalg.eigvalsh(rho0.matrix)
    worst = 0.0
    for t in np.linspace(0.0, 100.0, n_times) / span:
        rho_t = evolve(rho0, eig, t)
        diag = validate_density_matrix(rho_t)
        drift = float(np.max(np.abs(linalg.eigvalsh(rho_t.matrix) - spectrum0)))
        worst = max(worst, diag.trace_deviation, diag.hermiticity_deviation, drift)
    return OracleResult("evolution_invariants", worst, 1e-9)


def weight_sum_oracle(p0: float, weights: np.ndarray, f: np.ndarray) -> OracleResult:
    return OracleResult("weights_times_f_equals_p0", abs(float(np.dot(weights, f)) - p0), 1e-10)


def sum_rule_oracle(eig: EigenSystem, classes, initial_level: int) -> OracleResult:
    table = f_weights_all_levels(eig, classes, initial_level)
    return OracleResult("unitarity_sum_rule", float(np.max(np.abs(table.sum(axis=0) - 1.0))), 1e-10)


def quadruple_sum_oracle(eig: EigenSystem, classes, initial_level: int) -> OracleResult:
    """f_j as the literal four-index contraction restricted to same-class pairs."""
    n = eig.n_bath
    t = eig.transform
    source = t[:, initial_level * n:(initial_level + 1) * n]
    target = t[:, :n]
    mask = (np.asarray(classes.labels)[:, None] == np.asarray(classes.labels)[None, :]).astype(float)
    brute = np.real(np.einsum("lj,mj,lk,mk,lm->j", source.conj(), source, target, target.conj(), mask))
    fast = f_weights(eig, classes, n, 0, initial_level)
    return OracleResult("f_weights_quadruple_sum", float(np.max(np.abs(brute - fast))), 1e-10)


def time_average_oracle(eig: EigenSystem, rho0: DensityMatrix, p0: float,
                        horizon_factor: float, max_samples: int) -> OracleResult:
    gaps = active_gaps(eig, rho0)
    if gaps.minimum is None:
        horizon, threshold = 1.0, 1e-12
    else:
        horizon = horizon_factor / gaps.minimum
        threshold = 10.0 / horizon_factor
    n_samples = time_average_samples(horizon, gaps.maximum, max_samples)
    p_bar = float(time_average(rho0, eig, horizon, n_samples).matrix[0, 0].real)
    return OracleResult("time_average_vs_diagonal_ensemble", abs(p_bar - p0), threshold,
                        f"T={horizon:.3e}, samples={n_samples}, P0(T)={p_bar:.10f}, P0={p0:.10f}")


def rabi_oracle(coupling: float = 0.3, gap: float = 1.0) -> OracleResult:
    """Single bath level: P0 = 1 - 2 lambda^2 / (4 lambda^2 + delta^2), and 1/2 at delta = 0."""
    worst = 0.0
    for delta in (gap, 0.0):
        matrix = np.array([[0.0, coupling], [coupling, delta]])
        h = CompositeHamiltonian.from_matrix(matrix, SystemSpec.two_level(gap), 1)
        eig = eigendecompose(h)
        result = diagonal_ensemble(eig, initial_composite_state(0, np.array([1.0])),
                                   degeneracy_classes(eig.frequencies))
        expected = 1 - 2 * coupling ** 2 / (4 * coupling ** 2 + delta ** 2)
        worst = max(worst, abs(result.p0 - expected))
    return OracleResult("rabi_closed_form", worst, 1e-10)


def residue_oracle() -> OracleResult:
    """Classical ideal gas, Np = 2, delta = 1, n = 0, x = 1: |residue| = pi^-3."""
    estimate = residue(0, 1.0, 1.0, PartitionModel("classical-ideal-gas", n_particles=2))
    closed = math.pi ** -3
    error = max(estimate.relative_error, abs(abs(estimate.formula) - closed) / closed)
    return OracleResult("residue_numeric_limit", error, 1e-6, f"halvings={estimate.halvings}")


def gibbs_round_trip_oracle(betas, delta: float) -> OracleResult:
    """Skips beta * delta > 10, where 1 - P0 has lost too many digits to invert."""
    worst = 0.0
    for beta in betas:
        if beta * delta > 10:
            continue
        worst = max(worst, abs(deviation_report(gibbs_p0(beta, delta), beta, delta).beta_eff - beta))
    return OracleResult("gibbs_round_trip", worst, 1e-10)


def density_validity_oracle(state: DensityMatrix) -> OracleResult:
    diag = validate_density_matrix(state)
    error = max(diag.trace_deviation, diag.hermiticity_deviation, max(0.0, -diag.min_eigenvalue))
    return OracleResult("diagonal_ensemble_density_valid", error, 1e-10, "; ".join(diag.violations()))


# ============================================================
# DRIVER
# ============================================================

def _guarded(name: str, check: Callable[[], OracleResult]) -> OracleResult:
    try:
        return check()
    except Exception as e:
        logger.error(f"Oracle {name} raised: {e}")
        return OracleResult(name, math.inf, 0.0, f"{type(e).__name__}: {e}")


def run_oracle_check(config: ExperimentConfig, max_dimension: int = ORACLE_MAX_DIMENSION) -> OracleReport:
    """
    Runs every oracle on the first (beta, lambda, seed) of the config.
    Refuses instances larger than max_dimension.
    """
    n_levels, n_bath = config.system.n_levels, config.bath.n_states
    dim = n_levels * n_bath
    if dim > max_dimension:
        raise CapacityError(f"oracle checks need D <= {max_dimension}, config has D = {dim}")

    beta, coupling_strength, seed = config.betas[0], config.lambdas[0], config.seeds[0]
    spectrum = bath_spectrum(config.bath.with_overrides(seed=seed))
    hamiltonian = build_hamiltonian(config.system, spectrum.energies,
                                    config.coupling.with_overrides(strength=coupling_strength, seed=seed),
                                    config.max_dimension)
    eig = eigendecompose(hamiltonian)
    classes = degeneracy_classes(eig.frequencies, config.degeneracy_tolerance)
    weights = gibbs_weights(spectrum, beta, config.max_beta)
    rho0 = initial_composite_state(config.initial_level, weights, n_levels)
    result = diagonal_ensemble(eig, rho0, classes, config.initial_level)
    settings = config.time_average

    checks = [
        ("partial_trace_brute_force", lambda: partial_trace_oracle(n_levels, n_bath, seed)),
        ("eigensystem_reconstruction", lambda: eigensystem_oracle(hamiltonian, eig)),
        ("propagator_vs_expm", lambda: propagator_oracle(hamiltonian, eig, rho0)),
        ("evolution_invariants", lambda: evolution_invariants_oracle(eig, rho0)),
        ("weights_times_f_equals_p0", lambda: weight_sum_oracle(result.p0, weights.weights, result.f_weights)),
        ("unitarity_sum_rule", lambda: sum_rule_oracle(eig, classes, config.initial_level)),
        ("f_weights_quadruple_sum", lambda: quadruple_sum_oracle(eig, classes, config.initial_level)),
        ("time_average_vs_diagonal_ensemble",
         lambda: time_average_oracle(eig, rho0, result.p0, settings.horizon_factor, settings.max_samples)),
        ("rabi_closed_form", rabi_oracle),
        ("residue_numeric_limit", residue_oracle),
        ("gibbs_round_trip", lambda: gibbs_round_trip_oracle(config.betas, config.system.gap)),
        ("diagonal_ensemble_density_valid", lambda: density_validity_oracle(result.system_state)),
    ]

    report = OracleReport(dimension=dim)
    for name, check in checks:
        outcome = _guarded(name, check)
        report.results.append(outcome)
        level = logging.INFO if outcome.passed else logging.ERROR
        logger.log(level, f"{name}: error {outcome.error:.3e} vs {outcome.threshold:.1e} "
                          f"-> {'pass' if outcome.passed else 'FAIL'}")
    return report


if __name__ == "__main__":
    print("=" * 60)
    print("TEST 1: default small instance passes every oracle")
    print("=" * 60)
    report = run_oracle_check(ExperimentConfig.build({"bath": {"model": "random-matrix", "n_states": 8}}))
    print(report.to_frame().to_string(index=False))
    assert report.passed

    print("\n" + "=" * 60)
    print("TEST 2: over-merged degeneracy classes are caught")
    print("=" * 60)
    bad = run_oracle_check(ExperimentConfig.build({"bath": {"model": "random-matrix", "n_states": 8}},
                                                  degeneracy_tolerance=1e3, lambdas=[0.3]))
    print([r.name for r in bad.failures])
    assert [r.name for r in bad.failures] == ["time_average_vs_diagonal_ensemble"]
