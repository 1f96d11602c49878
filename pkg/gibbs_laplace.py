"""
gibbs_laplace.py
================
The canonical-ensemble prediction for the system populations, deviation
metrics against the simulated diagonal ensemble, and the residue analysis
of the inverse Laplace transform of Z(beta) / (1 + exp(-beta delta)).

Partition models
----------------
  two-level-gas         (1 + exp(-beta eps))^Np
  classical-ideal-gas   c * beta^(-3 Np / 2), principal branch, pole at 0
  oscillator-bath       prod_i (1 - exp(-beta w_i))^-1, poles at 2 pi i k / w_i
  explicit-spectrum     sum_k exp(-beta E_k)
  constant              c

Every model is divided by Z(reference_beta) (default 1.0) so that Z(beta)
is normalized by a temperature-independent constant; reference_beta=None
switches normalization off.

Residues
--------
1 + exp(-beta delta) has simple zeros at beta_n = i (2n+1) pi / delta with
derivative delta, so the inverse-transform integrand exp(beta x) rhs(beta)
has residue exp(beta_n x) Z(beta_n) / delta there. The numeric check takes
the mean of (beta - beta_n) exp(beta x) rhs(beta) on shrinking circles.
"""

from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence, Tuple
import logging
import math

import numpy as np
import pandas as pd
from scipy.special import expit, logit, softmax

from app.core.error_handling import (
    ConditioningError,
    DomainError,
    PoleCollisionError,
    ValidationError,
    log_performance,
)
from app.core.performance import ordered_map
from config.constants import (
    DEFAULT_REFERENCE_BETA,
    MODEL_POLE_TOL,
    POLE_COLLISION_TOL,
    POLE_ZERO_TOL,
    PROBABILITY_EDGE_TOL,
    RESIDUE_AGREEMENT_RTOL,
    RESIDUE_CIRCLE_POINTS,
    RESIDUE_MAX_HALVINGS,
    RESIDUE_ZERO_TOL,
    SYMMETRY_CANCEL_RTOL,
)

logger = logging.getLogger(__name__)

PARTITION_KINDS = ("two-level-gas", "classical-ideal-gas", "oscillator-bath", "explicit-spectrum", "constant")
VERDICTS = ("converged", "oscillatory", "diverging")


# ============================================================
# GIBBS PREDICTION
# ============================================================

def _check_temperature(beta: float, delta: float) -> Tuple[float, float]:
    beta, delta = float(beta), float(delta)
    if not (np.isfinite(beta) and beta >= 0):
        raise DomainError(f"beta must be finite and >= 0, got {beta}")
    if not (np.isfinite(delta) and delta > 0):
        raise DomainError(f"delta must be finite and > 0, got {delta}")
    return beta, delta


def gibbs_p0(beta: float, delta: float) -> float:
    """1 / (1 + exp(-beta delta))."""
    beta, delta = _check_temperature(beta, delta)
    return float(expit(beta * delta))


def gibbs_populations(beta: float, level_energies: Sequence[float]) -> np.ndarray:
    """Canonical populations of an n-level system; entry 0 equals gibbs_p0 for two levels."""
    energies = np.asarray(level_energies, dtype=float)
    beta = float(beta)
    if not (np.isfinite(beta) and beta >= 0):
        raise DomainError(f"beta must be finite and >= 0, got {beta}")
    return softmax(-beta * energies)


@dataclass(frozen=True)
class GibbsPrediction:
    beta: float
    delta: float
    p0: float

    @classmethod
    def at(cls, beta: float, delta: float) -> "GibbsPrediction":
        return cls(beta=float(beta), delta=float(delta), p0=gibbs_p0(beta, delta))


@dataclass(frozen=True)
class DeviationReport:
    """
    deviation = P0_sim - P0_gibbs. beta_eff is the inverse temperature a
    canonical state would need to reproduce P0_sim; it is +-inf when P0_sim
    sits at 0 or 1 and beta_eff_bounded is then False.
    """
    p0_sim: float
    p0_gibbs: float
    deviation: float
    beta_eff: float
    beta_eff_bounded: bool


def _effective_beta(p0: float, p1: float, gap: float) -> float:
    if p0 <= PROBABILITY_EDGE_TOL:
        return -math.inf
    if p1 <= PROBABILITY_EDGE_TOL:
        return math.inf
    return math.log(p0 / p1) / gap


def deviation_report(sim,
                     beta: float,
                     delta: Optional[float] = None,
                     level_energies: Optional[Sequence[float]] = None) -> DeviationReport:
    """
    sim is a DiagonalEnsembleResult (or a bare P0). For more than two levels
    pass level_energies; beta_eff then uses ln(P0/P1) / (E1 - E0).
    """
    populations = getattr(sim, "populations", None)
    p0 = float(sim.p0 if hasattr(sim, "p0") else sim)

    if level_energies is not None and len(level_energies) > 2:
        energies = np.asarray(level_energies, dtype=float)
        p0_gibbs = float(gibbs_populations(beta, energies)[0])
        if populations is None:
            raise ValidationError("n-level deviation needs the simulated populations")
        gap = float(energies[1] - energies[0])
        beta_eff = _effective_beta(p0, float(populations[1]), gap)
    else:
        if delta is None:
            if level_energies is None:
                raise ValidationError("deviation_report needs delta or level_energies")
            delta = float(level_energies[1] - level_energies[0])
        p0_gibbs = gibbs_p0(beta, delta)
        gap = float(delta)
        if PROBABILITY_EDGE_TOL < p0 < 1.0 - PROBABILITY_EDGE_TOL:
            beta_eff = float(logit(p0)) / gap
        else:
            beta_eff = _effective_beta(p0, 1.0 - p0, gap)

    return DeviationReport(
        p0_sim=p0,
        p0_gibbs=p0_gibbs,
        deviation=p0 - p0_gibbs,
        beta_eff=beta_eff,
        beta_eff_bounded=bool(np.isfinite(beta_eff)),
    )


def p0_quadrature(profile, beta: float, partition: Optional[float] = None) -> float:
    """
    Discretized integral of A(x) f(x) Omega(x) dx over the bins of an FProfile.

    With partition=None the bins normalize themselves (Z is the same
    quadrature with f = 1). An explicit partition must be the plain
    sum_j exp(-beta E_j).
    """
    beta = float(beta)
    if not (np.isfinite(beta) and beta >= 0):
        raise DomainError(f"beta must be finite and >= 0, got {beta}")
    present = np.asarray(profile.present, dtype=bool)
    if not np.any(present):
        raise DomainError("f profile has no populated bins")

    x = profile.centers[present]
    mass = profile.omega[present] * profile.widths[present]
    f = profile.f_mean[present]

    if partition is None:
        boltzmann = np.exp(-beta * (x - x.min()))
        return float(np.sum(boltzmann * f * mass) / np.sum(boltzmann * mass))
    return float(np.sum(np.exp(-beta * x) * f * mass) / partition)


# ============================================================
# PARTITION MODELS
# ============================================================

@dataclass(frozen=True)
class PartitionModel:
    kind: str
    n_particles: int = 1
    level_gap: float = 1.0
    volume_factor: float = 1.0
    frequencies: Tuple[float, ...] = ()
    energies: Tuple[float, ...] = ()
    reference_beta: Optional[float] = DEFAULT_REFERENCE_BETA
    _normalization: complex = field(init=False, repr=False, compare=False, default=1.0)

    def __post_init__(self):
        if self.kind not in PARTITION_KINDS:
            raise ValidationError(f"unknown partition model '{self.kind}' (expected one of {PARTITION_KINDS})")
        object.__setattr__(self, "frequencies", tuple(float(w) for w in self.frequencies))
        object.__setattr__(self, "energies", tuple(float(e) for e in self.energies))

        if self.kind in ("two-level-gas", "classical-ideal-gas") and int(self.n_particles) < 1:
            raise ValidationError(f"n_particles must be >= 1, got {self.n_particles}")
        if self.kind == "two-level-gas" and not (np.isfinite(self.level_gap) and self.level_gap > 0):
            raise ValidationError(f"level_gap must be > 0, got {self.level_gap}")
        if self.kind in ("classical-ideal-gas", "constant") and not np.isfinite(self.volume_factor):
            raise ValidationError("volume_factor must be finite")
        if self.kind == "oscillator-bath":
            if not self.frequencies or not all(np.isfinite(w) and w > 0 for w in self.frequencies):
                raise ValidationError("oscillator-bath needs positive frequencies")
        if self.kind == "explicit-spectrum":
            if not self.energies or not all(np.isfinite(e) for e in self.energies):
                raise ValidationError("explicit-spectrum needs a finite, non-empty energy list")
        if self.reference_beta is not None and not (np.isfinite(self.reference_beta) and self.reference_beta > 0):
            raise ValidationError(f"reference_beta must be > 0, got {self.reference_beta}")

        normalization = 1.0 + 0j
        if self.reference_beta is not None:
            normalization = self.raw_value(self.reference_beta)
            if normalization == 0:
                raise DomainError(f"Z vanishes at reference_beta={self.reference_beta}")
        object.__setattr__(self, "_normalization", normalization)

    @property
    def normalization(self) -> complex:
        return self._normalization

    def nearest_pole_distance(self, beta: complex) -> float:
        """Distance from beta to the closest pole of Z itself (inf for entire models)."""
        beta = complex(beta)
        if self.kind == "classical-ideal-gas":
            return abs(beta)
        if self.kind == "oscillator-bath":
            distances = []
            for w in self.frequencies:
                k = round(beta.imag * w / (2 * math.pi))
                distances.append(abs(beta - 2j * math.pi * k / w))
            return min(distances)
        return math.inf

    def raw_value(self, beta: complex) -> complex:
        beta = complex(beta)
        if self.nearest_pole_distance(beta) <= MODEL_POLE_TOL:
            raise PoleCollisionError(f"{self.kind} partition function has a pole at beta={beta}")

        if self.kind == "two-level-gas":
            return (1.0 + np.exp(-beta * self.level_gap)) ** int(self.n_particles)
        if self.kind == "classical-ideal-gas":
            return self.volume_factor * np.power(beta, -1.5 * int(self.n_particles))
        if self.kind == "oscillator-bath":
            w = np.asarray(self.frequencies)
            return complex(np.prod(1.0 / (1.0 - np.exp(-beta * w))))
        if self.kind == "explicit-spectrum":
            return complex(np.sum(np.exp(-beta * np.asarray(self.energies))))
        return complex(self.volume_factor)

    def value(self, beta: complex) -> complex:
        """Normalized Z(beta) / Z(reference_beta)."""
        return complex(self.raw_value(beta) / self._normalization)

    def describe(self) -> dict:
        return {
            "kind": self.kind,
            "n_particles": int(self.n_particles),
            "level_gap": self.level_gap,
            "volume_factor": self.volume_factor,
            "frequencies": list(self.frequencies),
            "energies": list(self.energies),
            "reference_beta": self.reference_beta,
        }


def partition_value(model: PartitionModel, beta: complex, normalized: bool = False) -> complex:
    """Z(beta) of the model; normalized=True divides by Z(reference_beta)."""
    return model.value(beta) if normalized else complex(model.raw_value(beta))


# ============================================================
# POLES AND RESIDUES
# ============================================================

def _check_delta(delta: float) -> float:
    delta = float(delta)
    if not (np.isfinite(delta) and delta > 0):
        raise DomainError(f"delta must be finite and > 0, got {delta}")
    return delta


def poles(delta: float, n_values: Iterable[int]) -> np.ndarray:
    """beta_n = i (2n + 1) pi / delta."""
    delta = _check_delta(delta)
    n = np.asarray(list(n_values), dtype=float)
    return 1j * (2 * n + 1) * np.pi / delta


def symmetric_range(k_max: int) -> range:
    """n = -K..K-1, so that n and -n-1 pair up as complex conjugates."""
    return range(-int(k_max), int(k_max))


def rhs_function(beta: complex, delta: float, model: PartitionModel) -> complex:
    """Z(beta) / (1 + exp(-beta delta)) with Z normalized."""
    delta = _check_delta(delta)
    beta = complex(beta)
    n = round((beta.imag * delta / math.pi - 1) / 2)
    nearest = 1j * (2 * n + 1) * math.pi / delta
    if abs(beta - nearest) <= POLE_COLLISION_TOL:
        raise PoleCollisionError(f"beta={beta} is within {POLE_COLLISION_TOL} of the pole n={n}")
    return model.value(beta) / (1.0 + np.exp(-beta * delta))


@dataclass(frozen=True)
class ResidueEstimate:
    n: int
    x: float
    pole: complex
    formula: complex
    numeric: Optional[complex]
    radius: Optional[float]
    halvings: int

    @property
    def relative_error(self) -> Optional[float]:
        if self.numeric is None:
            return None
        scale = abs(self.formula)
        if scale <= RESIDUE_ZERO_TOL:
            return abs(self.numeric - self.formula)
        return abs(self.numeric - self.formula) / scale


def _circle_mean(pole: complex, radius: float, x: float, delta: float, model: PartitionModel) -> complex:
    theta = 2 * np.pi * np.arange(RESIDUE_CIRCLE_POINTS) / RESIDUE_CIRCLE_POINTS
    offsets = radius * np.exp(1j * theta)
    samples = [o * np.exp((pole + o) * x) * rhs_function(pole + o, delta, model) for o in offsets]
    return complex(np.mean(samples))


def numeric_residue(pole: complex, x: float, delta: float, model: PartitionModel) -> Tuple[complex, float, int]:
    """
    Shrinking-circle limit. Returns (estimate, final radius, halvings).
    Raises ConditioningError if successive estimates never agree.
    """
    model_distance = model.nearest_pole_distance(pole)
    radius = min(0.25 * math.pi / delta, 0.5 * model_distance)
    previous = _circle_mean(pole, radius, x, delta, model)
    history = [previous]

    for halving in range(1, RESIDUE_MAX_HALVINGS + 1):
        radius /= 2
        current = _circle_mean(pole, radius, x, delta, model)
        history.append(current)
        if abs(current - previous) <= RESIDUE_AGREEMENT_RTOL * abs(current) + RESIDUE_ZERO_TOL:
            return current, radius, halving
        previous = current

    raise ConditioningError(
        f"residue limit at {pole} did not settle after {RESIDUE_MAX_HALVINGS} halvings",
        diagnostics={"pole": pole, "x": x, "final_radius": radius,
                     "last_estimates": [complex(h) for h in history[-3:]]},
    )


def residue(n: int, x: float, delta: float, model: PartitionModel, numeric: bool = True) -> ResidueEstimate:
    delta = _check_delta(delta)
    x = float(x)
    pole = complex(poles(delta, [n])[0])
    if model.nearest_pole_distance(pole) <= MODEL_POLE_TOL:
        raise PoleCollisionError(f"pole n={n} at {pole} coincides with a pole of the {model.kind} model")

    formula = complex(np.exp(pole * x) * model.value(pole) / delta)
    estimate, radius, halvings = (None, None, 0)
    if numeric:
        estimate, radius, halvings = numeric_residue(pole, x, delta, model)
    return ResidueEstimate(n=int(n), x=x, pole=pole, formula=formula,
                           numeric=estimate, radius=radius, halvings=halvings)


# ============================================================
# PARTIAL SUMS
# ============================================================

@dataclass(frozen=True)
class ConvergenceVerdict:
    x: float
    verdict: str
    decay_exponent: Optional[float]
    tail_magnitude: float
    growth_ratio: Optional[float]
    symmetry_cancellation: bool

    def __post_init__(self):
        if self.verdict not in VERDICTS:
            raise ValidationError(f"unknown verdict '{self.verdict}' (expected one of {VERDICTS})")


@dataclass(frozen=True)
class LaplaceReport:
    """
    terms[i, k]          formula residue at pole n_values[i] and x_grid[k]
                         (0 where the term was excluded)
    numeric[i, k]        shrinking-circle residue, NaN where not computed
    partial_sums[K-1, k] S_K(x_k) = sum over n = -K..K-1
    excluded             (n, reason) for terms dropped from the sums
    unsettled_residues   {n, x, error, diagnostics} for numeric limits that did
                         not settle; the formula term is still summed
    """
    delta: float
    model: PartitionModel
    n_values: np.ndarray
    poles: np.ndarray
    x_grid: np.ndarray
    terms: np.ndarray
    numeric: np.ndarray
    partial_sums: np.ndarray
    verdicts: List[ConvergenceVerdict]
    excluded: List[Tuple[int, str]]
    zeros_at_poles: bool
    decreasing_magnitude: bool
    unsettled_residues: List[dict] = field(default_factory=list)

    @property
    def k_max(self) -> int:
        return self.partial_sums.shape[0]

    def max_residue_disagreement(self) -> Optional[float]:
        errors = []
        for i, k in zip(*np.nonzero(np.isfinite(self.numeric))):
            formula = self.terms[i, k]
            scale = abs(formula)
            diff = abs(self.numeric[i, k] - formula)
            errors.append(diff / scale if scale > RESIDUE_ZERO_TOL else diff)
        return max(errors) if errors else None

    def to_frame(self) -> pd.DataFrame:
        """One row per (n, x) term."""
        rows = []
        excluded = dict(self.excluded)
        for i, n in enumerate(self.n_values):
            for k, x in enumerate(self.x_grid):
                term, num = self.terms[i, k], self.numeric[i, k]
                rows.append({
                    "n": int(n),
                    "pole_imag": float(self.poles[i].imag),
                    "x": float(x),
                    "formula_re": float(term.real),
                    "formula_im": float(term.imag),
                    "numeric_re": float(num.real),
                    "numeric_im": float(num.imag),
                    "magnitude": float(abs(term)),
                    "excluded": int(n) in excluded,
                    "exclusion_reason": excluded.get(int(n), ""),
                })
        return pd.DataFrame(rows)

    def partial_sums_frame(self) -> pd.DataFrame:
        rows = []
        for K in range(1, self.k_max + 1):
            for k, x in enumerate(self.x_grid):
                s = self.partial_sums[K - 1, k]
                rows.append({"K": K, "x": float(x), "sum_re": float(s.real), "sum_im": float(s.imag),
                             "sum_abs": float(abs(s))})
        return pd.DataFrame(rows)

    def to_json_dict(self) -> dict:
        def pair(z):
            return [float(np.real(z)), float(np.imag(z))]

        return {
            "delta": self.delta,
            "model": self.model.describe(),
            "k_max": self.k_max,
            "x_grid": [float(x) for x in self.x_grid],
            "poles": [{"n": int(n), "beta": pair(p)} for n, p in zip(self.n_values, self.poles)],
            "residues": [
                {"n": int(n), "x": float(x), "formula": pair(self.terms[i, k]), "numeric": pair(self.numeric[i, k])}
                for i, n in enumerate(self.n_values) for k, x in enumerate(self.x_grid)
            ],
            "partial_sums": {
                f"{float(x):g}": [pair(s) for s in self.partial_sums[:, k]] for k, x in enumerate(self.x_grid)
            },
            "verdicts": [
                {"x": v.x, "verdict": v.verdict, "decay_exponent": v.decay_exponent,
                 "tail_magnitude": v.tail_magnitude, "growth_ratio": v.growth_ratio,
                 "symmetry_cancellation": v.symmetry_cancellation}
                for v in self.verdicts
            ],
            "criteria": {
                "zeros_at_poles": self.zeros_at_poles,
                "decreasing_magnitude": self.decreasing_magnitude,
            },
            "excluded": [{"n": n, "reason": reason} for n, reason in self.excluded],
            "unsettled_residues": self.unsettled_residues,
            "max_residue_disagreement": self.max_residue_disagreement(),
        }


def _decay_exponent(pole_imag: np.ndarray, magnitudes: np.ndarray) -> Optional[float]:
    keep = magnitudes > RESIDUE_ZERO_TOL
    if np.count_nonzero(keep) < 2:
        return None
    slope, _ = np.polyfit(np.log(np.abs(pole_imag[keep])), np.log(magnitudes[keep]), 1)
    return float(slope)


def _verdict(x: float, n_values: np.ndarray, pole_imag: np.ndarray,
             column: np.ndarray, sums: np.ndarray, all_zero: bool) -> ConvergenceVerdict:
    forward = n_values >= 0
    magnitudes = np.abs(column[forward])
    exponent = _decay_exponent(pole_imag[forward], magnitudes)
    tail = float(magnitudes[-1]) if magnitudes.size else 0.0

    k_max = sums.size
    half = abs(sums[max(k_max // 2, 1) - 1])
    growth = float(abs(sums[-1]) / half) if half > 0 else None

    total_weight = float(np.sum(np.abs(column)))
    cancels = total_weight > 0 and abs(sums[-1]) <= SYMMETRY_CANCEL_RTOL * total_weight

    if all_zero:
        verdict = "converged"
    elif exponent is not None and exponent < -1:
        verdict = "converged"
    elif exponent is not None and exponent > 0:
        verdict = "diverging"
    elif growth is not None and growth > 1.5:
        verdict = "diverging"
    else:
        verdict = "oscillatory"

    return ConvergenceVerdict(x=float(x), verdict=verdict, decay_exponent=exponent,
                              tail_magnitude=tail, growth_ratio=growth, symmetry_cancellation=bool(cancels))


@log_performance
def residue_partial_sums(x_grid: Sequence[float],
                         delta: float,
                         model: PartitionModel,
                         k_max: int,
                         numeric: bool = True,
                         n_jobs: int = 1) -> LaplaceReport:
    delta = _check_delta(delta)
    if int(k_max) < 2:
        raise ValidationError(f"k_max must be >= 2, got {k_max}")
    x_grid = np.asarray(list(x_grid), dtype=float)
    if x_grid.size == 0 or not np.all(np.isfinite(x_grid)):
        raise ValidationError("x grid must be a non-empty list of finite values")

    n_values = np.arange(-int(k_max), int(k_max))
    pole_list = poles(delta, n_values)

    def evaluate(n: int):
        pole = complex(pole_list[n + int(k_max)])
        if model.nearest_pole_distance(pole) <= MODEL_POLE_TOL:
            return n, None, None, "model pole collision"
        z = model.value(pole)
        formulas = np.exp(pole * x_grid) * z / delta
        numerics = np.full(x_grid.size, np.nan + 0j)
        unsettled = []
        if numeric:
            for k, x in enumerate(x_grid):
                try:
                    numerics[k] = numeric_residue(pole, float(x), delta, model)[0]
                except ConditioningError as e:
                    logger.warning(f"Residue n={n}, x={x}: {e}")
                    unsettled.append({"n": n, "x": float(x), "error": str(e), "diagnostics": e.diagnostics})
        return n, z, (formulas, numerics), unsettled

    terms = np.zeros((n_values.size, x_grid.size), dtype=complex)
    numerics = np.full((n_values.size, x_grid.size), np.nan + 0j)
    z_at_poles = np.full(n_values.size, np.nan + 0j)
    excluded: List[Tuple[int, str]] = []
    unsettled: List[dict] = []

    for n, z, values, detail in ordered_map(evaluate, (int(n) for n in n_values), n_jobs=n_jobs):
        i = n + int(k_max)
        if values is None:
            excluded.append((n, detail))
            continue
        unsettled.extend(detail)
        z_at_poles[i] = z
        terms[i], numerics[i] = values

    # S_K adds the pair (-K, K-1) to S_{K-1}
    pair_terms = terms[k_max - 1::-1] + terms[k_max:]
    partial_sums = np.cumsum(pair_terms, axis=0)

    included = np.isfinite(z_at_poles)
    all_zero = bool(included.any() and np.all(np.abs(z_at_poles[included]) <= POLE_ZERO_TOL))
    forward_mags = np.abs(z_at_poles[k_max:])
    forward_mags = forward_mags[np.isfinite(forward_mags)]
    decreasing = bool(
        forward_mags.size >= 2
        and np.all(np.diff(forward_mags) <= 1e-12 * forward_mags[:-1])
        and forward_mags[-1] < forward_mags[0]
    )

    verdicts = [
        _verdict(x, n_values, pole_list.imag, terms[:, k], partial_sums[:, k], all_zero)
        for k, x in enumerate(x_grid)
    ]
    for v in verdicts:
        logger.info(f"Laplace x={v.x:g}: {v.verdict} (decay exponent {v.decay_exponent})")

    return LaplaceReport(
        delta=delta,
        model=model,
        n_values=n_values,
        poles=pole_list,
        x_grid=x_grid,
        terms=terms,
        numeric=numerics,
        partial_sums=partial_sums,
        verdicts=verdicts,
        excluded=excluded,
        zeros_at_poles=all_zero,
        decreasing_magnitude=decreasing,
        unsettled_residues=unsettled,
    )


if __name__ == "__main__":
    print("=" * 60)
    print("TEST 1: canonical ground-state probability")
    print("=" * 60)
    for bd, expected in [(0.0, 0.5), (math.log(2), 2 / 3), (math.log(3), 0.75)]:
        print(f"beta*delta = {bd:.4f}  |  P0 = {gibbs_p0(bd, 1.0):.12f}")
        assert abs(gibbs_p0(bd, 1.0) - expected) < 1e-15

    print("\n" + "=" * 60)
    print("TEST 2: classical ideal gas residues decay like n^(-3Np/2)")
    print("=" * 60)
    gas = PartitionModel("classical-ideal-gas", n_particles=2)
    report = residue_partial_sums([0.0, 1.0], 1.0, gas, 32)
    for v in report.verdicts:
        print(f"x = {v.x}  |  {v.verdict}  |  exponent {v.decay_exponent:.6f}")
    print(f"max formula/numeric disagreement: {report.max_residue_disagreement():.2e}")
    assert abs(report.verdicts[0].decay_exponent + 3.0) < 0.15
