"""
experiment_runner.py
================
Orchestration: turn one resolved config into records comparing the
infinite-time ground-state probability of the system with the canonical
prediction, over a grid of (beta, lambda, seed).

Work is organized around the expensive step. The Hamiltonian depends on
(lambda, seed) only, so each (lambda, seed) pair is one work unit: build,
diagonalize and partition the spectrum once, then evaluate every beta
against the same eigensystem. Units run on the worker pool; records are
re-assembled in (beta index, lambda index, seed index) order regardless
of completion order.

A failing point never aborts a sweep: its record carries status="failed"
and the error message, and the remaining points still run.

CHANGE LOG
----------
- run_size_scan(): repeats the sweep over several bath sizes and reduces
  the deviation over seeds into a trend table.
"""

from dataclasses import asdict, dataclass, field, replace
from typing import Dict, Iterable, List, Optional, Sequence, Tuple
import logging
import math
import time

import numpy as np
import pandas as pd
from tqdm import tqdm

from app.core.data_loader import load_config, resolve_config
from app.core.error_handling import ConsistencyError, ValidationError, log_performance
from app.core.performance import ordered_map, resolve_threads
from app.core.report_generator import ReportWriter
from bath_models import BathSpec, bath_spectrum, density_of_states, gibbs_weights
from config.constants import (
    MAX_BETA,
    MAX_DIMENSION,
    TIME_AVERAGE_HORIZON_FACTOR,
    TIME_AVERAGE_MAX_SAMPLES,
)
from dynamics import (
    active_gaps,
    bath_energy_shift,
    degeneracy_classes,
    diagonal_ensemble,
    eigendecompose,
    f_binned,
    initial_composite_state,
    time_average,
    time_average_samples,
)
from gibbs_laplace import LaplaceReport, PartitionModel, deviation_report, p0_quadrature, residue_partial_sums
from hilbert_core import CouplingSpec, SystemSpec, build_hamiltonian, validate_density_matrix

logger = logging.getLogger(__name__)

WEIGHT_SUM_TOL = 1e-10


# ============================================================
# CONFIG
# ============================================================

@dataclass(frozen=True)
class TimeAverageSettings:
    enabled: bool = False
    t_avg: Optional[float] = None           # None: horizon_factor / smallest active gap
    horizon_factor: float = TIME_AVERAGE_HORIZON_FACTOR
    n_samples: Optional[int] = None         # None: resolve the largest active gap
    max_samples: int = TIME_AVERAGE_MAX_SAMPLES


@dataclass(frozen=True)
class OutputSettings:
    directory: str = "results"
    prefix: str = "thermaleq"
    dump_density: bool = False
    dump_bath_spectrum: bool = True


@dataclass(frozen=True)
class ExperimentConfig:
    system: SystemSpec
    bath: BathSpec
    coupling: CouplingSpec
    betas: Tuple[float, ...]
    lambdas: Tuple[float, ...]
    seeds: Tuple[int, ...]
    dos_bins: int = 16
    initial_level: int = 0
    degeneracy_tolerance: Optional[float] = None
    time_average: TimeAverageSettings = field(default_factory=TimeAverageSettings)
    output: OutputSettings = field(default_factory=OutputSettings)
    threads: int = 1
    max_dimension: int = MAX_DIMENSION
    max_beta: float = MAX_BETA
    sizes: Tuple[int, ...] = ()

    def __post_init__(self):
        for name in ("betas", "lambdas", "seeds"):
            values = tuple(getattr(self, name))
            if not values:
                raise ValidationError(f"{name} must not be empty")
            object.__setattr__(self, name, values)
        object.__setattr__(self, "sizes", tuple(int(n) for n in self.sizes))
        if not 0 <= self.initial_level < self.system.n_levels:
            raise ValidationError(f"initial_level={self.initial_level} out of range [0, {self.system.n_levels})")

    @property
    def n_points(self) -> int:
        return len(self.betas) * len(self.lambdas) * len(self.seeds)

    @property
    def is_scalar(self) -> bool:
        return self.n_points == 1

    @classmethod
    def from_dict(cls, resolved: dict) -> "ExperimentConfig":
        """Build from a resolved (defaults-filled, validated) config dict."""
        bath = resolved["bath"]
        seeds = tuple(int(s) for s in resolved["seeds"])
        lambdas = tuple(float(x) for x in resolved["lambdas"])
        splittings = bath.get("splittings")
        return cls(
            system=SystemSpec(tuple(float(e) for e in resolved["system"]["level_energies"])),
            bath=BathSpec(
                model=bath["model"],
                n_states=int(bath["n_states"]),
                spectral_width=float(bath["spectral_width"]),
                seed=seeds[0],
                ensemble=bath["ensemble"],
                splittings=tuple(splittings) if splittings is not None else None,
            ),
            coupling=CouplingSpec(strength=lambdas[0], structure=resolved["coupling"]["structure"], seed=seeds[0]),
            betas=tuple(float(b) for b in resolved["betas"]),
            lambdas=lambdas,
            seeds=seeds,
            dos_bins=int(bath["dos_bins"]),
            initial_level=int(resolved["initial_level"]),
            degeneracy_tolerance=resolved["degeneracy_tolerance"],
            time_average=TimeAverageSettings(**resolved["time_average"]),
            output=OutputSettings(**resolved["output"]),
            threads=int(resolved["threads"]),
            max_dimension=int(resolved["max_dimension"]),
            max_beta=float(resolved["max_beta"]),
            sizes=tuple(resolved.get("sizes") or ()),
        )

    @classmethod
    def load(cls, path=None, overrides: Optional[dict] = None, assignments: Iterable[str] = ()) -> "ExperimentConfig":
        return cls.from_dict(load_config(path, overrides, assignments))

    @classmethod
    def build(cls, document: Optional[dict] = None, **overrides) -> "ExperimentConfig":
        """From an in-memory document plus top-level overrides, fully validated."""
        return cls.from_dict(resolve_config(document, overrides))

    def to_dict(self) -> dict:
        """The resolved config document; embedded in every output header."""
        return {
            "system": {"level_energies": list(self.system.level_energies)},
            "bath": {
                "model": self.bath.model,
                "n_states": self.bath.n_states,
                "spectral_width": self.bath.spectral_width,
                "ensemble": self.bath.ensemble,
                "splittings": list(self.bath.splittings) if self.bath.splittings is not None else None,
                "dos_bins": self.dos_bins,
            },
            "coupling": {"structure": self.coupling.structure},
            "betas": list(self.betas),
            "lambdas": list(self.lambdas),
            "seeds": list(self.seeds),
            "sizes": list(self.sizes),
            "initial_level": self.initial_level,
            "degeneracy_tolerance": self.degeneracy_tolerance,
            "time_average": asdict(self.time_average),
            "output": asdict(self.output),
            "threads": self.threads,
            "max_dimension": self.max_dimension,
            "max_beta": self.max_beta,
        }

    def with_bath_size(self, n_states: int) -> "ExperimentConfig":
        return replace(self, bath=self.bath.with_overrides(n_states=n_states))


# ============================================================
# RECORDS
# ============================================================

@dataclass(frozen=True)
class SweepRecord:
    beta_index: int
    lambda_index: int
    seed_index: int
    beta: float
    coupling_strength: float
    seed: int
    n_bath: int
    status: str = "ok"
    error: str = ""
    p0_diag: float = math.nan
    p0_gibbs: float = math.nan
    deviation: float = math.nan
    beta_eff: float = math.nan
    beta_eff_bounded: bool = False
    p0_quadrature: float = math.nan
    weight_sum_residual: float = math.nan
    diagonal_contribution: float = math.nan
    offdiagonal_contribution: float = math.nan
    n_classes: int = 0
    max_class_size: int = 0
    n_degenerate_classes: int = 0
    n_chained_classes: int = 0
    degeneracy_tolerance: float = math.nan
    p0_time_average: float = math.nan
    time_average_deviation: float = math.nan
    time_average_horizon: float = math.nan
    time_average_samples: int = 0
    trace_deviation: float = math.nan
    hermiticity_deviation: float = math.nan
    min_eigenvalue: float = math.nan
    density_valid: bool = False
    bath_energy_initial: float = math.nan
    bath_energy_final: float = math.nan
    populations: Tuple[float, ...] = ()

    @property
    def key(self) -> Tuple[int, int, int]:
        return (self.beta_index, self.lambda_index, self.seed_index)

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def as_row(self, n_levels: int) -> dict:
        row = asdict(self)
        populations = row.pop("populations")
        for level in range(n_levels):
            row[f"p_level_{level}"] = populations[level] if level < len(populations) else math.nan
        row["beta_eff_bounded"] = bool(row["beta_eff_bounded"])
        if not self.beta_eff_bounded:
            row["beta_eff"] = math.nan
        return row


def _failed_record(key: Tuple[int, int, int], config: ExperimentConfig, error: Exception) -> SweepRecord:
    b, l, s = key
    return SweepRecord(
        beta_index=b, lambda_index=l, seed_index=s,
        beta=config.betas[b], coupling_strength=config.lambdas[l], seed=config.seeds[s],
        n_bath=config.bath.n_states, status="failed", error=f"{type(error).__name__}: {error}",
    )


@dataclass
class SweepResult:
    config: ExperimentConfig
    records: List[SweepRecord]
    timings: List[dict] = field(default_factory=list)
    artifacts: Dict[Tuple[int, int, int], dict] = field(default_factory=dict)
    bath_spectra: Dict[int, np.ndarray] = field(default_factory=dict)

    @property
    def failed(self) -> List[SweepRecord]:
        return [r for r in self.records if not r.ok]

    @property
    def ok(self) -> bool:
        return not self.failed

    def to_frame(self) -> pd.DataFrame:
        n_levels = self.config.system.n_levels
        return pd.DataFrame([r.as_row(n_levels) for r in self.records])

    def curve_frame(self) -> pd.DataFrame:
        """D(beta) per coupling strength, reduced over seeds."""
        frame = self.to_frame()
        frame = frame[frame["status"] == "ok"]
        if frame.empty:
            return pd.DataFrame(columns=["beta", "coupling_strength", "mean_deviation", "std_deviation",
                                         "mean_p0_diag", "p0_gibbs", "n_seeds"])
        grouped = frame.groupby(["beta", "coupling_strength"], sort=False)
        return grouped.agg(
            mean_deviation=("deviation", "mean"),
            std_deviation=("deviation", "std"),
            mean_p0_diag=("p0_diag", "mean"),
            p0_gibbs=("p0_gibbs", "first"),
            n_seeds=("deviation", "size"),
        ).reset_index()

    def summary(self) -> dict:
        ok = [r for r in self.records if r.ok]
        deviations = np.array([r.deviation for r in ok])
        return {
            "n_records": len(self.records),
            "n_failed": len(self.failed),
            "max_abs_deviation": float(np.max(np.abs(deviations))) if deviations.size else None,
            "mean_deviation": float(np.mean(deviations)) if deviations.size else None,
            "max_weight_sum_residual": max((r.weight_sum_residual for r in ok), default=None),
            "invalid_density_matrices": sum(1 for r in ok if not r.density_valid),
            "chained_degeneracy_classes": sum(r.n_chained_classes for r in ok),
            "failures": [{"key": list(r.key), "error": r.error} for r in self.failed],
            "curve": self.curve_frame().to_dict(orient="records"),
        }


# ============================================================
# EVALUATION
# ============================================================

@dataclass
class _UnitContext:
    spectrum: object
    eig: object
    classes: object
    dos: object


def _prepare_unit(config: ExperimentConfig, coupling_strength: float, seed: int) -> _UnitContext:
    spectrum = bath_spectrum(config.bath.with_overrides(seed=seed))
    hamiltonian = build_hamiltonian(
        config.system,
        spectrum.energies,
        config.coupling.with_overrides(strength=coupling_strength, seed=seed),
        config.max_dimension,
    )
    eig = eigendecompose(hamiltonian)
    classes = degeneracy_classes(eig.frequencies, config.degeneracy_tolerance)
    return _UnitContext(spectrum=spectrum, eig=eig, classes=classes,
                        dos=density_of_states(spectrum, config.dos_bins))


def _evaluate_point(config: ExperimentConfig, ctx: _UnitContext, key: Tuple[int, int, int]) -> Tuple[SweepRecord, dict]:
    b, l, s = key
    beta = config.betas[b]
    weights = gibbs_weights(ctx.spectrum, beta, config.max_beta)
    rho0 = initial_composite_state(config.initial_level, weights, config.system.n_levels)
    result = diagonal_ensemble(ctx.eig, rho0, ctx.classes, config.initial_level)

    weight_sum_gap = abs(float(np.dot(weights.weights, result.f_weights)) - result.p0)
    if weight_sum_gap > WEIGHT_SUM_TOL:
        raise ConsistencyError(f"sum_j A_j f_j differs from P0 by {weight_sum_gap:.3e}")

    report = deviation_report(result, beta, level_energies=config.system.level_energies)
    profile = f_binned(result.f_weights, ctx.spectrum.energies, ctx.dos)
    validity = validate_density_matrix(result.system_state)
    if not validity.valid:
        logger.warning(f"Point {key}: system state invalid ({'; '.join(validity.violations())})")
    shift = bath_energy_shift(result, weights, ctx.spectrum.energies)
    summary = result.class_summary

    averaged = {}
    artifacts = {"system_state": result.system_state.matrix, "f_weights": result.f_weights,
                 "class_size_histogram": result.class_size_histogram}
    settings = config.time_average
    if settings.enabled:
        gaps = active_gaps(ctx.eig, rho0)
        if settings.t_avg is not None:
            horizon = settings.t_avg
        else:
            horizon = settings.horizon_factor / gaps.minimum if gaps.minimum else 1.0
        n_samples = settings.n_samples or time_average_samples(horizon, gaps.maximum, settings.max_samples)
        state = time_average(rho0, ctx.eig, horizon, n_samples)
        p_bar = float(state.matrix[0, 0].real)
        averaged = {
            "p0_time_average": p_bar,
            "time_average_deviation": abs(p_bar - result.p0),
            "time_average_horizon": horizon,
            "time_average_samples": n_samples,
        }
        artifacts["time_average_state"] = state.matrix

    record = SweepRecord(
        beta_index=b, lambda_index=l, seed_index=s,
        beta=beta, coupling_strength=config.lambdas[l], seed=config.seeds[s],
        n_bath=ctx.spectrum.n_states,
        p0_diag=result.p0,
        p0_gibbs=report.p0_gibbs,
        deviation=report.deviation,
        beta_eff=report.beta_eff,
        beta_eff_bounded=report.beta_eff_bounded,
        p0_quadrature=p0_quadrature(profile, beta),
        weight_sum_residual=weight_sum_gap,
        diagonal_contribution=result.diagonal_contribution,
        offdiagonal_contribution=result.offdiagonal_contribution,
        n_classes=summary["n_classes"],
        max_class_size=summary["max_class_size"],
        n_degenerate_classes=summary["n_degenerate_classes"],
        n_chained_classes=summary["n_chained_classes"],
        degeneracy_tolerance=summary["degeneracy_tolerance"],
        trace_deviation=validity.trace_deviation,
        hermiticity_deviation=validity.hermiticity_deviation,
        min_eigenvalue=validity.min_eigenvalue,
        density_valid=validity.valid,
        bath_energy_initial=shift.initial,
        bath_energy_final=shift.final,
        populations=tuple(float(p) for p in result.populations),
        **averaged,
    )
    return record, artifacts


def _run_unit_safely(config: ExperimentConfig, lambda_index: int, seed_index: int,
                     keep_artifacts: bool) -> Tuple[List[SweepRecord], List[dict], Dict, Optional[np.ndarray]]:
    """
    Evaluates every beta for one (lambda, seed). Exceptions are caught and
    recorded on the affected records instead of propagating.
    """
    lam, seed = config.lambdas[lambda_index], config.seeds[seed_index]
    records, timings, artifacts = [], [], {}

    start = time.perf_counter()
    try:
        ctx = _prepare_unit(config, lam, seed)
    except Exception as e:
        logger.error(f"lambda={lam}, seed={seed}: setup failed: {e}")
        failed = [_failed_record((b, lambda_index, seed_index), config, e) for b in range(len(config.betas))]
        return failed, [{"lambda_index": lambda_index, "seed_index": seed_index, "stage": "setup",
                         "seconds": time.perf_counter() - start}], {}, None
    timings.append({"lambda_index": lambda_index, "seed_index": seed_index, "beta_index": None,
                    "stage": "setup", "seconds": time.perf_counter() - start})

    for b in range(len(config.betas)):
        key = (b, lambda_index, seed_index)
        start = time.perf_counter()
        try:
            record, point_artifacts = _evaluate_point(config, ctx, key)
            if keep_artifacts:
                artifacts[key] = point_artifacts
        except Exception as e:
            logger.error(f"Point beta={config.betas[b]}, lambda={lam}, seed={seed} failed: {e}")
            record = _failed_record(key, config, e)
        records.append(record)
        timings.append({"lambda_index": lambda_index, "seed_index": seed_index, "beta_index": b,
                        "stage": "point", "seconds": time.perf_counter() - start})

    return records, timings, artifacts, ctx.spectrum.energies


@log_performance
def run_sweep(config: ExperimentConfig,
              threads: Optional[int] = None,
              progress: bool = False,
              keep_artifacts: bool = False) -> SweepResult:
    """One record per (beta, lambda, seed), ordered by (beta, lambda, seed) index."""
    n_jobs = resolve_threads(threads if threads is not None else config.threads)
    units = [(l, s) for l in range(len(config.lambdas)) for s in range(len(config.seeds))]
    logger.info(f"Sweep: {config.n_points} points in {len(units)} units, D={config.system.n_levels * config.bath.n_states}, "
                f"threads={n_jobs}")

    collected: Dict[Tuple[int, int, int], SweepRecord] = {}
    timings: List[dict] = []
    artifacts: Dict[Tuple[int, int, int], dict] = {}
    spectra = {}

    results = ordered_map(lambda unit: _run_unit_safely(config, *unit, keep_artifacts), units, n_jobs=n_jobs)
    for unit, (records, unit_timings, unit_artifacts, energies) in zip(
            units, tqdm(results, total=len(units), desc="sweep", disable=not progress)):
        for record in records:
            collected[record.key] = record
        timings.extend(unit_timings)
        artifacts.update(unit_artifacts)
        if energies is not None:
            spectra[unit[1]] = energies

    ordered = [collected[key] for key in sorted(collected)]
    result = SweepResult(config=config, records=ordered, timings=timings, artifacts=artifacts, bath_spectra=spectra)
    if result.failed:
        logger.warning(f"{len(result.failed)} of {len(ordered)} points failed")
    return result


@log_performance
def run_single(config: ExperimentConfig, threads: Optional[int] = None) -> SweepResult:
    """Exactly one (beta, lambda, seed); keeps matrices for optional dumps."""
    if not config.is_scalar:
        raise ValidationError(
            f"simulate needs one beta, one lambda and one seed, got {len(config.betas)}, "
            f"{len(config.lambdas)}, {len(config.seeds)}; use sweep for grids"
        )
    return run_sweep(config, threads=threads, keep_artifacts=True)


@dataclass
class SizeScanResult:
    records: pd.DataFrame
    trend: pd.DataFrame
    sweeps: List[SweepResult]

    @property
    def ok(self) -> bool:
        return all(s.ok for s in self.sweeps)


@log_performance
def run_size_scan(config: ExperimentConfig,
                  sizes: Optional[Sequence[int]] = None,
                  threads: Optional[int] = None,
                  progress: bool = False) -> SizeScanResult:
    """Sweep at each bath size; trend = mean and spread of D over seeds per (beta, lambda, N)."""
    sizes = tuple(sizes or config.sizes)
    if not sizes:
        raise ValidationError("size scan needs at least one bath size (config 'sizes')")

    sweeps, frames = [], []
    for n in sizes:
        sweep = run_sweep(config.with_bath_size(n), threads=threads, progress=progress)
        sweeps.append(sweep)
        frames.append(sweep.to_frame())

    records = pd.concat(frames, ignore_index=True)
    ok = records[records["status"] == "ok"]
    trend = ok.groupby(["beta", "coupling_strength", "n_bath"], sort=True).agg(
        mean_deviation=("deviation", "mean"),
        std_deviation=("deviation", "std"),
        mean_abs_deviation=("deviation", lambda d: float(np.mean(np.abs(d)))),
        mean_p0_diag=("p0_diag", "mean"),
        p0_gibbs=("p0_gibbs", "first"),
        n_seeds=("deviation", "size"),
    ).reset_index()
    return SizeScanResult(records=records, trend=trend, sweeps=sweeps)


@log_performance
def run_laplace(delta: float,
                model: PartitionModel,
                k_max: int,
                x_grid: Sequence[float],
                numeric: bool = True,
                threads: Optional[int] = None) -> LaplaceReport:
    report = residue_partial_sums(x_grid, delta, model, k_max, numeric=numeric, n_jobs=resolve_threads(threads))
    if report.excluded:
        logger.warning(f"{len(report.excluded)} residue term(s) excluded: {report.excluded}")
    return report


# ============================================================
# OUTPUT
# ============================================================

def write_sweep_outputs(result: SweepResult, writer: ReportWriter, dump_density: bool = False) -> List:
    """records CSV, summary JSON, bath spectra, timings, optional density dumps."""
    config = result.config
    paths = [
        writer.write_csv(result.to_frame(), "records.csv"),
        writer.write_csv(result.curve_frame(), "curve.csv"),
        writer.write_json({"summary": result.summary()}, "summary.json"),
    ]
    if config.output.dump_bath_spectrum:
        for seed_index, energies in sorted(result.bath_spectra.items()):
            suffix = "bath_spectrum.csv" if len(config.seeds) == 1 else f"bath_spectrum_seed{seed_index}.csv"
            paths.append(writer.write_bath_spectrum(energies, suffix))
    if dump_density or config.output.dump_density:
        for key, artifacts in sorted(result.artifacts.items()):
            tag = "_".join(str(i) for i in key)
            paths.append(writer.write_density(artifacts["system_state"], "system", f"rho_system_{tag}.json"))
            if "time_average_state" in artifacts:
                paths.append(writer.write_density(artifacts["time_average_state"], "system",
                                                  f"rho_system_time_average_{tag}.json"))
    paths.append(writer.write_timings(pd.DataFrame(result.timings)))
    return paths


def write_laplace_outputs(report: LaplaceReport, writer: ReportWriter) -> List:
    return [
        writer.write_json(report.to_json_dict(), "laplace.json"),
        writer.write_csv(report.to_frame(), "laplace_terms.csv"),
        writer.write_csv(report.partial_sums_frame(), "laplace_partial_sums.csv"),
    ]


if __name__ == "__main__":
    print("=" * 60)
    print("TEST 1: uncoupled run keeps the system in its ground level")
    print("=" * 60)
    cfg = ExperimentConfig.build({"bath": {"n_states": 8}}, lambdas=[0.0], betas=[1.0])
    rec = run_single(cfg).records[0]
    print(f"P0 = {rec.p0_diag}  |  Gibbs = {rec.p0_gibbs:.6f}  |  D = {rec.deviation:.6f}")
    assert abs(rec.p0_diag - 1.0) < 1e-14 and not rec.beta_eff_bounded

    print("\n" + "=" * 60)
    print("TEST 2: small sweep, record order")
    print("=" * 60)
    cfg = ExperimentConfig.build({"bath": {"model": "random-matrix", "n_states": 8}},
                                 betas=[0.0, 1.0], lambdas=[0.05, 0.1], seeds=[1, 2])
    sweep = run_sweep(cfg)
    print(sweep.curve_frame().to_string(index=False))
    assert [r.key for r in sweep.records] == sorted(r.key for r in sweep.records)
