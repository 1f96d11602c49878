"""
thermaleq command line.

    thermaleq simulate      one (beta, lambda, seed) point, optional density dumps
    thermaleq sweep         full beta x lambda x seed grid (or a bath-size scan)
    thermaleq laplace       residue partial sums for a partition model
    thermaleq oracle-check  independent cross-checks on a small instance
    thermaleq config-schema print the config schema with every default

Exit status is 1 when any requested computation or oracle failed.
"""

import sys
import os
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import logging
from dataclasses import replace
from typing import Optional

import click
from dotenv import load_dotenv

from app.core.data_loader import read_config_file, resolve_config
from app.core.error_handling import ThermalEqError, configure_logging
from app.core.performance import resolve_threads
from app.core.report_generator import ReportWriter, dumps
from config.constants import ARTIFACT_NAME, ARTIFACT_VERSION, DEFAULT_REFERENCE_BETA, THREADS_ENV_VAR
from config.schema import CONFIG_SCHEMA
from experiment_runner import (
    ExperimentConfig,
    run_laplace,
    run_single,
    run_size_scan,
    run_sweep,
    write_laplace_outputs,
    write_sweep_outputs,
)
from gibbs_laplace import PARTITION_KINDS, PartitionModel
from oracle_checks import run_oracle_check

logger = logging.getLogger(__name__)


def _float_list(ctx, param, value: Optional[str]):
    if value is None:
        return None
    try:
        return [float(v) for v in value.replace(",", " ").split()]
    except ValueError:
        raise click.BadParameter(f"expected a comma-separated list of numbers, got {value!r}")


def _int_list(ctx, param, value: Optional[str]):
    if value is None:
        return None
    try:
        return [int(v) for v in value.replace(",", " ").split()]
    except ValueError:
        raise click.BadParameter(f"expected a comma-separated list of integers, got {value!r}")


def _sets_key(assignments, key: str) -> bool:
    return any(a.split("=", 1)[0].strip() == key for a in assignments)


def _load(config_path: Optional[str], betas, lambdas, seeds, threads, out, assignments,
          sizes=None) -> ExperimentConfig:
    """
    --threads > config 'threads' (file or --set) > THERMALEQ_THREADS > 1.
    Everything, sizes included, is validated before any computation.
    """
    document = read_config_file(config_path) if config_path is not None else {}
    if threads is None and "threads" not in document and not _sets_key(assignments, "threads"):
        threads = resolve_threads(None)
    overrides = {
        "betas": list(betas) or None,
        "lambdas": list(lambdas) or None,
        "seeds": list(seeds) or None,
        "threads": threads,
        "sizes": sizes or None,
    }
    config = ExperimentConfig.from_dict(resolve_config(document, overrides, assignments))
    if out is not None:
        config = replace(config, output=replace(config.output, directory=str(out)))
    return config


def _fail(message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(1)


def config_options(func):
    options = [
        click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
                     help="Experiment config (JSON). Defaults apply for anything it omits."),
        click.option("--out", type=click.Path(file_okay=False), default=None,
                     help="Output directory (overrides output.directory)."),
        click.option("--threads", type=click.IntRange(min=1), default=None,
                     help=f"Worker threads; default from {THREADS_ENV_VAR}, else 1."),
        click.option("--beta", "betas", type=float, multiple=True, help="Inverse temperature (repeatable)."),
        click.option("--lambda", "lambdas", type=float, multiple=True, help="Coupling strength (repeatable)."),
        click.option("--seed", "seeds", type=click.IntRange(min=0), multiple=True, help="Seed (repeatable)."),
        click.option("--set", "assignments", multiple=True, metavar="KEY=VALUE",
                     help="Override any config field, e.g. --set bath.n_states=32 (value parsed as JSON)."),
    ]
    for option in reversed(options):
        func = option(func)
    return func


@click.group()
@click.version_option(ARTIFACT_VERSION, prog_name=ARTIFACT_NAME)
@click.option("--log-level", default="INFO", show_default=True,
              type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR"], case_sensitive=False))
@click.option("--log-file", type=click.Path(dir_okay=False), default=None, help="Also log to this file.")
def cli(log_level: str, log_file: Optional[str]):
    """Does a finite bath thermalize a small quantum system? Exact-diagonalization lab."""
    load_dotenv()
    configure_logging(log_level, log_file)


@cli.command()
@config_options
def simulate(config_path, out, threads, betas, lambdas, seeds, assignments):
    """Run one (beta, lambda, seed) point."""
    try:
        config = _load(config_path, betas, lambdas, seeds, threads, out, assignments)
        result = run_single(config)
        writer = ReportWriter(config.output.directory, config.to_dict(), config.output.prefix)
        write_sweep_outputs(result, writer)
    except ThermalEqError as e:
        _fail(str(e))

    record = result.records[0]
    if not record.ok:
        _fail(record.error)
    click.echo(f"P0 = {record.p0_diag:.12f}  Gibbs = {record.p0_gibbs:.12f}  D = {record.deviation:+.6e}  "
               f"beta_eff = {record.beta_eff if record.beta_eff_bounded else 'unbounded'}")


@cli.command()
@config_options
@click.option("--sizes", callback=_int_list, default=None,
              help="Bath sizes for a size-scaling scan, e.g. 16,32,64,128 (overrides config 'sizes').")
@click.option("--quiet", is_flag=True, help="No progress bar.")
def sweep(config_path, out, threads, betas, lambdas, seeds, assignments, sizes, quiet):
    """Run the full beta x lambda x seed grid."""
    try:
        config = _load(config_path, betas, lambdas, seeds, threads, out, assignments, sizes=sizes)
        writer = ReportWriter(config.output.directory, config.to_dict(), config.output.prefix)
        progress = not quiet and sys.stderr.isatty()
        if config.sizes:
            scan = run_size_scan(config, progress=progress)
            writer.write_csv(scan.records, "size_scan_records.csv")
            writer.write_csv(scan.trend, "size_scan_trend.csv")
            failed = sum(len(s.failed) for s in scan.sweeps)
        else:
            result = run_sweep(config, progress=progress)
            write_sweep_outputs(result, writer)
            failed = len(result.failed)
    except ThermalEqError as e:
        _fail(str(e))

    if failed:
        _fail(f"{failed} point(s) failed; see the status column")
    click.echo(f"Results written to {writer.out_dir}")


@cli.command()
@click.option("--delta", type=float, required=True, help="System gap delta > 0.")
@click.option("--model", type=click.Choice(PARTITION_KINDS), required=True, help="Partition model.")
@click.option("--nmax", "k_max", type=click.IntRange(min=2), default=64, show_default=True,
              help="K_max: poles n = -K..K-1.")
@click.option("--x", "x_grid", callback=_float_list, default="0,1", show_default=True,
              help="Comma-separated transform variables x.")
@click.option("--particles", type=click.IntRange(min=1), default=1, show_default=True)
@click.option("--level-gap", type=float, default=None, help="two-level-gas level gap (default: delta).")
@click.option("--volume-factor", type=float, default=1.0, show_default=True,
              help="Prefactor c for classical-ideal-gas and constant models.")
@click.option("--frequencies", callback=_float_list, default=None, help="oscillator-bath frequencies.")
@click.option("--energies", callback=_float_list, default=None, help="explicit-spectrum energies.")
@click.option("--reference-beta", type=float, default=DEFAULT_REFERENCE_BETA, show_default=True,
              help="Normalize Z by Z(reference_beta); 0 disables normalization.")
@click.option("--no-numeric", is_flag=True, help="Skip the shrinking-circle residue check.")
@click.option("--out", type=click.Path(file_okay=False), default="results", show_default=True)
@click.option("--threads", type=click.IntRange(min=1), default=None)
def laplace(delta, model, k_max, x_grid, particles, level_gap, volume_factor, frequencies, energies,
            reference_beta, no_numeric, out, threads):
    """Residue partial sums of exp(beta x) Z(beta) / (1 + exp(-beta delta))."""
    try:
        partition = PartitionModel(
            kind=model,
            n_particles=particles,
            level_gap=delta if level_gap is None else level_gap,
            volume_factor=volume_factor,
            frequencies=tuple(frequencies or ()),
            energies=tuple(energies or ()),
            reference_beta=reference_beta or None,
        )
        report = run_laplace(delta, partition, k_max, x_grid, numeric=not no_numeric, threads=threads)
        writer = ReportWriter(out, {"delta": delta, "model": partition.describe(), "k_max": k_max,
                                    "x_grid": list(x_grid)})
        write_laplace_outputs(report, writer)
    except ThermalEqError as e:
        _fail(str(e))

    for v in report.verdicts:
        exponent = "n/a" if v.decay_exponent is None else f"{v.decay_exponent:.4f}"
        click.echo(f"x = {v.x:g}: {v.verdict} (decay exponent {exponent}, tail {v.tail_magnitude:.3e})")
    if report.excluded:
        click.echo(f"{len(report.excluded)} term(s) excluded at model poles", err=True)


@cli.command("oracle-check")
@config_options
def oracle_check(config_path, out, threads, betas, lambdas, seeds, assignments):
    """Cross-check the exact machinery on a small instance (D <= 64)."""
    try:
        config = _load(config_path, betas, lambdas, seeds, threads, out, assignments)
        report = run_oracle_check(config)
        writer = ReportWriter(config.output.directory, config.to_dict(), config.output.prefix)
        writer.write_csv(report.to_frame(), "oracles.csv")
        writer.write_json(report.to_json_dict(), "oracles.json")
    except ThermalEqError as e:
        _fail(str(e))

    for r in report.results:
        click.echo(f"{'PASS' if r.passed else 'FAIL'}  {r.name:<36} {r.error:.3e} <= {r.threshold:.1e}")
    if not report.passed:
        _fail(f"{len(report.failures)} oracle(s) failed")


@cli.command("config-schema")
def config_schema():
    """Print the config JSON schema (all defaults included)."""
    click.echo(dumps(CONFIG_SCHEMA).decode())


def main():
    cli(prog_name=ARTIFACT_NAME)


if __name__ == "__main__":
    main()
