import math

import pytest

import oracle_checks
from app.core.error_handling import CapacityError
from experiment_runner import ExperimentConfig
from oracle_checks import (
    gibbs_round_trip_oracle,
    partial_trace_oracle,
    rabi_oracle,
    residue_oracle,
    run_oracle_check,
)


def oracle_config(**overrides):
    document = {"bath": {"model": "random-matrix", "n_states": 8}, "time_average": {"horizon_factor": 1e3}}
    return ExperimentConfig.build(document, **overrides)


def test_small_instance_passes_every_oracle():
    report = run_oracle_check(oracle_config())
    assert report.dimension == 16
    assert report.passed, report.to_frame().to_string()
    assert len(report.results) == 12


def test_uncoupled_instance_passes():
    report = run_oracle_check(ExperimentConfig.build({"bath": {"n_states": 8}}, lambdas=[0.0]))
    assert report.passed, report.to_frame().to_string()


def test_over_merged_classes_fail_only_the_time_average():
    report = run_oracle_check(oracle_config(degeneracy_tolerance=1e3, lambdas=[0.3]))
    assert [r.name for r in report.failures] == ["time_average_vs_diagonal_ensemble"]
    assert not report.passed


def test_oracles_refuse_large_instances():
    with pytest.raises(CapacityError):
        run_oracle_check(ExperimentConfig.build({"bath": {"n_states": 40}}))


def test_standalone_oracles():
    assert partial_trace_oracle(3, 5, seed=1).passed
    assert rabi_oracle().passed
    assert rabi_oracle(coupling=0.05, gap=2.0).passed
    assert residue_oracle().passed
    assert gibbs_round_trip_oracle([0.0, 0.5, 4.0, 50.0], 2.0).passed


def test_raising_oracle_is_recorded_as_failure():
    outcome = oracle_checks._guarded("broken", lambda: 1 / 0)
    assert not outcome.passed
    assert math.isinf(outcome.error)
    assert outcome.detail.startswith("ZeroDivisionError")


def test_report_tables():
    report = run_oracle_check(oracle_config(lambdas=[0.05]))
    frame = report.to_frame()
    assert list(frame.columns) == ["oracle", "error", "threshold", "passed", "detail"]
    payload = report.to_json_dict()
    assert payload["passed"] is report.passed
    assert len(payload["oracles"]) == len(report.results)
