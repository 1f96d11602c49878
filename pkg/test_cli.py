import logging

import orjson
import pandas as pd
import pytest
from click.testing import CliRunner

from app.main import cli


@pytest.fixture(autouse=True)
def restore_logging():
    root = logging.getLogger()
    handlers, level = root.handlers[:], root.level
    yield
    root.handlers[:] = handlers
    root.setLevel(level)


@pytest.fixture
def runner():
    return CliRunner()


def invoke(runner, *args):
    return runner.invoke(cli, ["--log-level", "ERROR", *args])


def test_version(runner):
    result = runner.invoke(cli, ["--version"])
    assert result.exit_code == 0
    assert "1.0.0" in result.output


def test_config_schema(runner):
    result = invoke(runner, "config-schema")
    assert result.exit_code == 0
    schema = orjson.loads(result.output)
    assert schema["properties"]["bath"]["properties"]["n_states"]["default"] == 16


def test_simulate_uncoupled(runner, tmp_path):
    result = invoke(runner, "simulate", "--lambda", "0", "--beta", "1", "--set", "bath.n_states=4",
                    "--out", str(tmp_path))
    assert result.exit_code == 0, result.output
    assert "P0 = 1.000000000000" in result.output
    assert "unbounded" in result.output
    frame = pd.read_csv(tmp_path / "thermaleq_records.csv", comment="#")
    assert frame["n_bath"].tolist() == [4]


def test_simulate_dumps_density(runner, tmp_path):
    result = invoke(runner, "simulate", "--set", "bath.n_states=2", "--set", "output.dump_density=true",
                    "--out", str(tmp_path))
    assert result.exit_code == 0, result.output
    assert (tmp_path / "thermaleq_rho_system_0_0_0.json").exists()


def test_simulate_rejects_grids(runner, tmp_path):
    result = invoke(runner, "simulate", "--beta", "0.5", "--beta", "1", "--out", str(tmp_path))
    assert result.exit_code == 1
    assert "use sweep for grids" in result.output


def test_invalid_config_exits_nonzero(runner, tmp_path):
    result = invoke(runner, "sweep", "--beta=-1", "--out", str(tmp_path))
    assert result.exit_code == 1
    assert "invalid config" in result.output


def test_config_file(runner, tmp_path):
    path = tmp_path / "run.json"
    path.write_bytes(orjson.dumps({"bath": {"model": "spin-gas", "n_states": 4}, "lambdas": [0.05]}))
    result = invoke(runner, "simulate", "--config", str(path), "--out", str(tmp_path / "out"))
    assert result.exit_code == 0, result.output
    spectrum = pd.read_csv(tmp_path / "out" / "thermaleq_bath_spectrum.csv", comment="#")
    assert spectrum["energy"].tolist() == pytest.approx([0.0, 0.5, 0.5, 1.0])


def test_sweep(runner, tmp_path):
    result = invoke(runner, "sweep", "--beta", "0", "--beta", "1", "--lambda", "0.1", "--seed", "1", "--seed", "2",
                    "--set", "bath.model=random-matrix", "--set", "bath.n_states=6", "--threads", "2",
                    "--quiet", "--out", str(tmp_path))
    assert result.exit_code == 0, result.output
    frame = pd.read_csv(tmp_path / "thermaleq_records.csv", comment="#")
    assert len(frame) == 4
    assert set(frame["status"]) == {"ok"}
    assert (tmp_path / "thermaleq_curve.csv").exists()


def test_size_scan(runner, tmp_path):
    result = invoke(runner, "sweep", "--sizes", "4,8", "--set", "bath.model=random-matrix", "--seed", "0",
                    "--seed", "1", "--quiet", "--out", str(tmp_path))
    assert result.exit_code == 0, result.output
    trend = pd.read_csv(tmp_path / "thermaleq_size_scan_trend.csv", comment="#")
    assert sorted(trend["n_bath"]) == [4, 8]


def test_laplace_classical_gas(runner, tmp_path):
    result = invoke(runner, "laplace", "--delta", "1", "--model", "classical-ideal-gas", "--particles", "2",
                    "--nmax", "8", "--x", "0,1", "--out", str(tmp_path))
    assert result.exit_code == 0, result.output
    assert "x = 0: converged" in result.output
    payload = orjson.loads((tmp_path / "thermaleq_laplace.json").read_bytes())
    assert payload["k_max"] == 8
    assert payload["header"]["config"]["model"]["kind"] == "classical-ideal-gas"
    assert payload["header"]["parameters"]["max_dimension"] == 4096
    assert "unsettled_residues" in payload


def test_laplace_matched_two_level_gas(runner, tmp_path):
    result = invoke(runner, "laplace", "--delta", "0.7", "--model", "two-level-gas", "--nmax", "4",
                    "--no-numeric", "--out", str(tmp_path))
    assert result.exit_code == 0, result.output
    assert result.output.count("converged") == 2


def test_laplace_without_normalization(runner, tmp_path):
    result = invoke(runner, "laplace", "--delta", "1", "--model", "explicit-spectrum", "--energies", "0,1,2",
                    "--reference-beta", "0", "--nmax", "4", "--no-numeric", "--out", str(tmp_path))
    assert result.exit_code == 0, result.output
    payload = orjson.loads((tmp_path / "thermaleq_laplace.json").read_bytes())
    assert payload["model"]["reference_beta"] is None


def test_laplace_bad_model_input(runner, tmp_path):
    result = invoke(runner, "laplace", "--delta", "1", "--model", "oscillator-bath", "--out", str(tmp_path))
    assert result.exit_code == 1
    assert "positive frequencies" in result.output


def test_oracle_check(runner, tmp_path):
    result = invoke(runner, "oracle-check", "--set", "bath.model=random-matrix", "--set", "bath.n_states=6",
                    "--set", "time_average.horizon_factor=1000", "--out", str(tmp_path))
    assert result.exit_code == 0, result.output
    assert result.output.count("PASS") == 12
    assert (tmp_path / "thermaleq_oracles.csv").exists()


def test_oracle_check_refuses_large_instances(runner, tmp_path):
    result = invoke(runner, "oracle-check", "--set", "bath.n_states=64", "--out", str(tmp_path))
    assert result.exit_code == 1
    assert "D <= 64" in result.output


def header_config(path):
    with open(path, encoding="utf-8") as fh:
        fh.readline()
        line = fh.readline()
    assert line.startswith("# config: ")
    return orjson.loads(line[len("# config: "):])


@pytest.mark.parametrize(
    "file_threads, env_threads, flag, expected",
    [
        (None, None, None, 1),
        (3, None, None, 3),
        (None, "2", None, 2),
        (3, "2", None, 3),
        (3, "2", "4", 4),
        (None, "2", "4", 4),
    ],
)
def test_thread_count_precedence(runner, tmp_path, monkeypatch, file_threads, env_threads, flag, expected):
    monkeypatch.delenv("THERMALEQ_THREADS", raising=False)
    if env_threads is not None:
        monkeypatch.setenv("THERMALEQ_THREADS", env_threads)
    document = {"bath": {"n_states": 2}}
    if file_threads is not None:
        document["threads"] = file_threads
    path = tmp_path / "run.json"
    path.write_bytes(orjson.dumps(document))
    args = ["simulate", "--config", str(path), "--out", str(tmp_path / "out")]
    if flag is not None:
        args += ["--threads", flag]
    result = invoke(runner, *args)
    assert result.exit_code == 0, result.output
    assert header_config(tmp_path / "out" / "thermaleq_records.csv")["threads"] == expected


def test_set_threads_beats_environment(runner, tmp_path, monkeypatch):
    monkeypatch.setenv("THERMALEQ_THREADS", "2")
    result = invoke(runner, "simulate", "--set", "bath.n_states=2", "--set", "threads=3", "--out", str(tmp_path))
    assert result.exit_code == 0, result.output
    assert header_config(tmp_path / "thermaleq_records.csv")["threads"] == 3


def test_size_scan_header_records_sizes(runner, tmp_path):
    result = invoke(runner, "sweep", "--sizes", "4,8", "--set", "bath.model=random-matrix", "--seed", "0",
                    "--quiet", "--out", str(tmp_path))
    assert result.exit_code == 0, result.output
    config = header_config(tmp_path / "thermaleq_size_scan_trend.csv")
    assert config["sizes"] == [4, 8]
    assert config["seeds"] == [0]


def test_size_scan_sizes_are_validated_first(runner, tmp_path):
    out = tmp_path / "out"
    result = invoke(runner, "sweep", "--sizes", "4,6", "--set", "bath.model=spin-gas", "--out", str(out))
    assert result.exit_code == 1
    assert "invalid config" in result.output
    assert "power of two" in result.output
    assert not out.exists() or not any(out.iterdir())


def test_size_scan_respects_dimension_cap(runner, tmp_path):
    out = tmp_path / "out"
    result = invoke(runner, "sweep", "--sizes", "8,4096", "--set", "bath.model=random-matrix", "--out", str(out))
    assert result.exit_code == 1
    assert "invalid config" in result.output
    assert not out.exists() or not any(out.iterdir())
