# core/report_generator.py
"""
Result emission. Tables go to CSV (pandas, RFC-4180 quoting) preceded by
'#' header lines; nested reports go to JSON (orjson) with the same header
under "header". Nothing here is timestamped, so two runs of one config
produce byte-identical files. Wall times are written separately.
"""

import logging
from pathlib import Path
from typing import Any, Dict, Optional, Union

import numpy as np
import orjson
import pandas as pd

from config.constants import ARTIFACT_NAME, ARTIFACT_VERSION, SIMULATION_PARAMETERS

logger = logging.getLogger(__name__)

JSON_OPTIONS = orjson.OPT_INDENT_2 | orjson.OPT_SERIALIZE_NUMPY | orjson.OPT_NON_STR_KEYS


def run_header(config: Optional[dict]) -> dict:
    return {"artifact": ARTIFACT_NAME, "version": ARTIFACT_VERSION, "parameters": SIMULATION_PARAMETERS,
            "config": config}


def dumps(obj: Any) -> bytes:
    """orjson with numpy support; NaN and inf serialize as null."""
    return orjson.dumps(obj, option=JSON_OPTIONS, default=_fallback)


def _fallback(obj: Any):
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def density_payload(matrix: np.ndarray, space: str) -> dict:
    """Row-major [re, im] pairs."""
    m = np.asarray(matrix, dtype=complex)
    return {
        "space": space,
        "dimension": int(m.shape[0]),
        "data": np.stack([m.real.ravel(), m.imag.ravel()], axis=1),
    }


class ReportWriter:
    """Writes every file of one run into out_dir, all sharing one header."""

    def __init__(self, out_dir: Union[str, Path], config: Optional[dict] = None, prefix: str = ARTIFACT_NAME):
        self.out_dir = Path(out_dir)
        self.prefix = prefix
        self.header = run_header(config)
        self.written = []

    def _path(self, suffix: str) -> Path:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        return self.out_dir / f"{self.prefix}_{suffix}"

    def write_csv(self, frame: pd.DataFrame, suffix: str) -> Path:
        path = self._path(suffix)
        config_line = orjson.dumps(self.header["config"], option=orjson.OPT_SERIALIZE_NUMPY).decode()
        with open(path, "w", newline="", encoding="utf-8") as fh:
            fh.write(f"# {ARTIFACT_NAME} {ARTIFACT_VERSION}\n")
            fh.write(f"# config: {config_line}\n")
            frame.to_csv(fh, index=False, float_format="%.17g", lineterminator="\n")
        self.written.append(path)
        logger.info(f"Wrote {path} ({len(frame)} rows)")
        return path

    def write_json(self, payload: Dict[str, Any], suffix: str) -> Path:
        path = self._path(suffix)
        path.write_bytes(dumps({"header": self.header, **payload}) + b"\n")
        self.written.append(path)
        logger.info(f"Wrote {path}")
        return path

    def write_bath_spectrum(self, energies: np.ndarray, suffix: str = "bath_spectrum.csv") -> Path:
        frame = pd.DataFrame({"index": np.arange(1, len(energies) + 1), "energy": np.asarray(energies, dtype=float)})
        return self.write_csv(frame, suffix)

    def write_density(self, matrix: np.ndarray, space: str, suffix: str) -> Path:
        return self.write_json(density_payload(matrix, space), suffix)

    def write_timings(self, frame: pd.DataFrame) -> Path:
        """Wall times only; kept out of the deterministic result files."""
        path = self._path("timings.csv")
        frame.to_csv(path, index=False, lineterminator="\n")
        self.written.append(path)
        return path
