# config/schema.py
"""
JSON schema of an experiment config document. Every optional field carries
its default; `thermaleq config-schema` prints this document.
"""

from config.constants import (
    DEFAULT_LEVEL_ENERGIES,
    MAX_BETA,
    MAX_DIMENSION,
    TIME_AVERAGE_HORIZON_FACTOR,
    TIME_AVERAGE_MAX_SAMPLES,
)

_number_list = {"type": "array", "items": {"type": "number"}, "minItems": 1}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "thermaleq experiment config",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "system": {
            "type": "object",
            "additionalProperties": False,
            "description": "Small system: ascending level energies (at least two).",
            "properties": {
                "level_energies": {**_number_list, "minItems": 2, "default": list(DEFAULT_LEVEL_ENERGIES)},
            },
            "default": {},
        },
        "bath": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "model": {"enum": ["ladder", "random-matrix", "spin-gas"], "default": "ladder"},
                "n_states": {"type": "integer", "minimum": 1, "default": 16},
                "spectral_width": {"type": "number", "exclusiveMinimum": 0, "default": 1.0},
                "ensemble": {"enum": ["GUE", "GOE"], "default": "GUE"},
                "splittings": {"type": ["array", "null"], "items": {"type": "number", "minimum": 0},
                               "default": None},
                "dos_bins": {"type": "integer", "minimum": 1, "default": 16,
                             "description": "Bins of the bath density of states used for binned f(x)."},
            },
            "default": {},
        },
        "coupling": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "structure": {"enum": ["random-hermitian", "system-flip"], "default": "random-hermitian"},
            },
            "default": {},
        },
        "betas": {**_number_list, "default": [1.0],
                  "description": "Inverse temperatures of the bath's initial canonical state."},
        "lambdas": {**_number_list, "default": [0.1], "description": "Coupling strengths."},
        "seeds": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 1, "default": [0],
                  "description": "Seeds of the bath and coupling random streams."},
        "sizes": {"type": "array", "items": {"type": "integer", "minimum": 1}, "default": [],
                  "description": "Bath sizes for the size-scaling scan."},
        "initial_level": {"type": "integer", "minimum": 0, "default": 0},
        "degeneracy_tolerance": {"type": ["number", "null"], "minimum": 0, "default": None,
                                 "description": "eps for degeneracy classes; null means 1e-9 times the spectral span."},
        "time_average": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "enabled": {"type": "boolean", "default": False},
                "t_avg": {"type": ["number", "null"], "exclusiveMinimum": 0, "default": None,
                          "description": "Averaging horizon; null means horizon_factor / smallest active gap."},
                "horizon_factor": {"type": "number", "exclusiveMinimum": 0,
                                   "default": TIME_AVERAGE_HORIZON_FACTOR},
                "n_samples": {"type": ["integer", "null"], "minimum": 2, "default": None,
                              "description": "Grid size; null means enough samples to resolve the largest gap."},
                "max_samples": {"type": "integer", "minimum": 2, "default": TIME_AVERAGE_MAX_SAMPLES},
            },
            "default": {},
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "directory": {"type": "string", "default": "results"},
                "prefix": {"type": "string", "default": "thermaleq"},
                "dump_density": {"type": "boolean", "default": False},
                "dump_bath_spectrum": {"type": "boolean", "default": True},
            },
            "default": {},
        },
        "threads": {"type": "integer", "minimum": 1, "default": 1},
        "max_dimension": {"type": "integer", "minimum": 2, "default": MAX_DIMENSION},
        "max_beta": {"type": "number", "exclusiveMinimum": 0, "default": MAX_BETA},
    },
}


def schema_defaults(schema: dict = CONFIG_SCHEMA) -> dict:
    """Nested dict of every default declared in the schema."""
    out = {}
    for key, prop in schema.get("properties", {}).items():
        if prop.get("type") == "object":
            out[key] = schema_defaults(prop)
        elif "default" in prop:
            out[key] = prop["default"]
    return out
