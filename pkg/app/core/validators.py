# core/validators.py
"""
Semantic checks on a resolved config document. Each validator returns
(ok, message); validate_config collects every failure.
"""

from typing import List, Sequence, Tuple

import math


def validate_level_energies(energies: Sequence[float]) -> Tuple[bool, str]:
    """Validate system level energies."""
    if len(energies) < 2:
        return False, "system.level_energies needs at least two levels"
    if any(not math.isfinite(e) for e in energies):
        return False, "system.level_energies must be finite"
    if any(b <= a for a, b in zip(energies, energies[1:])):
        return False, "system.level_energies must be strictly ascending (the gap must be > 0)"
    return True, "ok"


def validate_bath(bath: dict) -> Tuple[bool, str]:
    n = int(bath["n_states"])
    if bath["model"] == "spin-gas":
        splittings = bath.get("splittings")
        k = len(splittings) if splittings is not None else int(round(math.log2(n)))
        if 2 ** k != n:
            return False, f"bath.n_states={n} must be a power of two for spin-gas (2^k for k particles)"
    elif bath.get("splittings") is not None:
        return False, "bath.splittings only applies to the spin-gas model"
    return True, "ok"


def validate_betas(betas: Sequence[float], max_beta: float) -> Tuple[bool, str]:
    bad = [b for b in betas if not math.isfinite(b) or b < 0 or b > max_beta]
    if bad:
        return False, f"betas must lie in [0, {max_beta}] (negative temperatures are out of scope), got {bad}"
    return True, "ok"


def validate_lambdas(lambdas: Sequence[float]) -> Tuple[bool, str]:
    bad = [x for x in lambdas if not math.isfinite(x) or x < 0]
    if bad:
        return False, f"lambdas must be finite and >= 0, got {bad}"
    return True, "ok"


def validate_seeds(seeds: Sequence[int]) -> Tuple[bool, str]:
    bad = [s for s in seeds if not 0 <= int(s) <= 2 ** 64 - 1]
    if bad:
        return False, f"seeds must be 64-bit unsigned integers, got {bad}"
    return True, "ok"


def validate_dimension(n_levels: int, n_states: Sequence[int], max_dimension: int) -> Tuple[bool, str]:
    """Composite dimension n * N against the cap, for every bath size the run will use."""
    worst = n_levels * max(n_states)
    if worst > max_dimension:
        return False, (f"composite dimension {n_levels} x {max(n_states)} = {worst} exceeds "
                       f"max_dimension={max_dimension}; shrink the bath or raise the cap")
    return True, "ok"


def validate_initial_level(level: int, n_levels: int) -> Tuple[bool, str]:
    if not 0 <= level < n_levels:
        return False, f"initial_level={level} out of range [0, {n_levels})"
    return True, "ok"


def validate_time_average(settings: dict) -> Tuple[bool, str]:
    n = settings.get("n_samples")
    if n is not None and n > settings["max_samples"]:
        return False, f"time_average.n_samples={n} exceeds time_average.max_samples={settings['max_samples']}"
    return True, "ok"


def validate_config(config: dict) -> List[str]:
    """Every semantic error in a schema-valid, defaults-filled config."""
    energies = config["system"]["level_energies"]
    bath = config["bath"]
    sizes = list(config.get("sizes") or []) + [bath["n_states"]]

    checks = [
        validate_level_energies(energies),
        validate_bath(bath),
        validate_betas(config["betas"], config["max_beta"]),
        validate_lambdas(config["lambdas"]),
        validate_seeds(config["seeds"]),
        validate_dimension(len(energies), sizes, config["max_dimension"]),
        validate_initial_level(config["initial_level"], len(energies)),
        validate_time_average(config["time_average"]),
    ]
    if bath["model"] == "spin-gas":
        for n in config.get("sizes") or []:
            checks.append(validate_bath({**bath, "n_states": n, "splittings": None}))
    return [message for ok, message in checks if not ok]
