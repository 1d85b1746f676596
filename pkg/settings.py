import json
import logging
from typing import Dict

logger = logging.getLogger(__name__)

# moment tables
# conjugate partners must agree within this tolerance (relative to the largest modulus entry)
SYMMETRY_TOL = 1e-12

# orthonormalization
# pivots below RANK_TOL * s00 count as degenerate, below -RANK_TOL * s00 as invalid
RANK_TOL = 1e-10

# hessenberg
HESSENBERG_TOL = 1e-12
DEFECT_CLAMP = 1e-12
CONGRUENCE_TOL = 1e-12
# relative to the degree-2 scale max(|M|^2, |zP_d|^2)
NORMAL_TOL = 1e-8

# dilation
CONTRACTION_TOL = 1e-10
UNITARY_TOL = 1e-10
SQRT_TOL = 1e-9
RADIUS_GUARD = 1e-14

# cubature
WEIGHT_TOL = 1e-12
MERGE_TOL = 1e-9
SCHUR_TOL = 1e-8
EXACTNESS_TOL = 1e-7
MAX_FULL_MATCH = 12

_TOLERANCE_NAMES = [
    "SYMMETRY_TOL",
    "RANK_TOL",
    "HESSENBERG_TOL",
    "DEFECT_CLAMP",
    "CONGRUENCE_TOL",
    "NORMAL_TOL",
    "CONTRACTION_TOL",
    "UNITARY_TOL",
    "SQRT_TOL",
    "RADIUS_GUARD",
    "WEIGHT_TOL",
    "MERGE_TOL",
    "SCHUR_TOL",
    "EXACTNESS_TOL",
    "MAX_FULL_MATCH",
]


def tolerances() -> Dict[str, float]:
    """
    Returns the tolerances currently in effect.
    :return: A dict mapping lower-case tolerance names to their values.
    """
    return {name.lower(): globals()[name] for name in _TOLERANCE_NAMES}


def override(**values: float) -> None:
    """
    Overrides tolerances by (case-insensitive) name.
    :param values: Tolerance names and their new values.
    """
    for key, value in values.items():
        name = key.upper()
        if name not in _TOLERANCE_NAMES:
            raise ValueError(f"Unknown tolerance: {key}")
        if value is None:
            continue
        if name == "MAX_FULL_MATCH":
            value = int(value)
        else:
            value = float(value)
            if not value >= 0:
                raise ValueError(f"Tolerance {key} must be non-negative, got {value}")
        globals()[name] = value
        logger.debug(f"{name} = {value}")


def load_config(filename: str) -> Dict[str, float]:
    """
    Loads tolerance overrides from a JSON file holding a single object, e.g. {"normal_tol": 1e-6}.
    Call this once after parsing commandline arguments.
    :param filename: Path to the JSON file.
    :return: The tolerances in effect after loading.
    """
    with open(filename, mode="r") as fp:
        config = json.load(fp)
    if not isinstance(config, dict):
        raise ValueError(f"Config file {filename} must hold a JSON object")
    override(**config)
    logger.info(f"Loaded {len(config)} tolerance override(s) from {filename}")
    return tolerances()
