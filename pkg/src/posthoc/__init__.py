"""Post hoc false-positive bounds from forest-structured reference families."""

from .bounds import (
    ForestBound,
    true_discoveries,
    v_bar,
    v_star_bruteforce,
    v_star_forest,
    v_tilde,
    v_tilde_q,
)
from .calibration import (
    CalibrationConfig,
    HybridBound,
    SimesBound,
    bonferroni_bound,
    calibrate,
    calibrate_family,
    dkw_zeta,
    gw_zeta,
    hybrid_bound,
    simes_bound,
)
from .family import (
    ForestIndex,
    ReferenceFamily,
    build_index,
    complete_family,
    compute_atoms,
    level_set,
    load_family,
    validate_forest,
)

__all__ = [
    "CalibrationConfig",
    "ForestBound",
    "ForestIndex",
    "HybridBound",
    "ReferenceFamily",
    "SimesBound",
    "bonferroni_bound",
    "build_index",
    "calibrate",
    "calibrate_family",
    "complete_family",
    "compute_atoms",
    "dkw_zeta",
    "gw_zeta",
    "hybrid_bound",
    "level_set",
    "load_family",
    "simes_bound",
    "true_discoveries",
    "v_bar",
    "v_star_bruteforce",
    "v_star_forest",
    "v_tilde",
    "v_tilde_q",
    "validate_forest",
]
