"""Phase transitions of weighted l1 minimization for nonuniformly sparse signals."""

__version__ = "0.1.0"

from .exponents import ExponentPoint, SparsityModel, ThresholdKind, psi_com, psi_ext, psi_int, psi_tot
from .thresholds import ThresholdResult, delta_c, optimal_weight, robustness_constant

__all__ = [
    "ExponentPoint",
    "SparsityModel",
    "ThresholdKind",
    "ThresholdResult",
    "delta_c",
    "optimal_weight",
    "psi_com",
    "psi_ext",
    "psi_int",
    "psi_tot",
    "robustness_constant",
]
