"""LEO orbit propagation with learned argument-of-latitude error correction.

The package covers the full chain: synthetic VCM-style ephemeris generation,
special-perturbations propagation with configurable (and deliberately
mismatchable) drag, propagation-error datasets, two uncertainty-aware
regressors over the argument-of-latitude error, the Cartesian state-plus-
covariance correction, and a covariance-realism evaluation suite.
"""

from .aolmap import AolCorrection, jacobian_lambda, map_error_to_rsw, map_var_to_eci
from .astro import (
    OsculatingElements,
    RotationEciRsw,
    StateVector,
    cart_to_elements,
    eci_to_rsw,
    elements_to_cart,
    wrap_angle_diff,
)
from .corrector import CorrectionInputs, correct
from .kernels import BACKEND as KERNEL_BACKEND
from .propagator import (
    Covariance6,
    ForceConfig,
    PropagatorSettings,
    Trajectory,
    acceleration,
    drag_area_from_bc,
    propagate,
    propagate_covariance,
)
from .tcnn import GaussianPrediction

__version__ = "0.1.0"

__all__ = [
    "AolCorrection",
    "CorrectionInputs",
    "Covariance6",
    "ForceConfig",
    "GaussianPrediction",
    "KERNEL_BACKEND",
    "OsculatingElements",
    "PropagatorSettings",
    "RotationEciRsw",
    "StateVector",
    "Trajectory",
    "acceleration",
    "cart_to_elements",
    "correct",
    "drag_area_from_bc",
    "eci_to_rsw",
    "elements_to_cart",
    "jacobian_lambda",
    "map_error_to_rsw",
    "map_var_to_eci",
    "propagate",
    "propagate_covariance",
    "wrap_angle_diff",
]
