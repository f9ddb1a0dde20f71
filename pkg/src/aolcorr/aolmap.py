"""Map a scalar argument-of-latitude error and its variance into RSW / ECI
position-velocity corrections.

The mapping treats the error as a phase shift along the propagated orbit:
all of it lives in the orbit plane, none in the cross-track direction. With
r, e, u, omega, f, h the *propagated* osculating quantities and du the AOL
error (reference minus propagated), the position/velocity corrections are

    dX_rsw = [ r (1 - cos du),
               r {2 sin du - e [sin(w-u-2du) + sin(u-w)]} / (2 (e cos(u-w) + 1)),
               0 ]
    dV_rsw = [ -(mu/h) sin du,
               mu {-2 cos du + 2 + e [-cos(w-u-2du) + 2 cos(du+u-w) - cos(u-w)]}
                   / (2 h (e cos(u-w) + 1)),
               0 ]

and the 6x1 Jacobian Lambda below is their exact derivative with respect to
du (the finite-difference property test enforces this). Since u - w equals
the true anomaly f, every (u - w) above is evaluated as f.

For eccentric orbits the formulas agree with an explicit same-ellipse phase
shift construction to first order in e*du; at e = 0 the agreement is exact.
The scalar variance maps through Lambda as a rank-1 covariance.
"""

import math
from dataclasses import dataclass

import numpy as np

from .astro import OsculatingElements, RotationEciRsw
from .constants import MU_EARTH
from .errors import AolMapError
from .propagator import Covariance6

DENOM_EPS = 1e-12


@dataclass(frozen=True)
class AolCorrection:
    """Scalar AOL error (rad) and variance (rad^2) with the propagated
    elements supplying the orbit geometry."""

    delta_u: float
    var_u: float
    elements: OsculatingElements

    def __post_init__(self):
        if self.var_u < 0.0:
            raise AolMapError("variance must be non-negative")


def _geometry(c: AolCorrection):
    el = c.elements
    du = c.delta_u
    if abs(du) >= math.pi / 2.0:
        raise AolMapError(f"|delta_u| = {abs(du):.3f} rad is outside the mapping's domain (< pi/2)")
    f = el.true_anomaly
    denom = el.e * math.cos(f) + 1.0
    if denom <= DENOM_EPS:
        raise AolMapError("1 + e cos f is numerically zero")
    return el.radius, el.e, f, el.angular_momentum, du, denom


def map_error_to_rsw(c: AolCorrection):
    """RSW position (km) and velocity (km/s) corrections for the AOL error.

    Returns (dx_rsw, dv_rsw); third components are exactly zero.
    """
    r, e, f, h, du, denom = _geometry(c)
    mu = MU_EARTH
    dx_r = r * (1.0 - math.cos(du))
    dx_s = r * (2.0 * math.sin(du) + e * (math.sin(f + 2.0 * du) - math.sin(f))) / (2.0 * denom)
    dv_r = -(mu / h) * math.sin(du)
    dv_s = (
        mu
        * (
            -2.0 * math.cos(du)
            + 2.0
            + e * (-math.cos(f + 2.0 * du) + 2.0 * math.cos(f + du) - math.cos(f))
        )
        / (2.0 * h * denom)
    )
    return np.array([dx_r, dx_s, 0.0]), np.array([dv_r, dv_s, 0.0])


def jacobian_lambda(c: AolCorrection) -> np.ndarray:
    """Derivative of the stacked [dX_rsw; dV_rsw] with respect to delta_u."""
    r, e, f, h, du, denom = _geometry(c)
    mu = MU_EARTH
    return np.array(
        [
            r * math.sin(du),
            r * (math.cos(du) + e * math.cos(f + 2.0 * du)) / denom,
            0.0,
            -(mu / h) * math.cos(du),
            mu * (math.sin(du) + e * (math.sin(f + 2.0 * du) - math.sin(f + du))) / (h * denom),
            0.0,
        ]
    )


def correction_vector_eci(c: AolCorrection, rot: RotationEciRsw) -> np.ndarray:
    """Stacked 6-vector correction rotated into ECI: R6^T [dX_rsw; dV_rsw]."""
    dx, dv = map_error_to_rsw(c)
    return rot.six().T @ np.concatenate([dx, dv])


def map_var_to_rsw(c: AolCorrection) -> np.ndarray:
    """Rank-1 RSW covariance Lambda P_u Lambda^T (plain ndarray; singular by
    construction, so not a valid Covariance6 on its own)."""
    lam = jacobian_lambda(c)
    return c.var_u * np.outer(lam, lam)


def map_var_to_eci(c: AolCorrection, rot: RotationEciRsw) -> Covariance6:
    """Scalar AOL variance expressed in ECI: R6^T (Lambda P_u Lambda^T) R6."""
    r6 = rot.six()
    p = r6.T @ map_var_to_rsw(c) @ r6
    return Covariance6(matrix=0.5 * (p + p.T), frame="ECI")
