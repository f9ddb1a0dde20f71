"""Propagation kernel backends.

Two interchangeable implementations of the hot loop live here:

  - ``_native``: Cython extension compiled at install time.
  - ``_purepy``: pure-Python fallback, always available.

The native backend is preferred when importable; set the environment
variable ``AOLCORR_FORCE_FALLBACK=1`` to force the pure-Python path (used by
the parity tests and the backend benchmark).
"""

import os

import numpy as np

from .. import constants
from . import _purepy

if os.environ.get("AOLCORR_FORCE_FALLBACK", "") == "1":
    _impl = _purepy
    BACKEND = "fallback"
else:
    try:
        from . import _native as _impl  # type: ignore[attr-defined]

        BACKEND = "native"
    except ImportError:
        _impl = _purepy
        BACKEND = "fallback"

integrate = _impl.integrate
accel_eci = _impl.accel_eci
atmosphere_density = _impl.atmosphere_density

STATUS_OK = _purepy.STATUS_OK
STATUS_DECAY = _purepy.STATUS_DECAY
STATUS_UNDERFLOW = _purepy.STATUS_UNDERFLOW


def get_backend(name: str | None = None):
    """Return a kernel module by name ('native' or 'fallback'); the active
    backend when name is None. Raises ImportError if 'native' was not built."""
    if name is None:
        return _impl
    if name == "fallback":
        return _purepy
    if name == "native":
        from . import _native  # type: ignore[attr-defined]

        return _native
    raise ValueError(f"unknown backend {name!r}")


def pack_params(
    *,
    zonal_degree: int,
    drag_enabled: bool,
    density_scale: float,
    f10_kappa: float,
    ballistic_coefficient: float,
    srp_enabled: bool,
    srp_coefficient: float,
    f10: float,
    sun_lon0: float = 0.0,
) -> np.ndarray:
    """Flatten force-model settings into the kernel parameter vector."""
    p = np.zeros(_purepy.IDX_TABLE + 3 * len(constants.DENSITY_TABLE))
    p[_purepy.IDX_MU] = constants.MU_EARTH
    p[_purepy.IDX_RE] = constants.R_EARTH
    p[_purepy.IDX_J2] = constants.J2_EARTH if zonal_degree >= 2 else 0.0
    p[_purepy.IDX_J3] = constants.J3_EARTH if zonal_degree >= 3 else 0.0
    p[_purepy.IDX_J4] = constants.J4_EARTH if zonal_degree >= 4 else 0.0
    p[_purepy.IDX_DRAG] = 1.0 if drag_enabled else 0.0
    p[_purepy.IDX_BC] = ballistic_coefficient
    p[_purepy.IDX_RHO_SCALE] = density_scale
    p[_purepy.IDX_KAPPA] = f10_kappa
    p[_purepy.IDX_F10] = f10
    p[_purepy.IDX_SRP] = 1.0 if srp_enabled else 0.0
    p[_purepy.IDX_SRP_COEFF] = srp_coefficient
    p[_purepy.IDX_OMEGA] = constants.OMEGA_EARTH
    p[_purepy.IDX_DECAY_ALT] = constants.DECAY_ALTITUDE_KM
    p[_purepy.IDX_SUN_LON0] = sun_lon0
    p[_purepy.IDX_SUN_RATE] = constants.SUN_MEAN_MOTION
    p[_purepy.IDX_SUN_OBLIQUITY] = constants.SUN_OBLIQUITY
    p[_purepy.IDX_SRP_ACCEL] = constants.SRP_ACCEL_PER_COEFF
    p[_purepy.IDX_F10_REF] = constants.F10_REFERENCE
    p[_purepy.IDX_N_BANDS] = float(len(constants.DENSITY_TABLE))
    for b, (h0, rho0, hs) in enumerate(constants.DENSITY_TABLE):
        base = _purepy.IDX_TABLE + 3 * b
        p[base] = h0
        p[base + 1] = rho0
        p[base + 2] = hs
    return p
