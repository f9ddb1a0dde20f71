"""Coordinate frames, osculating-element conversions, and angle utilities.

All operations are pure functions on immutable values; everything downstream
(propagation, error datasets, the correction chain) builds on these.

Conventions:
  - ECI is an inertial frame; no Earth-orientation modeling (synthetic time
    scale, seconds from the dataset reference epoch).
  - RSW axes: radial, along-track (completing the in-plane direction of
    motion), cross-track (orbit normal).
  - Angles normalized to [0, 2*pi). Argument of latitude u = argp + true
    anomaly, well defined for circular orbits through the degenerate-angle
    conventions below.

Degenerate-angle conventions:
  - e < 1e-9: argp := 0 and the true anomaly is measured from the ascending
    node (so f coincides with u).
  - i < 1e-9: raan := 0 and the node direction is taken as +x.
"""

import math
from dataclasses import dataclass

import numpy as np

from .constants import MU_EARTH, R_EARTH
from .errors import GeometryError, NonEllipticalOrbitError

TWO_PI = 2.0 * math.pi

ECC_TOL = 1e-9  # below this the orbit is treated as circular
INC_TOL = 1e-9  # below this the orbit is treated as equatorial


def wrap_angle(angle: float) -> float:
    """Normalize an angle to [0, 2*pi)."""
    a = angle % TWO_PI
    # float modulo of a tiny negative can round up to exactly 2*pi
    return 0.0 if a >= TWO_PI else a


def wrap_angle_diff(u1: float, u2: float) -> float:
    """Difference u1 - u2 wrapped to (-pi, pi]."""
    d = math.pi - (math.pi - (u1 - u2)) % TWO_PI
    return d + TWO_PI if d <= -math.pi else d


def unwrap_series(wrapped: "list[float] | np.ndarray") -> np.ndarray:
    """Continuity unwrap: shift each entry by a multiple of 2*pi so adjacent
    entries differ by less than pi. The first entry is kept as-is."""
    out = np.array(wrapped, dtype=float)
    for k in range(1, out.size):
        out[k] += TWO_PI * round((out[k - 1] - out[k]) / TWO_PI)
    return out


@dataclass(frozen=True)
class StateVector:
    """ECI state: epoch (s), position (km), velocity (km/s)."""

    epoch: float
    position: np.ndarray
    velocity: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float))
        object.__setattr__(self, "velocity", np.asarray(self.velocity, dtype=float))
        if self.position.shape != (3,) or self.velocity.shape != (3,):
            raise ValueError("position and velocity must be 3-vectors")

    @property
    def rv(self) -> np.ndarray:
        """Stacked 6-vector [r; v]."""
        return np.concatenate([self.position, self.velocity])

    def altitude(self) -> float:
        """Spherical altitude above the equatorial radius, km."""
        return float(np.linalg.norm(self.position)) - R_EARTH


@dataclass(frozen=True)
class OsculatingElements:
    """Classical osculating elements of the tangent two-body orbit.

    a (km), e, and angles in rad; raan/argp/true_anomaly normalized to
    [0, 2*pi). Derived quantities (aol, angular momentum, radius) are exposed
    as properties.
    """

    a: float
    e: float
    i: float
    raan: float
    argp: float
    true_anomaly: float

    def __post_init__(self):
        if self.a <= 0.0:
            raise ValueError(f"semi-major axis must be positive, got {self.a}")
        if not 0.0 <= self.e < 1.0:
            raise ValueError(f"eccentricity must be in [0, 1), got {self.e}")
        for name in ("raan", "argp", "true_anomaly"):
            object.__setattr__(self, name, wrap_angle(getattr(self, name)))

    @property
    def aol(self) -> float:
        """Argument of latitude u = argp + true anomaly, mod 2*pi."""
        return wrap_angle(self.argp + self.true_anomaly)

    @property
    def angular_momentum(self) -> float:
        """Specific angular momentum h = sqrt(mu * a * (1 - e^2)), km^2/s."""
        return math.sqrt(MU_EARTH * self.a * (1.0 - self.e * self.e))

    @property
    def radius(self) -> float:
        """Orbit radius at the current true anomaly, km."""
        p = self.a * (1.0 - self.e * self.e)
        return p / (1.0 + self.e * math.cos(self.true_anomaly))

    @property
    def perigee_altitude(self) -> float:
        """Perigee altitude a*(1-e) - R_earth, km."""
        return self.a * (1.0 - self.e) - R_EARTH


@dataclass(frozen=True)
class RotationEciRsw:
    """Rotation from ECI to the RSW frame of a state.

    Rows of ``matrix`` are the radial, along-track, and cross-track unit
    vectors expressed in ECI.
    """

    matrix: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "matrix", np.asarray(self.matrix, dtype=float))
        if self.matrix.shape != (3, 3):
            raise ValueError("rotation matrix must be 3x3")

    def six(self) -> np.ndarray:
        """Block-diagonal 6x6 extension acting on [r; v] stacks."""
        out = np.zeros((6, 6))
        out[:3, :3] = self.matrix
        out[3:, 3:] = self.matrix
        return out

    def to_rsw(self, vec_eci: np.ndarray) -> np.ndarray:
        return self.matrix @ np.asarray(vec_eci, dtype=float)

    def to_eci(self, vec_rsw: np.ndarray) -> np.ndarray:
        return self.matrix.T @ np.asarray(vec_rsw, dtype=float)


def eci_to_rsw(s: StateVector) -> RotationEciRsw:
    """RSW triad at a state: radial = r/|r|, cross-track = (r x v)/|r x v|,
    along-track completes the right-handed set."""
    r = s.position
    v = s.velocity
    rn = np.linalg.norm(r)
    vn = np.linalg.norm(v)
    if rn == 0.0 or vn == 0.0:
        raise GeometryError("zero position or velocity vector")
    w = np.cross(r, v)
    wn = np.linalg.norm(w)
    if wn < 1e-12 * rn * vn:
        raise GeometryError("position and velocity are parallel; RSW frame undefined")
    radial = r / rn
    cross = w / wn
    along = np.cross(cross, radial)
    return RotationEciRsw(np.vstack([radial, along, cross]))


def _signed_angle(ref: np.ndarray, vec: np.ndarray, axis: np.ndarray) -> float:
    """Angle from ref to vec, positive about axis, in [0, 2*pi)."""
    s = float(np.dot(np.cross(ref, vec), axis))
    c = float(np.dot(ref, vec))
    return wrap_angle(math.atan2(s, c))


def cart_to_elements(s: StateVector) -> OsculatingElements:
    """Convert an ECI state to classical osculating elements.

    Raises NonEllipticalOrbitError for states with non-negative specific
    energy and GeometryError for (near-)rectilinear states. Near-circular and
    near-equatorial cases use the module's degenerate-angle conventions, which
    keep the argument of latitude well defined.
    """
    r_vec = s.position
    v_vec = s.velocity
    r = float(np.linalg.norm(r_vec))
    v = float(np.linalg.norm(v_vec))
    if r <= 0.0:
        raise GeometryError("zero position vector")

    energy = 0.5 * v * v - MU_EARTH / r
    if energy >= 0.0:
        raise NonEllipticalOrbitError(
            f"specific energy {energy:.6e} km^2/s^2 is non-negative; state is not elliptical"
        )
    a = -MU_EARTH / (2.0 * energy)

    h_vec = np.cross(r_vec, v_vec)
    h = float(np.linalg.norm(h_vec))
    if h < 1e-12 * r * v:
        raise GeometryError("angular momentum is zero; rectilinear trajectory")
    h_hat = h_vec / h

    e_vec = np.cross(v_vec, h_vec) / MU_EARTH - r_vec / r
    e = float(np.linalg.norm(e_vec))

    i = math.acos(max(-1.0, min(1.0, h_vec[2] / h)))

    # Node direction: z x h, or +x for equatorial orbits.
    n_vec = np.array([-h_vec[1], h_vec[0], 0.0])
    n = float(np.linalg.norm(n_vec))
    if i < INC_TOL or n < 1e-15:
        raan = 0.0
        node_hat = np.array([1.0, 0.0, 0.0])
    else:
        raan = wrap_angle(math.atan2(n_vec[1], n_vec[0]))
        node_hat = n_vec / n

    r_hat = r_vec / r
    if e < ECC_TOL:
        argp = 0.0
        f = _signed_angle(node_hat, r_hat, h_hat)
    else:
        e_hat = e_vec / e
        argp = _signed_angle(node_hat, e_hat, h_hat)
        f = _signed_angle(e_hat, r_hat, h_hat)

    return OsculatingElements(a=a, e=e, i=i, raan=raan, argp=argp, true_anomaly=f)


def elements_to_cart(el: OsculatingElements, epoch: float = 0.0) -> StateVector:
    """Inverse of cart_to_elements: perifocal state rotated into ECI."""
    p = el.a * (1.0 - el.e * el.e)
    if p <= 0.0:
        raise ValueError("non-positive semi-latus rectum")
    cf = math.cos(el.true_anomaly)
    sf = math.sin(el.true_anomaly)
    r = p / (1.0 + el.e * cf)
    pos_pf = np.array([r * cf, r * sf, 0.0])
    vfac = math.sqrt(MU_EARTH / p)
    vel_pf = np.array([-vfac * sf, vfac * (el.e + cf), 0.0])

    co, so = math.cos(el.raan), math.sin(el.raan)
    ci, si = math.cos(el.i), math.sin(el.i)
    cw, sw = math.cos(el.argp), math.sin(el.argp)
    rot = np.array(
        [
            [co * cw - so * sw * ci, -co * sw - so * cw * ci, so * si],
            [so * cw + co * sw * ci, -so * sw + co * cw * ci, -co * si],
            [sw * si, cw * si, ci],
        ]
    )
    return StateVector(epoch=epoch, position=rot @ pos_pf, velocity=rot @ vel_pf)
