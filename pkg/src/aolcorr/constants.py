"""Physical constants and the reference atmosphere table.

Units throughout the package: km, km/s, rad, seconds on a continuous count
from the dataset reference epoch. Densities are kg/m^3; ballistic and SRP
coefficients are m^2/kg.
"""

import math

MU_EARTH = 398600.4418  # km^3/s^2
R_EARTH = 6378.137  # km, equatorial
OMEGA_EARTH = 7.2921159e-5  # rad/s, sidereal rotation rate

# Zonal harmonic coefficients (unnormalized).
J2_EARTH = 1.08262668e-3
J3_EARTH = -2.53265649e-6
J4_EARTH = -1.61962159e-6

CD_FIXED = 2.2  # drag coefficient absorbed into the ballistic coefficient

DECAY_ALTITUDE_KM = 100.0  # propagation terminates below this altitude

# Cannonball SRP: 4.56e-6 N/m^2 at 1 AU -> km/s^2 per (m^2/kg) of Cr*A/m.
SRP_ACCEL_PER_COEFF = 4.56e-9

# Low-fidelity solar direction: mean longitude advancing on a circular
# ecliptic. Adequate because sun position only feeds the optional cannonball
# SRP term.
SUN_OBLIQUITY = math.radians(23.439281)
SUN_MEAN_MOTION = 2.0 * math.pi / (365.25 * 86400.0)  # rad/s

# Piecewise-exponential atmosphere: (base altitude km, density kg/m^3,
# scale height km). Standard reference values; bands cover 100-1500 km,
# the last band extrapolates upward.
DENSITY_TABLE = (
    (100.0, 5.297e-7, 5.877),
    (110.0, 9.661e-8, 7.263),
    (120.0, 2.438e-8, 9.473),
    (130.0, 8.484e-9, 12.636),
    (140.0, 3.845e-9, 16.149),
    (150.0, 2.070e-9, 22.523),
    (180.0, 5.464e-10, 29.740),
    (200.0, 2.789e-10, 37.105),
    (250.0, 7.248e-11, 45.546),
    (300.0, 2.418e-11, 53.628),
    (350.0, 9.518e-12, 53.298),
    (400.0, 3.725e-12, 58.515),
    (450.0, 1.585e-12, 60.828),
    (500.0, 6.967e-13, 63.822),
    (600.0, 1.454e-13, 71.835),
    (700.0, 3.614e-14, 88.667),
    (800.0, 1.170e-14, 124.64),
    (900.0, 5.245e-15, 181.05),
    (1000.0, 3.019e-15, 268.00),
)

# F10.7 density response: rho *= (1 + kappa * (F10 - F10_REFERENCE) / F10_REFERENCE)
F10_REFERENCE = 150.0
