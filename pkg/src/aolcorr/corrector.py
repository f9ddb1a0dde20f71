"""Apply a predicted AOL error/variance to a propagated state and covariance.

The state takes the mapped correction directly. The covariance goes through
an inflate-then-measure cycle so an overconfident physics covariance cannot
drown out the model's uncertainty:

  1. P_rsw = Lambda P_u Lambda^T + P_rsw0   (initial covariance keeps it PD)
  2. Q = alpha * S P_rsw S with S = diag(0,1,0,1,0,0): a large inflation of
     the (along-track position, radial velocity) marginal, the two axes the
     phase error actually drives
  3. the inflated covariance is measured back down with a Joseph-form Kalman
     update whose measurement is exactly that 2-D marginal

Inflation is built in RSW and rotated into ECI before being added, since the
propagated covariance is ECI. The untouched dimensions keep the propagated
physics; the measured marginal ends up at the model's predicted uncertainty.
"""

import math
from dataclasses import dataclass

import numpy as np

from .aolmap import AolCorrection, correction_vector_eci, map_var_to_rsw
from .astro import StateVector, cart_to_elements, eci_to_rsw
from .errors import CorrectorError
from .propagator import Covariance6
from .tcnn import GaussianPrediction

DEFAULT_ALPHA = 1e6

# selector for the along-track-position / radial-velocity pair (0-based 1, 3)
_MARGINAL_IDX = (1, 3)


@dataclass(frozen=True)
class CorrectionInputs:
    """Everything one correction needs.

    x_prop/p_prop: propagated state and ECI covariance at the correction
    epoch; prediction: model output for the AOL error (reference minus
    propagated); p_rsw0: the initial VCM covariance as uncorrelated RSW
    sigmas squared.
    """

    x_prop: StateVector
    p_prop: Covariance6
    prediction: GaussianPrediction
    p_rsw0: Covariance6
    alpha: float = DEFAULT_ALPHA

    def __post_init__(self):
        if self.p_prop.frame != "ECI":
            raise CorrectorError("propagated covariance must be ECI")
        if self.p_rsw0.frame != "RSW":
            raise CorrectorError("initial VCM covariance must be RSW")
        if self.alpha <= 0.0:
            raise CorrectorError("alpha must be positive")


def marginal_2d(p_rsw: np.ndarray) -> np.ndarray:
    """2x2 marginal of a 6x6 RSW covariance in (along-track position,
    radial velocity)."""
    idx = np.ix_(_MARGINAL_IDX, _MARGINAL_IDX)
    return np.asarray(p_rsw, dtype=float)[idx]


def _inv_2x2(m: np.ndarray) -> np.ndarray:
    """Closed-form inverse with a determinant/condition guard.

    The two axes carry different units (km vs km/s), so the matrix is
    diagonally rescaled first; the 1e12 condition limit then measures real
    near-singularity rather than the unit mismatch.
    """
    d0, d1 = m[0, 0], m[1, 1]
    if d0 <= 0.0 or d1 <= 0.0:
        raise CorrectorError("innovation matrix has a non-positive diagonal")
    rho = m[0, 1] * m[1, 0] / (d0 * d1)  # squared correlation
    det_scaled = 1.0 - rho
    # balanced matrix [[1, r],[r, 1]]: cond = (1+|r|)/(1-|r|) = (1+|r|)^2/det
    if det_scaled <= 0.0 or (1.0 + math.sqrt(abs(rho))) ** 2 / det_scaled > 1e12:
        raise CorrectorError(
            f"innovation matrix not invertible (scaled det {det_scaled:.3e})"
        )
    det = det_scaled * d0 * d1
    return np.array([[m[1, 1], -m[0, 1]], [-m[1, 0], m[0, 0]]]) / det


def correct(inputs: CorrectionInputs):
    """Return (corrected state, corrected ECI covariance)."""
    x = inputs.x_prop
    elements = cart_to_elements(x)
    rot = eci_to_rsw(x)
    corr = AolCorrection(
        delta_u=inputs.prediction.mean, var_u=inputs.prediction.variance, elements=elements
    )

    # state update: add the mapped error
    delta_eci = correction_vector_eci(corr, rot)
    x_hat = StateVector(
        epoch=x.epoch,
        position=x.position + delta_eci[:3],
        velocity=x.velocity + delta_eci[3:],
    )

    # model covariance in RSW, made positive definite by the initial VCM term
    p_rsw_k = map_var_to_rsw(corr) + inputs.p_rsw0.matrix

    # inflate the propagated covariance along the corrected marginal
    s = np.diag([0.0, 1.0, 0.0, 1.0, 0.0, 0.0])
    q_rsw = inputs.alpha * s @ p_rsw_k @ s
    r6 = rot.six()
    p_minus = inputs.p_prop.matrix + r6.T @ q_rsw @ r6

    # Joseph-form measurement of the 2-D marginal
    h_sel = np.zeros((2, 6))
    h_sel[0, _MARGINAL_IDX[0]] = 1.0
    h_sel[1, _MARGINAL_IDX[1]] = 1.0
    h_mat = h_sel @ r6
    p_meas = marginal_2d(p_rsw_k)
    innov = h_mat @ p_minus @ h_mat.T + p_meas
    gain = p_minus @ h_mat.T @ _inv_2x2(innov)
    ikh = np.eye(6) - gain @ h_mat
    p_hat = ikh @ p_minus @ ikh.T + gain @ p_meas @ gain.T
    p_hat = 0.5 * (p_hat + p_hat.T)
    return x_hat, Covariance6(matrix=p_hat, frame="ECI")
