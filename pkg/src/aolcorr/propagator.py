"""Special-perturbations propagator with configurable force models.

Forces: two-body gravity, J2-J4 zonal harmonics, cannonball drag against a
co-rotating piecewise-exponential atmosphere (with a multiplicative bias and
an optional F10.7-driven scale factor), and optional cannonball SRP. The
deliberately reduced force set keeps drag the only dynamics knob that can
differ between "truth" and "prediction" configurations, which is all the
error-learning method needs.

Integration is adaptive Dormand-Prince 5(4); covariance transport uses the
state transition matrix from the variational equations (no process noise, so
long-horizon covariances stay physics-optimistic on purpose). The hot loop
lives in ``aolcorr.kernels`` with a compiled backend when available.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .constants import CD_FIXED, J2_EARTH, J3_EARTH, J4_EARTH, MU_EARTH, R_EARTH
from .astro import StateVector
from .errors import PropagationDecayError, StepSizeUnderflowError


@dataclass(frozen=True)
class ForceConfig:
    """Force-model selection for one propagation.

    density_scale is a multiplicative bias on the reference atmosphere
    (1.0 = reference, 0.0 = vacuum); f10_kappa scales the density response
    to the F10.7 proxy: rho *= 1 + kappa * (F10 - 150) / 150.
    ballistic_coefficient is Cd*A/m in m^2/kg with Cd fixed at 2.2.
    """

    zonal_degree: int = 2
    drag_enabled: bool = True
    density_scale: float = 1.0
    f10_kappa: float = 0.0
    ballistic_coefficient: float = 0.02
    mass: float = 100.0
    srp_enabled: bool = False
    srp_coefficient: float = 0.0

    def __post_init__(self):
        if self.zonal_degree not in (0, 2, 3, 4):
            raise ValueError(f"zonal_degree must be one of 0, 2, 3, 4; got {self.zonal_degree}")
        if self.ballistic_coefficient <= 0.0:
            raise ValueError("ballistic_coefficient must be positive")
        if self.density_scale < 0.0:
            raise ValueError("density_scale must be non-negative")
        if self.mass <= 0.0:
            raise ValueError("mass must be positive")
        if self.srp_coefficient < 0.0:
            raise ValueError("srp_coefficient must be non-negative")


@dataclass(frozen=True)
class PropagatorSettings:
    """Integrator tolerances and step bounds (km, km/s, s)."""

    rtol: float = 1e-10
    atol_pos: float = 1e-9
    atol_vel: float = 1e-12
    min_step: float = 1e-3
    max_step: float = 300.0
    sample_interval: float = 60.0

    def __post_init__(self):
        if min(self.rtol, self.atol_pos, self.atol_vel) <= 0.0:
            raise ValueError("tolerances must be positive")
        if not 0.0 < self.min_step < self.max_step:
            raise ValueError("need 0 < min_step < max_step")
        if self.sample_interval <= 0.0:
            raise ValueError("sample_interval must be positive")


@dataclass(frozen=True)
class Covariance6:
    """6x6 symmetric PSD covariance with a frame tag ('ECI' or 'RSW')."""

    matrix: np.ndarray
    frame: str = "ECI"

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.shape != (6, 6):
            raise ValueError("covariance must be 6x6")
        scale = max(np.max(np.abs(m)), 1.0)
        if np.max(np.abs(m - m.T)) > 1e-12 * scale:
            raise ValueError("covariance must be symmetric")
        object.__setattr__(self, "matrix", 0.5 * (m + m.T))
        if self.frame not in ("ECI", "RSW"):
            raise ValueError(f"unknown frame {self.frame!r}")
        tr = float(np.trace(self.matrix))
        min_eig = float(np.linalg.eigvalsh(self.matrix)[0])
        if min_eig < -1e-9 * max(tr, 1e-300):
            raise ValueError(f"covariance is not PSD (min eigenvalue {min_eig:.3e})")


@dataclass(frozen=True)
class Trajectory:
    """Dense propagation output: epochs (n,) and states (n, 6)."""

    epochs: np.ndarray
    states: np.ndarray

    def state_at(self, index: int) -> StateVector:
        row = self.states[index]
        return StateVector(epoch=float(self.epochs[index]), position=row[:3], velocity=row[3:])

    @property
    def final_state(self) -> StateVector:
        return self.state_at(len(self.epochs) - 1)


def drag_area_from_bc(mass: float, bc: float) -> float:
    """Cross-sectional area A = m * Bc / Cd (m^2) consistent with a reported
    ballistic coefficient under the fixed Cd."""
    if mass <= 0.0 or bc <= 0.0:
        raise ValueError("mass and ballistic coefficient must be positive")
    return mass * bc / CD_FIXED


def _params_for(cfg: ForceConfig, f10: float) -> np.ndarray:
    return kernels.pack_params(
        zonal_degree=cfg.zonal_degree,
        drag_enabled=cfg.drag_enabled,
        density_scale=cfg.density_scale,
        f10_kappa=cfg.f10_kappa,
        ballistic_coefficient=cfg.ballistic_coefficient,
        srp_enabled=cfg.srp_enabled,
        srp_coefficient=cfg.srp_coefficient,
        f10=f10,
    )


def acceleration(s: StateVector, cfg: ForceConfig, f10: float = 150.0) -> np.ndarray:
    """Total modeled acceleration (km/s^2) at a state."""
    if cfg.drag_enabled and s.altitude() < 100.0:
        raise PropagationDecayError(
            f"altitude {s.altitude():.1f} km is below the 100 km decay floor",
            epoch=s.epoch,
            state=s,
        )
    params = _params_for(cfg, f10)
    return np.array(kernels.accel_eci(s.epoch, s.rv, params))


def atmosphere_density(alt_km: float, cfg: ForceConfig, f10: float = 150.0) -> float:
    """Biased atmospheric density (kg/m^3) at a spherical altitude."""
    return kernels.atmosphere_density(alt_km, _params_for(cfg, f10))


def zonal_potential(position: np.ndarray, cfg: ForceConfig) -> float:
    """Gravitational potential V with a = grad(V), i.e. V = mu/r * (1 - sum
    J_n (Re/r)^n P_n(z/r)). Used by energy-conservation checks; the zonal
    accelerations are its exact gradient."""
    x, y, z = (float(v) for v in position)
    r = math.sqrt(x * x + y * y + z * z)
    s = z / r
    re_r = R_EARTH / r
    corr = 0.0
    if cfg.zonal_degree >= 2:
        corr += J2_EARTH * re_r**2 * 0.5 * (3.0 * s * s - 1.0)
    if cfg.zonal_degree >= 3:
        corr += J3_EARTH * re_r**3 * 0.5 * (5.0 * s**3 - 3.0 * s)
    if cfg.zonal_degree >= 4:
        corr += J4_EARTH * re_r**4 * 0.125 * (35.0 * s**4 - 30.0 * s * s + 3.0)
    return MU_EARTH / r * (1.0 - corr)


def specific_energy(s: StateVector, cfg: ForceConfig) -> float:
    """Conserved energy v^2/2 - V(r) for conservative force configurations."""
    v2 = float(np.dot(s.velocity, s.velocity))
    return 0.5 * v2 - zonal_potential(s.position, cfg)


@dataclass
class RunStats:
    n_steps: int = 0
    n_rhs: int = 0
    err_accum_km: float = 0.0


def _run(s0, cfg, settings, targets, f10, with_stm, stats=None):
    targets = np.asarray(targets, dtype=float)
    n = targets.size
    out_states = np.empty((n, 6))
    out_stms = np.empty((n, 36)) if with_stm else None
    params = _params_for(cfg, f10)
    status, n_done, n_steps, n_rhs, err_accum = kernels.integrate(
        s0.epoch,
        s0.rv,
        targets,
        params,
        settings.rtol,
        settings.atol_pos,
        settings.atol_vel,
        settings.min_step,
        settings.max_step,
        with_stm,
        out_states,
        out_stms,
    )
    if stats is not None:
        stats.n_steps += n_steps
        stats.n_rhs += n_rhs
        stats.err_accum_km += err_accum
    if status == kernels.STATUS_UNDERFLOW:
        raise StepSizeUnderflowError(
            f"step size fell below {settings.min_step} s after {n_steps} steps"
        )
    if status == kernels.STATUS_DECAY:
        exc = PropagationDecayError(
            "trajectory fell below the decay altitude floor",
            epoch=float(targets[n_done - 1]) if n_done else s0.epoch,
            n_reached=n_done,
        )
        # partial results up to the last target reached before decay
        exc.states = out_states[:n_done]
        exc.stms = out_stms[:n_done].reshape(-1, 6, 6) if with_stm else None
        raise exc
    return out_states, out_stms


def propagate_to_epochs(
    s0: StateVector,
    cfg: ForceConfig,
    settings: PropagatorSettings,
    epochs,
    f10: float = 150.0,
    stats: "RunStats | None" = None,
) -> np.ndarray:
    """Propagate through a strictly monotone sequence of epochs (all forward
    or all backward of s0.epoch); returns an (n, 6) state array."""
    states, _ = _run(s0, cfg, settings, epochs, f10, False, stats)
    return states


def propagate(
    s0: StateVector,
    cfg: ForceConfig,
    settings: PropagatorSettings,
    t_end: float,
    f10: float = 150.0,
) -> Trajectory:
    """Propagate to t_end with dense output every settings.sample_interval
    seconds; the final sample lands exactly on t_end."""
    if t_end == s0.epoch:
        epochs = np.array([s0.epoch])
    else:
        span = t_end - s0.epoch
        step = math.copysign(settings.sample_interval, span)
        n_whole = int(math.floor(abs(span) / settings.sample_interval + 1e-12))
        epochs = s0.epoch + step * np.arange(n_whole + 1)
        if abs(epochs[-1] - t_end) <= 1e-9:
            epochs[-1] = t_end
        else:
            epochs = np.append(epochs, t_end)
    states, _ = _run(s0, cfg, settings, epochs, f10, False)
    return Trajectory(epochs=epochs, states=states)


def propagate_with_stm(
    s0: StateVector,
    cfg: ForceConfig,
    settings: PropagatorSettings,
    epochs,
    f10: float = 150.0,
    stats: "RunStats | None" = None,
):
    """As propagate_to_epochs but also returns the (n, 6, 6) state transition
    matrices Phi(t_k, t0) from the variational equations."""
    states, stms = _run(s0, cfg, settings, epochs, f10, True, stats)
    return states, stms.reshape(-1, 6, 6)


def propagate_covariance(
    s0: StateVector,
    p0: Covariance6,
    cfg: ForceConfig,
    settings: PropagatorSettings,
    t_end: float,
    f10: float = 150.0,
):
    """Transport an ECI covariance to t_end: P(t) = Phi P0 Phi^T, symmetrized.

    Returns (state at t_end, Covariance6 at t_end).
    """
    if p0.frame != "ECI":
        raise ValueError("initial covariance must be in the ECI frame")
    states, stms = propagate_with_stm(s0, cfg, settings, [t_end], f10)
    phi = stms[0]
    p = phi @ p0.matrix @ phi.T
    p = 0.5 * (p + p.T)
    row = states[0]
    return (
        StateVector(epoch=float(t_end), position=row[:3], velocity=row[3:]),
        Covariance6(matrix=p, frame="ECI"),
    )
