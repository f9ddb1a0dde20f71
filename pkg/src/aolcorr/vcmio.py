"""VCM-style ephemeris records: file format, sigma handling, catalog
filtering, and the synthetic series generator.

Wire format (one JSON object per line, one line per epoch, UTF-8):

    norad_id      int
    epoch_s       float, seconds from the dataset reference epoch
    r_eci_km      [x, y, z]
    v_eci_km_s    [vx, vy, vz]
    bc_m2_kg      float, reported ballistic coefficient
    srp_m2_kg     float, reported SRP coefficient (Cr*A/m)
    geopot_degree int
    drag_model    str
    f10           float, sfu
    f10a          float, sfu
    sigma_rsw     [sU, sV, sW, sUd, sVd, sWd]

On disk the position sigmas are km at full precision while the velocity
sigmas are written in m/s with exactly one decimal (0.1 m/s precision);
in memory ``VcmRecord.sigma_rsw`` is uniformly km and km/s. The coarse
velocity precision reproduces the source-data pathology where most velocity
sigmas truncate to zero; ``floor_velocity_sigmas`` replaces exact zeros with
0.05 m/s, the largest value the file precision cannot represent.

Catalog CSV columns: NORAD_CAT_ID, OBJECT_NAME, OBJECT_TYPE, RCS_SIZE,
PERIGEE (perigee altitude, km).
"""

import csv
import json
from dataclasses import dataclass, replace

import numpy as np

from .astro import StateVector, eci_to_rsw, elements_to_cart
from .errors import VcmFormatError
from .propagator import Covariance6, ForceConfig, PropagatorSettings, propagate_to_epochs

VELOCITY_SIGMA_QUANTUM = 1e-4  # km/s, i.e. 0.1 m/s file precision
VELOCITY_SIGMA_FLOOR = 5e-5  # km/s, i.e. 0.05 m/s

_FIELDS = (
    "norad_id",
    "epoch_s",
    "r_eci_km",
    "v_eci_km_s",
    "bc_m2_kg",
    "srp_m2_kg",
    "geopot_degree",
    "drag_model",
    "f10",
    "f10a",
    "sigma_rsw",
)

_CATALOG_COLUMNS = ("NORAD_CAT_ID", "OBJECT_NAME", "OBJECT_TYPE", "RCS_SIZE", "PERIGEE")


@dataclass(frozen=True)
class VcmRecord:
    """One ephemeris epoch with the dynamics parameters used to produce it."""

    norad_id: int
    epoch: float
    position: np.ndarray  # km, ECI
    velocity: np.ndarray  # km/s, ECI
    ballistic_coefficient: float  # m^2/kg
    srp_coefficient: float  # m^2/kg
    geopotential_degree: int
    drag_model: str
    f10: float
    f10a: float
    sigma_rsw: np.ndarray  # [sU, sV, sW] km, [sUd, sVd, sWd] km/s

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float))
        object.__setattr__(self, "velocity", np.asarray(self.velocity, dtype=float))
        object.__setattr__(self, "sigma_rsw", np.asarray(self.sigma_rsw, dtype=float))
        if self.sigma_rsw.shape != (6,):
            raise VcmFormatError("sigma_rsw must have six entries")
        if np.any(self.sigma_rsw < 0.0):
            raise VcmFormatError("sigmas must be non-negative")

    def state(self) -> StateVector:
        return StateVector(epoch=self.epoch, position=self.position, velocity=self.velocity)


@dataclass(frozen=True)
class CatalogRow:
    norad_id: int
    object_name: str
    object_type: str  # PAYLOAD | ROCKET BODY | DEBRIS | UNKNOWN
    rcs_size: str  # SMALL | MEDIUM | LARGE
    perigee_altitude: float  # km


def quantize_velocity_sigma(sigma_km_s: float) -> float:
    """Value (km/s) that survives a write/parse cycle: the sigma rounded to
    one decimal in m/s. Decimal formatting keeps the grid idempotent."""
    return float(f"{sigma_km_s * 1000.0:.1f}") / 1000.0


def floor_velocity_sigmas(rec: VcmRecord) -> VcmRecord:
    """Replace velocity sigmas that quantized to zero with 0.05 m/s, the
    largest value the file precision cannot capture. Nonzero sigmas pass
    through unchanged."""
    sig = rec.sigma_rsw.copy()
    for k in (3, 4, 5):
        if sig[k] == 0.0:
            sig[k] = VELOCITY_SIGMA_FLOOR
    return replace(rec, sigma_rsw=sig)


def rsw_sigmas_to_eci_cov(rec: VcmRecord) -> Covariance6:
    """Initial ECI covariance from uncorrelated RSW sigmas:
    P = R6^T diag(sigma^2) R6 with R6 the 6x6 ECI->RSW rotation at the
    record's state."""
    r6 = eci_to_rsw(rec.state()).six()
    p = r6.T @ np.diag(rec.sigma_rsw**2) @ r6
    return Covariance6(matrix=0.5 * (p + p.T), frame="ECI")


def _record_to_json_dict(rec: VcmRecord) -> dict:
    sig = list(rec.sigma_rsw)
    for k in (3, 4, 5):
        # on disk: m/s with one decimal
        sig[k] = float(f"{sig[k] * 1000.0:.1f}")
    return {
        "norad_id": rec.norad_id,
        "epoch_s": rec.epoch,
        "r_eci_km": list(rec.position),
        "v_eci_km_s": list(rec.velocity),
        "bc_m2_kg": rec.ballistic_coefficient,
        "srp_m2_kg": rec.srp_coefficient,
        "geopot_degree": rec.geopotential_degree,
        "drag_model": rec.drag_model,
        "f10": rec.f10,
        "f10a": rec.f10a,
        "sigma_rsw": sig,
    }


def write_vcm(records, path) -> None:
    """Write a record series as JSON lines, velocity sigmas quantized."""
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(_record_to_json_dict(rec)) + "\n")


def _parse_record(obj: dict, lineno: int) -> VcmRecord:
    missing = [f for f in _FIELDS if f not in obj]
    if missing:
        raise VcmFormatError(f"line {lineno}: missing mandatory field(s) {', '.join(missing)}")
    unknown = [k for k in obj if k not in _FIELDS]
    if unknown:
        raise VcmFormatError(f"line {lineno}: unknown field(s) {', '.join(unknown)}")
    try:
        raw_sig = [float(v) for v in obj["sigma_rsw"]]
        if len(raw_sig) != 6:
            raise ValueError("sigma_rsw needs six entries")
        sigma = raw_sig[:3] + [v / 1000.0 for v in raw_sig[3:]]  # m/s -> km/s
        rec = VcmRecord(
            norad_id=int(obj["norad_id"]),
            epoch=float(obj["epoch_s"]),
            position=[float(v) for v in obj["r_eci_km"]],
            velocity=[float(v) for v in obj["v_eci_km_s"]],
            ballistic_coefficient=float(obj["bc_m2_kg"]),
            srp_coefficient=float(obj["srp_m2_kg"]),
            geopotential_degree=int(obj["geopot_degree"]),
            drag_model=str(obj["drag_model"]),
            f10=float(obj["f10"]),
            f10a=float(obj["f10a"]),
            sigma_rsw=sigma,
        )
    except (TypeError, ValueError) as exc:
        raise VcmFormatError(f"line {lineno}: malformed numeric value ({exc})") from exc
    for vec, name in ((rec.position, "r_eci_km"), (rec.velocity, "v_eci_km_s")):
        if vec.shape != (3,) or not np.all(np.isfinite(vec)):
            raise VcmFormatError(f"line {lineno}: {name} must be three finite numbers")
    return rec


def parse_vcm(path) -> list[VcmRecord]:
    """Parse a JSON-lines VCM file; records must have strictly increasing
    epochs within each satellite's series."""
    records = []
    last_epoch: dict[int, float] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise VcmFormatError(f"line {lineno}: invalid JSON ({exc})") from exc
            rec = _parse_record(obj, lineno)
            prev = last_epoch.get(rec.norad_id)
            if prev is not None and rec.epoch <= prev:
                raise VcmFormatError(
                    f"line {lineno}: non-monotone epoch {rec.epoch} for satellite {rec.norad_id}"
                )
            last_epoch[rec.norad_id] = rec.epoch
            records.append(rec)
    return records


def read_catalog(path):
    """Read a Space-Track-style satcat CSV.

    Returns (rows, n_skipped); rows with missing or malformed mandatory
    fields are skipped and counted rather than raising.
    """
    rows = []
    n_skipped = 0
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or any(c not in reader.fieldnames for c in _CATALOG_COLUMNS):
            raise VcmFormatError(
                f"catalog must have columns {', '.join(_CATALOG_COLUMNS)}; got {reader.fieldnames}"
            )
        for raw in reader:
            try:
                rows.append(
                    CatalogRow(
                        norad_id=int(raw["NORAD_CAT_ID"]),
                        object_name=(raw["OBJECT_NAME"] or "").strip(),
                        object_type=(raw["OBJECT_TYPE"] or "").strip().upper(),
                        rcs_size=(raw["RCS_SIZE"] or "").strip().upper(),
                        perigee_altitude=float(raw["PERIGEE"]),
                    )
                )
            except (TypeError, ValueError, KeyError):
                n_skipped += 1
    return rows, n_skipped


def write_catalog(rows, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_CATALOG_COLUMNS)
        for r in rows:
            writer.writerow(
                [r.norad_id, r.object_name, r.object_type, r.rcs_size, r.perigee_altitude]
            )


def filter_catalog(rows) -> list[int]:
    """Selection criteria for the study population: large radar cross
    section, perigee below 1200 km, not debris, and not a member of the
    Starlink/OneWeb constellations. Order-preserving."""
    kept = []
    for r in rows:
        name = r.object_name.upper()
        if (
            r.rcs_size == "LARGE"
            and r.perigee_altitude < 1200.0
            and r.object_type != "DEBRIS"
            and "STARLINK" not in name
            and "ONEWEB" not in name
        ):
            kept.append(r.norad_id)
    return kept


def synthesize_vcm_series(
    norad_id: int,
    initial_elements,
    truth_cfg: ForceConfig,
    settings: PropagatorSettings,
    *,
    span: float,
    cadence: float,
    jitter_frac: float = 0.25,
    sigma_pos: float = 0.015,
    sigma_vel: float = 3e-5,
    bc_report_bias: float = 1.0,
    srp_coefficient: float = 0.0,
    geopot_degree: int = 4,
    drag_model_name: str = "EXP-TABLE",
    f10: float = 150.0,
    f10a: float | None = None,
    epoch0: float = 0.0,
    rng=None,
) -> list[VcmRecord]:
    """Stand-in for a real tracking pipeline: sample a truth propagation at
    jittered epochs and perturb each state with RSW-sigma-consistent noise.

    The reported ballistic coefficient is truth * bc_report_bias; together
    with any density bias in ``truth_cfg`` this is the drag mismodeling a
    downstream error model has to learn. Epoch jitter is uniform within
    +/- jitter_frac of the cadence. sigma_pos (km) and sigma_vel (km/s) apply
    per RSW axis and are reported in the record verbatim (velocity sigmas
    then quantize on write).
    """
    if cadence <= 0.0:
        raise ValueError("cadence must be positive")
    if rng is None:
        rng = np.random.default_rng()

    epochs = [epoch0]
    t = epoch0
    while t + cadence <= epoch0 + span + 1e-9:
        t += cadence
        jitter = cadence * jitter_frac * rng.uniform(-1.0, 1.0) if jitter_frac > 0.0 else 0.0
        epochs.append(min(max(t + jitter, epochs[-1] + 1.0), epoch0 + span))

    s0 = elements_to_cart(initial_elements, epoch=epoch0)
    states = np.empty((len(epochs), 6))
    states[0] = s0.rv
    if len(epochs) > 1:
        states[1:] = propagate_to_epochs(s0, truth_cfg, settings, epochs[1:], f10=f10)

    sigma = np.array([sigma_pos] * 3 + [sigma_vel] * 3)
    records = []
    for epoch, row in zip(epochs, states):
        state = StateVector(epoch=epoch, position=row[:3], velocity=row[3:])
        if sigma_pos > 0.0 or sigma_vel > 0.0:
            noise_rsw = rng.normal(0.0, 1.0, size=6) * sigma
            row = row + eci_to_rsw(state).six().T @ noise_rsw
        records.append(
            VcmRecord(
                norad_id=norad_id,
                epoch=epoch,
                position=row[:3],
                velocity=row[3:],
                ballistic_coefficient=truth_cfg.ballistic_coefficient * bc_report_bias,
                srp_coefficient=srp_coefficient,
                geopotential_degree=geopot_degree,
                drag_model=drag_model_name,
                f10=f10,
                f10a=f10 if f10a is None else f10a,
                sigma_rsw=sigma,
            )
        )
    return records
