"""Propagation-error datasets: labels, feature vectors, normalization, and
splits.

For every VCM record (the "source") the prediction dynamics are propagated
to every other record epoch up to seven days ahead, and up to two days back.
The label is the argument-of-latitude error, reference minus propagated,
wrapped to (-pi, pi] and continuity-unwrapped along growing |dt| so secular
drift beyond half a revolution keeps its sign. Forward samples become
training rows; reverse samples only feed the feature vector.

The 31-entry feature vector, in order:

    rev_dt_01..11      signed reverse propagation times, s (negative; zero
                       padding at the tail, nearest epoch first)
    rev_du_01..11      matching reverse AOL errors, rad
    perigee_alt_km     from the propagated elements at the target
    eccentricity       propagated, at target
    cos_f, cos_i       cosines of propagated true anomaly / inclination
    bc_m2_kg           ballistic coefficient reported in the source record
    f10a_sfu           81-day average solar flux from the source record
    is_payload         one-hot satellite type flags
    is_rocket_body
    dt_prop_s          forward propagation time

Everything except the two type flags is z-scored against training-set
statistics; labels are trained in normalized units and the predicted
variance denormalizes by the squared label scale.
"""

import csv
import json
import math
from dataclasses import dataclass

import numpy as np

from .astro import OsculatingElements, StateVector, cart_to_elements, eci_to_rsw, wrap_angle_diff
from .errors import DatasetError, PropagationDecayError
from .propagator import ForceConfig, PropagatorSettings, propagate_to_epochs
from .vcmio import VcmRecord

TWO_PI = 2.0 * math.pi

HORIZON_S = 7 * 86400.0
REVERSE_WINDOW_S = 2 * 86400.0
MAX_ABS_AOL_ERROR = 0.5  # rad; beyond this a sample is a decay/divergence artifact
N_REVERSE_SLOTS = 11

FEATURE_NAMES = tuple(
    [f"rev_dt_{k:02d}" for k in range(1, N_REVERSE_SLOTS + 1)]
    + [f"rev_du_{k:02d}" for k in range(1, N_REVERSE_SLOTS + 1)]
    + [
        "perigee_alt_km",
        "eccentricity",
        "cos_f",
        "cos_i",
        "bc_m2_kg",
        "f10a_sfu",
        "is_payload",
        "is_rocket_body",
        "dt_prop_s",
    ]
)
N_FEATURES = len(FEATURE_NAMES)  # 31
PASSTHROUGH_FEATURES = ("is_payload", "is_rocket_body")

HGP_FEATURE_NAMES = ("rev_du_longest", "perigee_alt_km", "bc_m2_kg", "dt_prop_s")


@dataclass(frozen=True)
class SatelliteMeta:
    norad_id: int
    is_payload: bool
    is_rocket_body: bool


@dataclass(frozen=True)
class ErrorSample:
    """One (source epoch, target epoch) propagation-error sample."""

    norad_id: int
    source_epoch: float
    target_epoch: float
    dt_prop: float  # target - source; negative for reverse samples
    aol_error: float  # rad, reference minus propagated, unwrapped
    rsw_error: np.ndarray  # reference minus propagated in the propagated RSW
    elements_at_target: OsculatingElements


@dataclass
class SourceErrors:
    """All error samples rooted at one source record."""

    source: VcmRecord
    forward: list
    reverse: list  # sorted by |dt| ascending


@dataclass
class ErrorReport:
    n_forward: int = 0
    n_reverse: int = 0
    n_outliers_dropped: int = 0
    n_decay_dropped: int = 0


def prediction_config(template: ForceConfig, rec: VcmRecord) -> ForceConfig:
    """Per-record prediction dynamics: the template supplies the atmosphere
    model choices, the record supplies its reported coefficients."""
    degree = min(template.zonal_degree, max(0, rec.geopotential_degree))
    if degree == 1:
        degree = 0
    from dataclasses import replace

    return replace(
        template,
        zonal_degree=degree,
        ballistic_coefficient=rec.ballistic_coefficient,
        srp_coefficient=rec.srp_coefficient if template.srp_enabled else 0.0,
    )


def unwrap_next(raw_wrapped: float, prev: float) -> float:
    """Shift a wrapped angle difference by a multiple of 2*pi so it stays
    continuous with the previous value in the chain."""
    return raw_wrapped + TWO_PI * round((prev - raw_wrapped) / TWO_PI)


def _samples_for(source: VcmRecord, targets, states, cfg, report):
    """Error samples for one direction; targets are (record, epoch) in
    propagation order and states the propagated rows."""
    samples = []
    prev_du = 0.0
    for rec, row in zip(targets, states):
        prop_state = StateVector(epoch=rec.epoch, position=row[:3], velocity=row[3:])
        el_prop = cart_to_elements(prop_state)
        el_ref = cart_to_elements(rec.state())
        raw = wrap_angle_diff(el_ref.aol, el_prop.aol)
        du = unwrap_next(raw, prev_du)
        prev_du = du
        if abs(du) > MAX_ABS_AOL_ERROR:
            report.n_outliers_dropped += 1
            continue
        rsw_err = eci_to_rsw(prop_state).six() @ (rec.state().rv - prop_state.rv)
        samples.append(
            ErrorSample(
                norad_id=source.norad_id,
                source_epoch=source.epoch,
                target_epoch=rec.epoch,
                dt_prop=rec.epoch - source.epoch,
                aol_error=du,
                rsw_error=rsw_err,
                elements_at_target=el_prop,
            )
        )
    return samples


def compute_errors(
    series,
    template: ForceConfig,
    settings: PropagatorSettings,
    *,
    horizon: float = HORIZON_S,
    reverse_window: float = REVERSE_WINDOW_S,
) -> tuple[list, ErrorReport]:
    """Forward/reverse propagation errors for one satellite's record series.

    Returns (list of SourceErrors in epoch order, report). Sources whose
    propagation decays keep the samples gathered up to the decay epoch; the
    dropped remainder is counted.
    """
    series = sorted(series, key=lambda r: r.epoch)
    report = ErrorReport()
    out = []
    for k, src in enumerate(series):
        cfg = prediction_config(template, src)
        fwd_targets = [r for r in series[k + 1 :] if r.epoch - src.epoch <= horizon + 1e-9]
        rev_targets = [
            r for r in reversed(series[:k]) if src.epoch - r.epoch <= reverse_window + 1e-9
        ]

        def _run_direction(targets):
            if not targets:
                return []
            epochs = [r.epoch for r in targets]
            try:
                states = propagate_to_epochs(src.state(), cfg, settings, epochs, f10=src.f10)
            except PropagationDecayError as exc:
                states = exc.states
                targets = targets[: len(states)]
                report.n_decay_dropped += len(epochs) - len(states)
            return _samples_for(src, targets, states, cfg, report)

        forward = _run_direction(fwd_targets)
        reverse = _run_direction(rev_targets)
        report.n_forward += len(forward)
        report.n_reverse += len(reverse)
        out.append(SourceErrors(source=src, forward=forward, reverse=reverse))
    return out, report


def build_features(
    sample: ErrorSample,
    reverse_samples,
    meta: SatelliteMeta,
    source: VcmRecord,
) -> np.ndarray:
    """Assemble the 31-entry feature vector for one forward sample."""
    fv = np.zeros(N_FEATURES)
    ordered = sorted(reverse_samples, key=lambda s: abs(s.dt_prop))[:N_REVERSE_SLOTS]
    for i, rev in enumerate(ordered):
        fv[i] = rev.dt_prop
        fv[N_REVERSE_SLOTS + i] = rev.aol_error
    el = sample.elements_at_target
    fv[22] = el.perigee_altitude
    fv[23] = el.e
    fv[24] = math.cos(el.true_anomaly)
    fv[25] = math.cos(el.i)
    fv[26] = source.ballistic_coefficient
    fv[27] = source.f10a
    fv[28] = 1.0 if meta.is_payload else 0.0
    fv[29] = 1.0 if meta.is_rocket_body else 0.0
    fv[30] = sample.dt_prop
    return fv


def hgp_features(fv: np.ndarray) -> np.ndarray:
    """Reduced 4-entry feature vector: the reverse AOL error at the longest
    reverse epoch (0 when fully padded), perigee altitude, ballistic
    coefficient, and forward propagation time."""
    fv = np.asarray(fv, dtype=float)
    if fv.shape != (N_FEATURES,):
        raise DatasetError(f"expected a {N_FEATURES}-entry feature vector")
    rev_dt = fv[:N_REVERSE_SLOTS]
    filled = np.nonzero(rev_dt)[0]
    longest_du = fv[N_REVERSE_SLOTS + filled[-1]] if filled.size else 0.0
    return np.array([longest_du, fv[22], fv[26], fv[30]])


@dataclass
class NormalizationStats:
    """Per-column z-score statistics fitted on training data; passthrough
    columns (the one-hot flags) keep mean 0 / std 1."""

    feature_names: tuple
    mean: np.ndarray
    std: np.ndarray
    passthrough: tuple
    label_mean: float
    label_std: float
    n_rows: int

    def apply_features(self, x: np.ndarray) -> np.ndarray:
        return (np.atleast_2d(np.asarray(x, dtype=float)) - self.mean) / self.std

    def apply_label(self, y):
        return (np.asarray(y, dtype=float) - self.label_mean) / self.label_std

    def invert_label(self, z):
        return np.asarray(z, dtype=float) * self.label_std + self.label_mean

    def denorm_variance(self, var):
        return np.asarray(var, dtype=float) * self.label_std**2

    def to_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(
                {
                    "feature_names": list(self.feature_names),
                    "mean": list(self.mean),
                    "std": list(self.std),
                    "passthrough": list(self.passthrough),
                    "label_mean": self.label_mean,
                    "label_std": self.label_std,
                    "n_rows": self.n_rows,
                },
                fh,
                indent=1,
            )

    @classmethod
    def from_json(cls, path) -> "NormalizationStats":
        with open(path, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
        return cls(
            feature_names=tuple(obj["feature_names"]),
            mean=np.asarray(obj["mean"], dtype=float),
            std=np.asarray(obj["std"], dtype=float),
            passthrough=tuple(obj["passthrough"]),
            label_mean=float(obj["label_mean"]),
            label_std=float(obj["label_std"]),
            n_rows=int(obj["n_rows"]),
        )


def fit_normalization(
    x: np.ndarray,
    y: np.ndarray,
    feature_names=FEATURE_NAMES,
    passthrough=PASSTHROUGH_FEATURES,
) -> NormalizationStats:
    """Column means/standard deviations from training data. Constant
    normalized columns are rejected by name: they carry no information and
    would divide by zero."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.asarray(y, dtype=float)
    if x.shape[0] < 2:
        raise DatasetError("need at least two training rows")
    if x.shape[1] != len(feature_names):
        raise DatasetError("feature count does not match feature names")
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    for j, name in enumerate(feature_names):
        if name in passthrough:
            mean[j] = 0.0
            std[j] = 1.0
        elif std[j] <= 1e-12 * (1.0 + abs(mean[j])):  # roundoff-level spread
            raise DatasetError(f"feature column {name!r} is constant in the training data")
    label_std = float(y.std())
    if label_std <= 1e-12 * (1.0 + abs(float(y.mean()))):
        raise DatasetError("label column is constant in the training data")
    return NormalizationStats(
        feature_names=tuple(feature_names),
        mean=mean,
        std=std,
        passthrough=tuple(p for p in passthrough if p in feature_names),
        label_mean=float(y.mean()),
        label_std=label_std,
        n_rows=x.shape[0],
    )


def split_by_satellite(samples, train_fraction: float = 0.8, seed: int = 0):
    """Satellite-disjoint split: shuffle the distinct satellite ids with the
    seed and cut at round(fraction * count). Returns (train, validation)."""
    ids = sorted({s.norad_id for s in samples})
    if len(ids) < 2:
        raise DatasetError("need at least two satellites to split")
    rng = np.random.default_rng(seed)
    order = [ids[i] for i in rng.permutation(len(ids))]
    n_train = int(round(train_fraction * len(ids)))
    n_train = min(max(n_train, 1), len(ids) - 1)
    train_ids = set(order[:n_train])
    train = [s for s in samples if s.norad_id in train_ids]
    val = [s for s in samples if s.norad_id not in train_ids]
    return train, val


def split_by_time(samples, cutoff_epoch: float):
    """Time split: training samples have source epochs at or before the
    cutoff, validation samples strictly after (future VCMs)."""
    train = [s for s in samples if s.source_epoch <= cutoff_epoch]
    val = [s for s in samples if s.source_epoch > cutoff_epoch]
    return train, val


def downsample_every_n(samples, n: int = 1000):
    """Per-satellite stride-n selection, order-preserving; every satellite
    contributing at least one sample keeps at least one."""
    if n < 1:
        raise DatasetError("stride must be at least 1")
    if n == 1:
        return list(samples)
    by_sat: dict = {}
    for s in samples:
        by_sat.setdefault(s.norad_id, []).append(s)
    out = []
    for sat_samples in by_sat.values():
        out.extend(sat_samples[::n])
    return out


@dataclass
class DatasetRow:
    """One flattened training row as persisted in the dataset CSV."""

    norad_id: int
    source_epoch: float
    target_epoch: float
    dt_prop: float
    split: str  # "train" | "val"
    label: float
    rsw_error: np.ndarray
    features: np.ndarray


_CSV_HEADER = (
    "norad_id",
    "source_epoch_s",
    "target_epoch_s",
    "dt_prop_s",
    "split",
    "label_du_rad",
    "err_r_km",
    "err_s_km",
    "err_w_km",
    "err_rd_km_s",
    "err_sd_km_s",
    "err_wd_km_s",
) + FEATURE_NAMES


def write_dataset_csv(rows, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(_CSV_HEADER)
        for r in rows:
            writer.writerow(
                [r.norad_id, repr(r.source_epoch), repr(r.target_epoch), repr(r.dt_prop), r.split, repr(r.label)]
                + [repr(float(v)) for v in r.rsw_error]
                + [repr(float(v)) for v in r.features]
            )


def read_dataset_csv(path):
    rows = []
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != _CSV_HEADER:
            raise DatasetError(f"unexpected dataset header in {path}")
        for rec in reader:
            rows.append(
                DatasetRow(
                    norad_id=int(rec[0]),
                    source_epoch=float(rec[1]),
                    target_epoch=float(rec[2]),
                    dt_prop=float(rec[3]),
                    split=rec[4],
                    label=float(rec[5]),
                    rsw_error=np.array([float(v) for v in rec[6:12]]),
                    features=np.array([float(v) for v in rec[12:]]),
                )
            )
    return rows
