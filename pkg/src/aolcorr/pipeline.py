"""Pipeline stages: simulate -> gen-dataset -> train -> correct -> evaluate.

One JSON config file drives everything; parsing is strict (unknown keys are
rejected, seeds are mandatory). Every stage is a pure function of
(config, upstream artifacts): rerunning a stage with identical inputs
produces byte-identical outputs, which run-all records in a manifest of
SHA-256 hashes.

Artifacts, all under the output root:
    vcm/<norad>.jsonl         synthetic VCM series, one file per satellite
    vcm/catalog.csv           matching satellite catalog
    vcm/truth_meta.json       simulation ground truth (per-satellite draws)
    dataset/dataset.csv       one row per (source, forward target) sample
    dataset/norm_stats.json   31-column z-score statistics (training split)
    dataset/hgp_norm_stats.json  4-column statistics for the reduced set
    dataset/dataset_report.json  sample counts and exclusions
    models/tcnn.json, models/tcnn_loss.csv, models/hgp.json
    reports/corrected_<model>.csv   per-sample correction results
    reports/report.json             correction-performance table
    reports/letter_values_*.csv     AOL error distribution by day
    reports/mahalanobis_cdf_*.csv   empirical vs chi-square CDF exports
"""

import csv
import hashlib
import json
import logging
import math
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import dataset as ds
from . import evalkit, hgp, tcnn, vcmio
from .aolmap import AolCorrection, map_error_to_rsw
from .astro import OsculatingElements, StateVector, cart_to_elements, eci_to_rsw, elements_to_cart
from .constants import R_EARTH
from .corrector import CorrectionInputs, correct, marginal_2d
from .errors import AolcorrError, ConfigError
from .propagator import (
    Covariance6,
    ForceConfig,
    PropagatorSettings,
    propagate_to_epochs,
    propagate_with_stm,
)
from .tcnn import GaussianPrediction

log = logging.getLogger("aolcorr")

MODEL_NAMES = ("tcnn", "hgp")


def _from_dict(cls, obj, context):
    if not isinstance(obj, dict):
        raise ConfigError(f"{context}: expected an object")
    names = {f.name for f in fields(cls)}
    unknown = sorted(set(obj) - names)
    if unknown:
        raise ConfigError(f"{context}: unknown key(s) {', '.join(unknown)}")
    missing = sorted(names - set(obj))
    if missing:
        raise ConfigError(f"{context}: missing key(s) {', '.join(missing)}")
    return cls(**obj)


@dataclass(frozen=True)
class PathsConfig:
    catalog: str
    vcm_dir: str
    dataset_dir: str
    models_dir: str
    reports_dir: str


@dataclass(frozen=True)
class PropagatorConfig:
    rtol: float
    atol_pos_km: float
    atol_vel_km_s: float
    min_step_s: float
    max_step_s: float
    sample_interval_s: float

    def settings(self) -> PropagatorSettings:
        return PropagatorSettings(
            rtol=self.rtol,
            atol_pos=self.atol_pos_km,
            atol_vel=self.atol_vel_km_s,
            min_step=self.min_step_s,
            max_step=self.max_step_s,
            sample_interval=self.sample_interval_s,
        )


@dataclass(frozen=True)
class SynthesisConfig:
    n_satellites: int
    span_days: float
    cadence_hours: list
    jitter_frac: float
    sigma_pos_km: float
    sigma_vel_km_s: float
    bc_range: list
    bc_report_bias_range: list
    perigee_alt_range_km: list
    ecc_range: list
    inc_range_deg: list
    rocket_body_fraction: float
    f10_schedule: list  # [{"until_day": d, "f10_range": [lo, hi]}, ...]

    def __post_init__(self):
        if self.n_satellites < 2:
            raise ConfigError("synthesis.n_satellites must be at least 2")
        if not self.f10_schedule:
            raise ConfigError("synthesis.f10_schedule must have at least one window")
        last = 0.0
        for seg in self.f10_schedule:
            if set(seg) != {"until_day", "f10_range"}:
                raise ConfigError("f10_schedule entries need until_day and f10_range")
            if seg["until_day"] <= last:
                raise ConfigError("f10_schedule until_day values must increase")
            last = seg["until_day"]


@dataclass(frozen=True)
class SplitConfig:
    mode: str  # satellite | time | satellite_time
    train_fraction: float
    cutoff_day: float | None

    def __post_init__(self):
        if self.mode not in ("satellite", "time", "satellite_time"):
            raise ConfigError(f"unknown split mode {self.mode!r}")
        if self.mode != "satellite" and self.cutoff_day is None:
            raise ConfigError(f"split mode {self.mode!r} requires cutoff_day")


@dataclass(frozen=True)
class TcnnConfig:
    epochs: int
    batch_size: int
    lr: float
    patience: int
    beta_nll: float
    holdout_fraction: float


@dataclass(frozen=True)
class HgpConfig:
    downsample_n: int
    train_cap: int
    max_rounds: int


@dataclass(frozen=True)
class CorrectorConfig:
    alpha: float


@dataclass(frozen=True)
class WindowsConfig:
    horizon_days: float
    reverse_days: float

    def __post_init__(self):
        if self.horizon_days <= 0.0 or self.reverse_days <= 0.0:
            raise ConfigError("windows must be positive")


@dataclass(frozen=True)
class PipelineConfig:
    seed: int
    paths: PathsConfig
    propagator: PropagatorConfig
    forces_truth: ForceConfig
    forces_prediction: ForceConfig
    synthesis: SynthesisConfig
    split: SplitConfig
    models: str  # tcnn | hgp | both
    tcnn: TcnnConfig
    hgp: HgpConfig
    corrector: CorrectorConfig
    windows: WindowsConfig

    def model_list(self):
        return list(MODEL_NAMES) if self.models == "both" else [self.models]


def load_config(path) -> PipelineConfig:
    with open(path, "r", encoding="utf-8") as fh:
        obj = json.load(fh)
    return config_from_dict(obj)


def config_from_dict(obj: dict) -> PipelineConfig:
    if not isinstance(obj, dict):
        raise ConfigError("config root must be an object")
    expected = {
        "seed",
        "paths",
        "propagator",
        "forces",
        "synthesis",
        "split",
        "models",
        "tcnn",
        "hgp",
        "corrector",
        "windows",
    }
    unknown = sorted(set(obj) - expected)
    if unknown:
        raise ConfigError(f"config: unknown key(s) {', '.join(unknown)}")
    missing = sorted(expected - set(obj))
    if missing:
        raise ConfigError(f"config: missing key(s) {', '.join(missing)}")
    if not isinstance(obj["seed"], int):
        raise ConfigError("seed must be an integer (seeds are never defaulted)")
    forces = obj["forces"]
    if not isinstance(forces, dict) or set(forces) != {"truth", "prediction"}:
        raise ConfigError("forces must have exactly the keys truth and prediction")
    models = obj["models"]
    if models not in ("tcnn", "hgp", "both"):
        raise ConfigError(f"models must be tcnn, hgp, or both; got {models!r}")

    def force_config(sub, context):
        try:
            return _from_dict(ForceConfig, sub, context)
        except TypeError as exc:
            raise ConfigError(f"{context}: {exc}") from exc

    try:
        return PipelineConfig(
            seed=obj["seed"],
            paths=_from_dict(PathsConfig, obj["paths"], "paths"),
            propagator=_from_dict(PropagatorConfig, obj["propagator"], "propagator"),
            forces_truth=force_config(forces["truth"], "forces.truth"),
            forces_prediction=force_config(forces["prediction"], "forces.prediction"),
            synthesis=_from_dict(SynthesisConfig, obj["synthesis"], "synthesis"),
            split=_from_dict(SplitConfig, obj["split"], "split"),
            models=models,
            tcnn=_from_dict(TcnnConfig, obj["tcnn"], "tcnn"),
            hgp=_from_dict(HgpConfig, obj["hgp"], "hgp"),
            corrector=_from_dict(CorrectorConfig, obj["corrector"], "corrector"),
            windows=_from_dict(WindowsConfig, obj["windows"], "windows"),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _paths(cfg: PipelineConfig, out_dir) -> dict:
    root = Path(out_dir)
    return {
        "catalog": root / cfg.paths.vcm_dir / cfg.paths.catalog,
        "vcm_dir": root / cfg.paths.vcm_dir,
        "dataset_dir": root / cfg.paths.dataset_dir,
        "models_dir": root / cfg.paths.models_dir,
        "reports_dir": root / cfg.paths.reports_dir,
    }


# --- simulate ---------------------------------------------------------------


def _f10_segments(syn: SynthesisConfig):
    """(start_s, end_s, f10_range) tuples covering [0, span]."""
    segments = []
    start = 0.0
    span = syn.span_days * 86400.0
    for seg in syn.f10_schedule:
        end = min(seg["until_day"] * 86400.0, span)
        if end > start:
            segments.append((start, end, seg["f10_range"]))
            start = end
        if start >= span:
            break
    if start < span:
        segments.append((start, span, syn.f10_schedule[-1]["f10_range"]))
    return segments


def stage_simulate(cfg: PipelineConfig, out_dir) -> None:
    """Draw a synthetic satellite population and write its VCM files."""
    paths = _paths(cfg, out_dir)
    paths["vcm_dir"].mkdir(parents=True, exist_ok=True)
    syn = cfg.synthesis
    settings = cfg.propagator.settings()
    segments = _f10_segments(syn)

    catalog_rows = []
    truth_meta = {}
    for idx in range(syn.n_satellites):
        norad = 70001 + idx
        rng = np.random.default_rng([cfg.seed, 1, idx])
        perigee = rng.uniform(*syn.perigee_alt_range_km)
        ecc = rng.uniform(*syn.ecc_range)
        a = (perigee + R_EARTH) / (1.0 - ecc)
        elements = OsculatingElements(
            a=a,
            e=ecc,
            i=math.radians(rng.uniform(*syn.inc_range_deg)),
            raan=rng.uniform(0.0, 2.0 * math.pi),
            argp=rng.uniform(0.0, 2.0 * math.pi),
            true_anomaly=rng.uniform(0.0, 2.0 * math.pi),
        )
        bc_true = rng.uniform(*syn.bc_range)
        bc_bias = rng.uniform(*syn.bc_report_bias_range)
        # stratified cadence draw (geometric strata cycled by index): keeps
        # the population's tracking rates diverse, so the fast-cadence
        # satellites fill every reverse-feature slot while slow ones pad
        lo_h, hi_h = syn.cadence_hours
        n_strata = min(syn.n_satellites, 5)
        frac = (idx % n_strata + rng.uniform()) / n_strata
        cadence = lo_h * (hi_h / lo_h) ** frac * 3600.0
        is_rb = rng.uniform() < syn.rocket_body_fraction
        truth_cfg = replace(cfg.forces_truth, ballistic_coefficient=bc_true)

        records = []
        seg_elements = elements
        for seg_idx, (start, end, f10_range) in enumerate(segments):
            f10 = rng.uniform(*f10_range)
            seg_records = vcmio.synthesize_vcm_series(
                norad,
                seg_elements,
                truth_cfg,
                settings,
                span=end - start,
                cadence=cadence,
                jitter_frac=syn.jitter_frac,
                sigma_pos=syn.sigma_pos_km,
                sigma_vel=syn.sigma_vel_km_s,
                bc_report_bias=bc_bias,
                srp_coefficient=0.0,
                geopot_degree=cfg.forces_prediction.zonal_degree,
                f10=f10,
                epoch0=start,
                rng=rng,
            )
            if records:
                last = records[-1].epoch
                seg_records = [r for r in seg_records if r.epoch > last + 1.0]
            records.extend(seg_records)
            if seg_idx + 1 < len(segments):
                # chain the truth trajectory into the next window
                s_end = propagate_to_epochs(
                    elements_to_cart(seg_elements, epoch=start),
                    truth_cfg,
                    settings,
                    [end],
                    f10=f10,
                )[0]
                seg_elements = cart_to_elements(StateVector(end, s_end[:3], s_end[3:]))

        vcmio.write_vcm(records, paths["vcm_dir"] / f"{norad}.jsonl")
        catalog_rows.append(
            vcmio.CatalogRow(
                norad_id=norad,
                object_name=f"SYNTH-{idx:03d}" + (" R/B" if is_rb else ""),
                object_type="ROCKET BODY" if is_rb else "PAYLOAD",
                rcs_size="LARGE",
                perigee_altitude=perigee,
            )
        )
        truth_meta[str(norad)] = {
            "bc_true": bc_true,
            "bc_report_bias": bc_bias,
            "cadence_hours": cadence / 3600.0,
            "perigee_alt_km": perigee,
            "eccentricity": ecc,
            "n_records": len(records),
        }
        log.info("simulated %s: %d records", norad, len(records))

    vcmio.write_catalog(catalog_rows, paths["catalog"])
    with open(paths["vcm_dir"] / "truth_meta.json", "w", encoding="utf-8") as fh:
        json.dump(truth_meta, fh, indent=1, sort_keys=True)


# --- gen-dataset ------------------------------------------------------------


def _load_series(cfg: PipelineConfig, out_dir):
    paths = _paths(cfg, out_dir)
    rows, _ = vcmio.read_catalog(paths["catalog"])
    metas = {
        r.norad_id: ds.SatelliteMeta(
            norad_id=r.norad_id,
            is_payload=r.object_type == "PAYLOAD",
            is_rocket_body=r.object_type == "ROCKET BODY",
        )
        for r in rows
    }
    series = {}
    for vcm_path in sorted(paths["vcm_dir"].glob("*.jsonl")):
        records = vcmio.parse_vcm(vcm_path)
        if records:
            series[records[0].norad_id] = records
    if not series:
        raise ConfigError(f"no VCM files found in {paths['vcm_dir']} (run simulate first)")
    return series, metas


def _split_tag(cfg: PipelineConfig, sample, train_ids) -> str | None:
    cutoff = None if cfg.split.cutoff_day is None else cfg.split.cutoff_day * 86400.0
    if cfg.split.mode == "satellite":
        return "train" if sample.norad_id in train_ids else "val"
    if cfg.split.mode == "time":
        return "train" if sample.source_epoch <= cutoff else "val"
    # satellite_time: disjoint satellites AND disjoint windows; rows outside
    # their split's window are dropped
    if sample.norad_id in train_ids:
        return "train" if sample.source_epoch <= cutoff else None
    return "val" if sample.source_epoch > cutoff else None


def stage_gen_dataset(cfg: PipelineConfig, out_dir) -> None:
    paths = _paths(cfg, out_dir)
    paths["dataset_dir"].mkdir(parents=True, exist_ok=True)
    settings = cfg.propagator.settings()
    series, metas = _load_series(cfg, out_dir)

    all_sources = []
    report_total = ds.ErrorReport()
    for norad in sorted(series):
        sources, report = ds.compute_errors(
            series[norad],
            cfg.forces_prediction,
            settings,
            horizon=cfg.windows.horizon_days * 86400.0,
            reverse_window=cfg.windows.reverse_days * 86400.0,
        )
        all_sources.extend(sources)
        report_total.n_forward += report.n_forward
        report_total.n_reverse += report.n_reverse
        report_total.n_outliers_dropped += report.n_outliers_dropped
        report_total.n_decay_dropped += report.n_decay_dropped
        log.info("errors for %s: %d forward samples", norad, report.n_forward)

    flat = [s for se in all_sources for s in se.forward]
    if cfg.split.mode in ("satellite", "satellite_time"):
        train_flat, _ = ds.split_by_satellite(flat, cfg.split.train_fraction, seed=cfg.seed)
        train_ids = {s.norad_id for s in train_flat}
    else:
        train_ids = set()

    rows = []
    n_dropped_window = 0
    for se in all_sources:
        meta = metas[se.source.norad_id]
        for sample in se.forward:
            tag = _split_tag(cfg, sample, train_ids)
            if tag is None:
                n_dropped_window += 1
                continue
            rows.append(
                ds.DatasetRow(
                    norad_id=sample.norad_id,
                    source_epoch=sample.source_epoch,
                    target_epoch=sample.target_epoch,
                    dt_prop=sample.dt_prop,
                    split=tag,
                    label=sample.aol_error,
                    rsw_error=sample.rsw_error,
                    features=ds.build_features(sample, se.reverse, meta, se.source),
                )
            )

    train_rows = [r for r in rows if r.split == "train"]
    val_rows = [r for r in rows if r.split == "val"]
    if not train_rows or not val_rows:
        raise ConfigError("split produced an empty train or validation set")

    x_train = np.array([r.features for r in train_rows])
    y_train = np.array([r.label for r in train_rows])
    stats = ds.fit_normalization(x_train, y_train)
    stats.to_json(paths["dataset_dir"] / "norm_stats.json")

    x_hgp = np.array([ds.hgp_features(r.features) for r in train_rows])
    hgp_stats = ds.fit_normalization(
        x_hgp, y_train, feature_names=ds.HGP_FEATURE_NAMES, passthrough=()
    )
    hgp_stats.to_json(paths["dataset_dir"] / "hgp_norm_stats.json")

    ds.write_dataset_csv(rows, paths["dataset_dir"] / "dataset.csv")
    with open(paths["dataset_dir"] / "dataset_report.json", "w", encoding="utf-8") as fh:
        json.dump(
            {
                "n_rows": len(rows),
                "n_train": len(train_rows),
                "n_val": len(val_rows),
                "n_satellites": len(series),
                "n_train_satellites": len({r.norad_id for r in train_rows}),
                "n_reverse_samples": report_total.n_reverse,
                "n_outliers_dropped": report_total.n_outliers_dropped,
                "n_decay_dropped": report_total.n_decay_dropped,
                "n_dropped_outside_window": n_dropped_window,
            },
            fh,
            indent=1,
            sort_keys=True,
        )


# --- train ------------------------------------------------------------------


def _load_dataset(cfg: PipelineConfig, out_dir):
    paths = _paths(cfg, out_dir)
    rows = ds.read_dataset_csv(paths["dataset_dir"] / "dataset.csv")
    stats = ds.NormalizationStats.from_json(paths["dataset_dir"] / "norm_stats.json")
    hgp_stats = ds.NormalizationStats.from_json(paths["dataset_dir"] / "hgp_norm_stats.json")
    return rows, stats, hgp_stats


def stage_train(cfg: PipelineConfig, out_dir, model_name: str) -> None:
    paths = _paths(cfg, out_dir)
    paths["models_dir"].mkdir(parents=True, exist_ok=True)
    rows, stats, hgp_stats = _load_dataset(cfg, out_dir)
    train_rows = [r for r in rows if r.split == "train"]

    if model_name == "tcnn":
        if cfg.tcnn.holdout_fraction > 0.0:
            # satellite-disjoint early-stopping holdout carved out of train
            holdout_train, holdout_val = ds.split_by_satellite(
                train_rows, 1.0 - cfg.tcnn.holdout_fraction, seed=cfg.seed + 101
            )
        else:
            holdout_train, holdout_val = train_rows, []
        z_tr = stats.apply_features(np.array([r.features for r in holdout_train]))
        y_tr = stats.apply_label(np.array([r.label for r in holdout_train]))
        z_ho = (
            stats.apply_features(np.array([r.features for r in holdout_val]))
            if holdout_val
            else None
        )
        y_ho = stats.apply_label(np.array([r.label for r in holdout_val])) if holdout_val else None
        model = tcnn.init_model(seed=cfg.seed + 202)
        result = tcnn.train(
            model,
            z_tr,
            y_tr,
            z_ho,
            y_ho,
            epochs=cfg.tcnn.epochs,
            batch_size=cfg.tcnn.batch_size,
            lr=cfg.tcnn.lr,
            seed=cfg.seed + 303,
            patience=cfg.tcnn.patience,
            beta=cfg.tcnn.beta_nll,
        )
        tcnn.save_model(model, paths["models_dir"] / "tcnn.json", norm_stats_ref="norm_stats.json")
        with open(paths["models_dir"] / "tcnn_loss.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "train_nll", "holdout_nll"])
            for k, tr in enumerate(result.train_loss):
                ho = result.val_loss[k] if k < len(result.val_loss) else ""
                writer.writerow([k, repr(tr), repr(ho) if ho != "" else ""])
        log.info(
            "tcnn trained: %d epochs (best %d)", result.stopped_epoch + 1, result.best_epoch
        )
    elif model_name == "hgp":
        kept = ds.downsample_every_n(train_rows, cfg.hgp.downsample_n)
        x = hgp_stats.apply_features(np.array([ds.hgp_features(r.features) for r in kept]))
        y = hgp_stats.apply_label(np.array([r.label for r in kept]))
        model = hgp.fit_heteroscedastic(
            x, y, max_rounds=cfg.hgp.max_rounds, train_cap=cfg.hgp.train_cap
        )
        hgp.save_model(model, paths["models_dir"] / "hgp.json", norm_stats_ref="hgp_norm_stats.json")
        with open(paths["models_dir"] / "hgp_fit.json", "w", encoding="utf-8") as fh:
            json.dump(
                {
                    "n_train_points": len(kept),
                    "downsample_stride": cfg.hgp.downsample_n,
                    "log_marginal_likelihood": hgp.log_marginal_likelihood(model),
                    "het_converged": model.het_converged,
                    "noise_rescale": model.noise_rescale,
                    "length_scales": list(model.params.length_scales),
                    "signal_variance": model.params.signal_variance,
                },
                fh,
                indent=1,
                sort_keys=True,
            )
        log.info("hgp trained on %d points (converged=%s)", len(kept), model.het_converged)
    else:
        raise ConfigError(f"unknown model {model_name!r}")


# --- correct ----------------------------------------------------------------


class _Predictor:
    """Uniform denormalized-prediction interface over both model kinds."""

    def __init__(self, cfg: PipelineConfig, out_dir, model_name: str):
        paths = _paths(cfg, out_dir)
        self.stats = ds.NormalizationStats.from_json(paths["dataset_dir"] / "norm_stats.json")
        self.hgp_stats = ds.NormalizationStats.from_json(
            paths["dataset_dir"] / "hgp_norm_stats.json"
        )
        model_path = paths["models_dir"] / f"{model_name}.json"
        if not model_path.exists():
            raise ConfigError(f"model file {model_path} missing (run train first)")
        self.name = model_name
        if model_name == "tcnn":
            self.model = tcnn.load_model(model_path)
        else:
            self.model = hgp.load_model(model_path)

    def predict(self, features31: np.ndarray) -> GaussianPrediction:
        if self.name == "tcnn":
            z = self.stats.apply_features(features31[None, :])
            mean_n, var_n = tcnn.forward(self.model, z)
            mean = float(self.stats.invert_label(mean_n[0]))
            var = float(self.stats.denorm_variance(var_n[0]))
        else:
            x = self.hgp_stats.apply_features(ds.hgp_features(features31)[None, :])
            mean_n, var_n = hgp.predict(self.model, x)
            mean = float(self.hgp_stats.invert_label(mean_n[0]))
            var = float(self.hgp_stats.denorm_variance(var_n[0]))
        return GaussianPrediction(mean=mean, variance=max(var, 1e-18))


_CORRECTED_HEADER = (
    "norad_id",
    "source_epoch_s",
    "target_epoch_s",
    "dt_prop_s",
    "label_du_rad",
    "pred_mean_rad",
    "pred_var_rad2",
    "unc_r_km",
    "unc_s_km",
    "unc_w_km",
    "unc_rd_km_s",
    "unc_sd_km_s",
    "unc_wd_km_s",
    "cor_r_km",
    "cor_s_km",
    "cor_w_km",
    "cor_rd_km_s",
    "cor_sd_km_s",
    "cor_wd_km_s",
    "d2_u",
    "d2_6d_uncorrected",
    "d2_6d_corrected",
    "d2_2d_corrected",
)


def stage_correct(cfg: PipelineConfig, out_dir, model_name: str) -> None:
    """Apply a trained model to every validation sample: state correction,
    covariance correction, and the per-sample Mahalanobis diagnostics."""
    paths = _paths(cfg, out_dir)
    paths["reports_dir"].mkdir(parents=True, exist_ok=True)
    rows, _, _ = _load_dataset(cfg, out_dir)
    predictor = _Predictor(cfg, out_dir, model_name)
    series, _ = _load_series(cfg, out_dir)
    settings = cfg.propagator.settings()

    val_rows = [r for r in rows if r.split == "val"]
    by_source: dict = {}
    for r in val_rows:
        by_source.setdefault((r.norad_id, r.source_epoch), []).append(r)

    out_rows = []
    n_rejected = 0
    for (norad, source_epoch), group in sorted(by_source.items()):
        group.sort(key=lambda r: r.target_epoch)
        source = next(r for r in series[norad] if r.epoch == source_epoch)
        floored = vcmio.floor_velocity_sigmas(source)
        p0_eci = vcmio.rsw_sigmas_to_eci_cov(floored)
        p_rsw0 = Covariance6(matrix=np.diag(floored.sigma_rsw**2), frame="RSW")
        pred_cfg = ds.prediction_config(cfg.forces_prediction, source)
        epochs = [r.target_epoch for r in group]
        states, stms = propagate_with_stm(
            source.state(), pred_cfg, settings, epochs, f10=source.f10
        )
        for row, state_row, phi in zip(group, states, stms):
            x_prop = StateVector(row.target_epoch, state_row[:3], state_row[3:])
            p_prop = phi @ p0_eci.matrix @ phi.T
            p_prop = Covariance6(matrix=0.5 * (p_prop + p_prop.T), frame="ECI")
            prediction = predictor.predict(row.features)
            inputs = CorrectionInputs(
                x_prop=x_prop,
                p_prop=p_prop,
                prediction=prediction,
                p_rsw0=p_rsw0,
                alpha=cfg.corrector.alpha,
            )
            try:
                _, p_hat = correct(inputs)
                dx_rsw, dv_rsw = map_error_to_rsw(
                    AolCorrection(
                        delta_u=prediction.mean,
                        var_u=0.0,
                        elements=cart_to_elements(x_prop),
                    )
                )
            except AolcorrError as exc:
                n_rejected += 1
                log.warning("correction rejected for %s @ %s: %s", norad, row.target_epoch, exc)
                continue

            rot6 = eci_to_rsw(x_prop).six()
            corr_rsw = row.rsw_error - np.concatenate([dx_rsw, dv_rsw])
            e_unc_eci = rot6.T @ row.rsw_error
            e_cor_eci = rot6.T @ corr_rsw
            d2_u = (row.label - prediction.mean) ** 2 / prediction.variance
            d2_unc = evalkit.mahalanobis_sq(e_unc_eci, p_prop.matrix)
            d2_cor = evalkit.mahalanobis_sq(e_cor_eci, p_hat.matrix)
            # corrected (along-track pos, radial vel) marginal, 2 dof
            p_hat_rsw = rot6 @ p_hat.matrix @ rot6.T
            d2_2d = evalkit.mahalanobis_sq(corr_rsw[[1, 3]], marginal_2d(p_hat_rsw))
            out_rows.append(
                [norad, repr(row.source_epoch), repr(row.target_epoch), repr(row.dt_prop),
                 repr(row.label), repr(prediction.mean), repr(prediction.variance)]
                + [repr(float(v)) for v in row.rsw_error]
                + [repr(float(v)) for v in corr_rsw]
                + [repr(float(d2_u)), repr(float(d2_unc)), repr(float(d2_cor)),
                   repr(float(d2_2d))]
            )

    out_path = paths["reports_dir"] / f"corrected_{model_name}.csv"
    with open(out_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(_CORRECTED_HEADER)
        writer.writerows(out_rows)
    log.info("corrected %d samples with %s (%d rejected)", len(out_rows), model_name, n_rejected)


# --- evaluate ---------------------------------------------------------------


def _read_corrected(path):
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != _CORRECTED_HEADER:
            raise ConfigError(f"unexpected corrected-sample header in {path}")
        return [
            {
                "norad_id": int(rec[0]),
                "dt_prop": float(rec[3]),
                "label": float(rec[4]),
                "pred_mean": float(rec[5]),
                "pred_var": float(rec[6]),
                "unc": np.array([float(v) for v in rec[7:13]]),
                "cor": np.array([float(v) for v in rec[13:19]]),
                "d2_u": float(rec[19]),
                "d2_unc": float(rec[20]),
                "d2_cor": float(rec[21]),
                "d2_2d": float(rec[22]),
            }
            for rec in reader
        ]


def stage_evaluate(cfg: PipelineConfig, out_dir) -> None:
    paths = _paths(cfg, out_dir)
    paths["reports_dir"].mkdir(parents=True, exist_ok=True)
    reports = []
    per_model = {}
    for model_name in cfg.model_list():
        path = paths["reports_dir"] / f"corrected_{model_name}.csv"
        if not path.exists():
            raise ConfigError(f"missing {path}; run the correct stage for {model_name}")
        per_model[model_name] = _read_corrected(path)
    if not per_model:
        raise ConfigError("no corrected-sample files to evaluate")

    first = next(iter(per_model.values()))
    unc_errors = np.array([r["unc"] for r in first])
    d2_unc = np.array([r["d2_unc"] for r in first])
    reports.append(
        evalkit.build_report("uncorrected", unc_errors, d2_1d=None, d2_6d=d2_unc).to_dict()
    )
    evalkit.mahalanobis_cdf_export(
        d2_unc, 6, paths["reports_dir"] / "mahalanobis_cdf_uncorrected.csv"
    )
    day_rows = evalkit.letter_values_by_day(
        [r["dt_prop"] for r in first],
        [r["label"] for r in first],
        n_days=int(cfg.windows.horizon_days),
    )
    evalkit.write_letter_values_csv(
        day_rows, paths["reports_dir"] / "letter_values_uncorrected.csv"
    )

    for model_name, samples in per_model.items():
        cor_errors = np.array([r["cor"] for r in samples])
        reports.append(
            evalkit.build_report(
                model_name,
                cor_errors,
                d2_1d=np.array([r["d2_u"] for r in samples]),
                d2_6d=np.array([r["d2_cor"] for r in samples]),
                notes="corrected",
            ).to_dict()
        )
        evalkit.mahalanobis_cdf_export(
            np.array([r["d2_cor"] for r in samples]),
            6,
            paths["reports_dir"] / f"mahalanobis_cdf_{model_name}.csv",
        )
        day_rows = evalkit.letter_values_by_day(
            [r["dt_prop"] for r in samples],
            [r["label"] - r["pred_mean"] for r in samples],
            n_days=int(cfg.windows.horizon_days),
        )
        evalkit.write_letter_values_csv(
            day_rows, paths["reports_dir"] / f"letter_values_{model_name}.csv"
        )

    with open(paths["reports_dir"] / "report.json", "w", encoding="utf-8") as fh:
        json.dump(
            {
                "consistency_threshold_p": evalkit.CONSISTENCY_P,
                "rows": reports,
                "notes": "2-dof marginals and synthetic-data scales are artifact extensions",
            },
            fh,
            indent=1,
            sort_keys=True,
        )
    log.info("evaluation written to %s", paths["reports_dir"] / "report.json")


# --- run-all ----------------------------------------------------------------


def _hash_tree(*paths) -> str:
    digest = hashlib.sha256()
    for base in paths:
        base = Path(base)
        files = sorted(p for p in base.rglob("*") if p.is_file()) if base.is_dir() else [base]
        for p in files:
            if p.exists():
                digest.update(p.name.encode())
                digest.update(p.read_bytes())
    return digest.hexdigest()


STAGE_ORDER = ("simulate", "gen-dataset", "train", "correct", "evaluate")


def run_all(cfg: PipelineConfig, out_dir, only_stage: str | None = None) -> dict:
    """Run the pipeline end to end (or a single named stage) and write a
    manifest of artifact hashes."""
    paths = _paths(cfg, out_dir)
    manifest = {"seed": cfg.seed, "stages": {}}
    stages = STAGE_ORDER if only_stage is None else (only_stage,)
    for stage in stages:
        if stage == "simulate":
            stage_simulate(cfg, out_dir)
            manifest["stages"][stage] = {"vcm": _hash_tree(paths["vcm_dir"])}
        elif stage == "gen-dataset":
            stage_gen_dataset(cfg, out_dir)
            manifest["stages"][stage] = {"dataset": _hash_tree(paths["dataset_dir"])}
        elif stage == "train":
            for model_name in cfg.model_list():
                stage_train(cfg, out_dir, model_name)
            manifest["stages"][stage] = {"models": _hash_tree(paths["models_dir"])}
        elif stage == "correct":
            for model_name in cfg.model_list():
                stage_correct(cfg, out_dir, model_name)
            manifest["stages"][stage] = {"reports": _hash_tree(paths["reports_dir"])}
        elif stage == "evaluate":
            stage_evaluate(cfg, out_dir)
            manifest["stages"][stage] = {"reports": _hash_tree(paths["reports_dir"])}
        else:
            raise ConfigError(f"unknown stage {stage!r}")
    with open(Path(out_dir) / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
    return manifest
