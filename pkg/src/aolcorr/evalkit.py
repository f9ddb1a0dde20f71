"""Covariance-realism and error-statistics metrics.

Consistency here means the fraction of squared Mahalanobis distances below
the 99th percentile of the chi-square distribution for the matching degrees
of freedom: under-99% fractions indicate overconfident covariances, higher
fractions underconfident ones. Thresholds are computed at run time by
bisection on the regularized incomplete gamma function rather than
hard-coded. Quantiles use linear interpolation between order statistics
(numpy's default), fixed for reproducibility.
"""

import csv
from dataclasses import dataclass

import numpy as np
from scipy.special import gammainc

from .errors import EvalError

CONSISTENCY_P = 0.99
_ALLOWED_DOF = (1, 2, 6)
_MAHAL_JITTERS = (0.0, 1e-12, 1e-9)


def chi2_cdf(x, dof: int):
    """Regularized lower incomplete gamma P(dof/2, x/2)."""
    return gammainc(dof / 2.0, np.asarray(x, dtype=float) / 2.0)


def chi2_threshold(dof: int, p: float = CONSISTENCY_P) -> float:
    """Inverse chi-square CDF by bisection on the incomplete gamma."""
    if not 0.0 < p < 1.0:
        raise EvalError("p must be in (0, 1)")
    lo, hi = 0.0, 10.0
    while chi2_cdf(hi, dof) < p:
        hi *= 2.0
        if hi > 1e9:
            raise EvalError("threshold bisection failed to bracket")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if chi2_cdf(mid, dof) < p:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def mahalanobis_sq(error, p_matrix) -> float:
    """e^T P^-1 e via Cholesky solve, with symmetrization and a short jitter
    escalation; raises EvalError if the matrix stays non-PD."""
    e = np.asarray(error, dtype=float)
    p = np.asarray(p_matrix, dtype=float)
    p = 0.5 * (p + p.T)
    scale = max(float(np.max(np.abs(p))), 1e-300)
    for jit in _MAHAL_JITTERS:
        try:
            low = np.linalg.cholesky(p + jit * scale * np.eye(p.shape[0]))
        except np.linalg.LinAlgError:
            continue
        z = np.linalg.solve(low, e)
        return float(z @ z)
    raise EvalError("covariance not positive definite after jitter")


def mahalanobis_sq_many(errors, p_matrices):
    """Vector of squared distances; non-PD samples are excluded and counted.

    Returns (values, n_excluded).
    """
    values = []
    n_excluded = 0
    for e, p in zip(errors, p_matrices):
        try:
            values.append(mahalanobis_sq(e, p))
        except EvalError:
            n_excluded += 1
    return np.asarray(values), n_excluded


def consistency_pct(d2_samples, dof: int) -> float:
    """Percent of squared-distance samples under the chi-square 99th
    percentile for the given degrees of freedom."""
    if dof not in _ALLOWED_DOF:
        raise EvalError(f"dof must be one of {_ALLOWED_DOF}")
    d2 = np.asarray(d2_samples, dtype=float)
    if d2.size == 0:
        raise EvalError("no Mahalanobis samples")
    return 100.0 * float(np.mean(d2 < chi2_threshold(dof)))


@dataclass(frozen=True)
class ErrorSigmas:
    """Sample standard deviations of RSW errors: six per-dimension values
    (km, km/s) plus the standard deviations of the position-norm and
    velocity-norm errors."""

    per_dimension: np.ndarray
    norm_pos: float
    norm_vel: float
    n_samples: int


def error_sigmas(rsw_errors) -> ErrorSigmas:
    e = np.atleast_2d(np.asarray(rsw_errors, dtype=float))
    if e.shape[0] < 2 or e.shape[1] != 6:
        raise EvalError("need at least two 6-vector error samples")
    return ErrorSigmas(
        per_dimension=np.std(e, axis=0, ddof=1),
        norm_pos=float(np.std(np.linalg.norm(e[:, :3], axis=1), ddof=1)),
        norm_vel=float(np.std(np.linalg.norm(e[:, 3:], axis=1), ddof=1)),
        n_samples=e.shape[0],
    )


@dataclass(frozen=True)
class LetterValues:
    """Nested quantile pairs (tail prob, lower, upper), shallowest first,
    with points beyond the 3/2-widened outermost pair flagged as extreme."""

    pairs: tuple
    fence_low: float
    fence_high: float
    n_extreme: int
    n_samples: int


def letter_values(samples, depth: int = 3) -> LetterValues:
    """Quantile pairs halving the tail probability at each depth:
    (25, 75), then (12.5, 87.5), (6.25, 93.75), ...; linear-interpolation
    quantiles."""
    x = np.asarray(samples, dtype=float)
    if x.size < 2:
        raise EvalError("need at least two samples")
    if depth < 1:
        raise EvalError("depth must be at least 1")
    pairs = []
    p = 0.25
    for _ in range(depth):
        lo, hi = np.quantile(x, [p, 1.0 - p])
        pairs.append((p, float(lo), float(hi)))
        p *= 0.5
    _, out_lo, out_hi = pairs[-1]
    width = out_hi - out_lo
    fence_low = out_lo - 1.5 * width
    fence_high = out_hi + 1.5 * width
    n_extreme = int(np.sum((x < fence_low) | (x > fence_high)))
    return LetterValues(
        pairs=tuple(pairs),
        fence_low=fence_low,
        fence_high=fence_high,
        n_extreme=n_extreme,
        n_samples=x.size,
    )


def letter_values_by_day(dt_seconds, values, depth: int = 3, n_days: int = 7):
    """Per-day-bin letter values for the error-vs-time distribution export.

    Returns rows (day_bin, n, tail_prob, lower, upper); bins [k, k+1) days
    over [0, n_days]. Empty bins are skipped.
    """
    dts = np.asarray(dt_seconds, dtype=float) / 86400.0
    vals = np.asarray(values, dtype=float)
    rows = []
    for day in range(n_days):
        mask = (dts >= day) & (dts < day + 1)
        if int(mask.sum()) < 2:
            continue
        lv = letter_values(vals[mask], depth=depth)
        for p, lo, hi in lv.pairs:
            rows.append((day, int(mask.sum()), p, lo, hi))
    return rows


def write_letter_values_csv(rows, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["day_bin", "n_samples", "tail_prob", "lower", "upper"])
        writer.writerows(rows)


def mahalanobis_cdf_rows(d2_samples, dof: int):
    """Sorted squared distances with empirical and theoretical chi-square
    CDF columns, plot-ready; one row per input sample."""
    d2 = np.sort(np.asarray(d2_samples, dtype=float))
    if d2.size == 0:
        raise EvalError("no samples to export")
    ecdf = np.arange(1, d2.size + 1) / d2.size
    theo = chi2_cdf(d2, dof)
    return list(zip(d2.tolist(), ecdf.tolist(), theo.tolist()))


def mahalanobis_cdf_export(d2_samples, dof: int, path) -> None:
    rows = mahalanobis_cdf_rows(d2_samples, dof)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["mahalanobis_sq", "empirical_cdf", f"chi2_{dof}dof_cdf"])
        writer.writerows(rows)


@dataclass
class ConsistencyReport:
    """One row of the correction-performance table."""

    label: str
    sigma_rsw: list  # six per-dimension sigmas, km and km/s
    sigma_norm_pos_km: float
    sigma_norm_vel_m_s: float
    pct_consistent_1d: float | None
    pct_consistent_6d: float | None
    n_samples: int
    n_excluded: int = 0
    notes: str = ""

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "sigma_rsw_km_km_s": [float(v) for v in self.sigma_rsw],
            "sigma_Rs_km": float(self.sigma_rsw[1]),
            "sigma_Vr_m_s": float(self.sigma_rsw[3]) * 1000.0,
            "sigma_norm_pos_km": self.sigma_norm_pos_km,
            "sigma_norm_vel_m_s": self.sigma_norm_vel_m_s,
            "pct_consistent_1d": self.pct_consistent_1d,
            "pct_consistent_6d": self.pct_consistent_6d,
            "n_samples": self.n_samples,
            "n_excluded": self.n_excluded,
            "notes": self.notes,
        }


def build_report(label, rsw_errors, d2_1d=None, d2_6d=None, n_excluded=0, notes="") -> ConsistencyReport:
    sig = error_sigmas(rsw_errors)
    return ConsistencyReport(
        label=label,
        sigma_rsw=list(sig.per_dimension),
        sigma_norm_pos_km=sig.norm_pos,
        sigma_norm_vel_m_s=sig.norm_vel * 1000.0,
        pct_consistent_1d=None if d2_1d is None else consistency_pct(d2_1d, 1),
        pct_consistent_6d=None if d2_6d is None else consistency_pct(d2_6d, 6),
        n_samples=sig.n_samples,
        n_excluded=n_excluded,
        notes=notes,
    )
