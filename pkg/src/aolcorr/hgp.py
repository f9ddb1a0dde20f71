"""Heteroscedastic Gaussian-process regression on the reduced feature set.

Exact GP algebra with a squared-exponential kernel,

    k(x_i, x_j) = s2 * exp( - sum_d (x_id - x_jd)^2 / theta_d ),

per-dimension length scales (the scalar-theta kernel is the special case of
equal scales), zero prior mean on normalized targets, and predictive
equations

    mu_*    = k(x_*, X) [K + N]^-1 Y
    sigma2_* = k(x_*, x_*) - k(x_*, X) [K + N]^-1 k(X, x_*)

where N is sigma_n^2 I for the homoscedastic model or a per-point noise
diagonal in heteroscedastic mode (which also adds the predicted observation
noise at x_* to sigma2_*).

Heteroscedastic fitting follows the iterative most-likely scheme: fit a
homoscedastic GP, estimate pointwise log squared residuals (posterior
variance included, which offsets the fit's own optimism), smooth them with a
latent GP, refit the main GP against that noise field, and iterate to
tolerance. A global rescale of the noise field keeps the mean standardized
squared residual at one; smoothing log residuals systematically understates
the noise level without it.

Hyperparameters are optimized in log space by L-BFGS-B with the analytic
log-marginal-likelihood gradient; the fit contract is only that the returned
likelihood is no worse than the initial one.
"""

import base64
import json
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular
from scipy.optimize import minimize

from .errors import ModelError
from .tcnn import GaussianPrediction

DEFAULT_TRAIN_CAP = 4000  # O(n^3) budget
_JITTERS = (0.0, 1e-10, 1e-8, 1e-6)
_VAR_FLOOR_FRAC = 1e-12


@dataclass(frozen=True)
class GpKernelParams:
    length_scales: np.ndarray  # theta_d, divisors of the squared distance
    signal_variance: float
    noise_variance: float

    def __post_init__(self):
        object.__setattr__(
            self, "length_scales", np.atleast_1d(np.asarray(self.length_scales, dtype=float))
        )
        if np.any(self.length_scales <= 0.0) or self.signal_variance <= 0.0:
            raise ModelError("kernel parameters must be strictly positive")
        if self.noise_variance <= 0.0:
            raise ModelError("noise variance must be strictly positive")


@dataclass
class GpModel:
    x: np.ndarray  # (n, d) normalized inputs
    y: np.ndarray  # (n,)
    params: GpKernelParams
    noise: np.ndarray | None  # per-point noise variances (het mode)
    chol: np.ndarray
    alpha: np.ndarray
    jitter: float
    latent: "GpModel | None" = None
    noise_rescale: float = 1.0
    het_converged: bool = True

    @property
    def n_train(self) -> int:
        return self.x.shape[0]


def kernel(x_i, x_j, params: GpKernelParams) -> float:
    """Squared-exponential covariance between two points."""
    d = np.asarray(x_i, dtype=float) - np.asarray(x_j, dtype=float)
    return params.signal_variance * math.exp(-float(np.sum(d * d / params.length_scales)))


def kernel_matrix(x1: np.ndarray, x2: np.ndarray, params: GpKernelParams) -> np.ndarray:
    x1 = np.atleast_2d(x1)
    x2 = np.atleast_2d(x2)
    scaled = -np.sum(
        (x1[:, None, :] - x2[None, :, :]) ** 2 / params.length_scales, axis=2
    )
    return params.signal_variance * np.exp(scaled)


def _noise_diag(params: GpKernelParams, noise: np.ndarray | None, n: int) -> np.ndarray:
    return noise if noise is not None else np.full(n, params.noise_variance)


def _try_cholesky(k_total: np.ndarray, signal: float):
    for jit in _JITTERS:
        try:
            low = cholesky(k_total + jit * signal * np.eye(k_total.shape[0]), lower=True)
            return low, jit * signal
        except np.linalg.LinAlgError:
            continue
        except Exception:
            continue
    raise ModelError("kernel matrix not positive definite even after jitter escalation")


def condition(x, y, params: GpKernelParams, noise: np.ndarray | None = None) -> GpModel:
    """Build a GP posterior at fixed hyperparameters (no optimization)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.asarray(y, dtype=float)
    if x.shape[0] != y.shape[0] or x.shape[0] < 1:
        raise ModelError("inputs and targets must align")
    k_total = kernel_matrix(x, x, params) + np.diag(_noise_diag(params, noise, x.shape[0]))
    low, jit = _try_cholesky(k_total, params.signal_variance)
    alpha = solve_triangular(low.T, solve_triangular(low, y, lower=True), lower=False)
    return GpModel(
        x=x, y=y, params=params, noise=noise, chol=low, alpha=alpha, jitter=jit
    )


def log_marginal_likelihood(model: GpModel) -> float:
    n = model.n_train
    return float(
        -0.5 * model.y @ model.alpha
        - np.sum(np.log(np.diag(model.chol)))
        - 0.5 * n * math.log(2.0 * math.pi)
    )


def _neg_lml_and_grad(log_p, x, y, noise, d):
    """Objective for the optimizer; log_p = [log theta_1..d, log s2(, log sn2)]."""
    theta = np.exp(log_p[:d])
    s2 = math.exp(log_p[d])
    opt_noise = noise is None
    sn2 = math.exp(log_p[d + 1]) if opt_noise else None
    n = x.shape[0]

    sqd = (x[:, None, :] - x[None, :, :]) ** 2  # (n, n, d)
    k_core = np.exp(-np.sum(sqd / theta, axis=2))
    k_sig = s2 * k_core
    k_total = k_sig + np.diag(noise if noise is not None else np.full(n, sn2))
    try:
        low, jit = _try_cholesky(k_total, s2)
    except ModelError:
        return 1e12, np.zeros_like(log_p)
    alpha = solve_triangular(low.T, solve_triangular(low, y, lower=True), lower=False)
    lml = -0.5 * y @ alpha - np.sum(np.log(np.diag(low))) - 0.5 * n * math.log(2.0 * math.pi)

    k_inv = cho_solve((low, True), np.eye(n))
    outer = np.outer(alpha, alpha) - k_inv  # d(lml)/dK = outer / 2

    grad = np.empty_like(log_p)
    for j in range(d):
        dk = k_sig * (sqd[:, :, j] / theta[j])
        grad[j] = 0.5 * np.sum(outer * dk)
    grad[d] = 0.5 * np.sum(outer * k_sig)
    if opt_noise:
        grad[d + 1] = 0.5 * sn2 * np.trace(outer)
    return -lml, -grad


def fit(
    x,
    y,
    init: GpKernelParams | None = None,
    noise: np.ndarray | None = None,
    train_cap: int = DEFAULT_TRAIN_CAP,
    maxiter: int = 200,
) -> GpModel:
    """Maximize the log marginal likelihood over kernel hyperparameters.

    With ``noise`` given (heteroscedastic refit), the per-point noise vector
    is held fixed and only length scales and signal variance move.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.asarray(y, dtype=float)
    n, d = x.shape
    if n < 2:
        raise ModelError("need at least two training points")
    if n > train_cap:
        raise ModelError(f"training set ({n}) exceeds the cap ({train_cap}); downsample first")

    if init is None:
        y_var = max(float(np.var(y)), 1e-12)
        init = GpKernelParams(
            length_scales=np.full(d, 1.0),
            signal_variance=y_var,
            noise_variance=0.1 * y_var,
        )

    opt_noise = noise is None
    log_p0 = np.concatenate(
        [
            np.log(init.length_scales),
            [math.log(init.signal_variance)],
            [math.log(init.noise_variance)] if opt_noise else [],
        ]
    )
    bounds = [(math.log(1e-4), math.log(1e6))] * d + [(math.log(1e-9), math.log(1e6))]
    if opt_noise:
        bounds.append((math.log(1e-12), math.log(1e3)))

    f0, _ = _neg_lml_and_grad(log_p0, x, y, noise, d)
    result = minimize(
        _neg_lml_and_grad,
        log_p0,
        args=(x, y, noise, d),
        jac=True,
        method="L-BFGS-B",
        bounds=bounds,
        options={"maxiter": maxiter},
    )
    log_best = result.x if result.fun <= f0 else log_p0  # never return a worse fit

    params = GpKernelParams(
        length_scales=np.exp(log_best[:d]),
        signal_variance=math.exp(log_best[d]),
        noise_variance=math.exp(log_best[d + 1]) if opt_noise else init.noise_variance,
    )
    return condition(x, y, params, noise=noise)


def predict(model: GpModel, x_star) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean and variance at query points (n_star, d).

    Heteroscedastic models add the predicted observation noise at x_star;
    the variance is floored strictly above zero either way.
    """
    x_star = np.atleast_2d(np.asarray(x_star, dtype=float))
    k_star = kernel_matrix(model.x, x_star, model.params)  # (n, n_star)
    mean = k_star.T @ model.alpha
    v = solve_triangular(model.chol, k_star, lower=True)
    var = model.params.signal_variance - np.sum(v * v, axis=0)
    var = np.maximum(var, _VAR_FLOOR_FRAC * model.params.signal_variance)
    if model.noise is not None and model.latent is not None:
        lat_mean, _ = predict(model.latent, x_star)
        var = var + model.noise_rescale * np.exp(lat_mean)
    return mean, var


def predict_one(model: GpModel, x_star) -> GaussianPrediction:
    mean, var = predict(model, np.asarray(x_star)[None, :])
    return GaussianPrediction(mean=float(mean[0]), variance=float(var[0]))


def fit_heteroscedastic(
    x,
    y,
    init: GpKernelParams | None = None,
    max_rounds: int = 10,
    rel_tol: float = 1e-4,
    train_cap: int = DEFAULT_TRAIN_CAP,
) -> GpModel:
    """Iterative most-likely heteroscedastic fit (see module docstring).

    Returns the last iterate with ``het_converged`` False (and a warning) if
    the marginal likelihood has not settled within ``max_rounds``.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.asarray(y, dtype=float)
    current = fit(x, y, init=init, train_cap=train_cap)
    last_nll = -log_marginal_likelihood(current)
    latent = None
    rescale = 1.0
    converged = False
    for _ in range(max_rounds):
        # current.latent is unset inside the loop, so this is the pure
        # posterior: squared residuals plus posterior variance estimate the
        # local observation noise
        mu, post_var = predict(current, x)
        resid_sq = (y - mu) ** 2 + post_var
        z = np.log(np.maximum(resid_sq, 1e-14))
        latent = fit(x, z, train_cap=train_cap)
        z_hat, _ = predict(latent, x)
        raw_noise = np.exp(z_hat)
        rescale = float(np.sum((y - mu) ** 2) / max(np.sum(raw_noise), 1e-300))
        noise_vec = np.maximum(rescale * raw_noise, 1e-14)
        current = fit(x, y, init=current.params, noise=noise_vec, train_cap=train_cap)
        nll = -log_marginal_likelihood(current)
        if abs(nll - last_nll) <= rel_tol * max(abs(last_nll), 1.0):
            converged = True
            last_nll = nll
            break
        last_nll = nll
    if not converged:
        warnings.warn("heteroscedastic iteration did not converge; returning last iterate")
    current.latent = latent
    current.noise_rescale = rescale
    current.het_converged = converged
    return current


def _encode(arr: np.ndarray) -> str:
    return base64.b64encode(np.asarray(arr, dtype="<f8").tobytes()).decode()


def _decode(text: str, shape) -> np.ndarray:
    return np.frombuffer(base64.b64decode(text), dtype="<f8").astype(float).reshape(shape)


def save_model(model: GpModel, path, norm_stats_ref: str = "") -> None:
    """Persist the fitted GP: inputs, targets, hyperparameters, noise vector,
    and the latent noise GP, arrays as little-endian float64 (base64)."""
    n, d = model.x.shape

    def params_dict(p: GpKernelParams):
        return {
            "length_scales": list(p.length_scales),
            "signal_variance": p.signal_variance,
            "noise_variance": p.noise_variance,
        }

    payload = {
        "format": "aolcorr-hgp-v1",
        "n_train": n,
        "n_features": d,
        "norm_stats": norm_stats_ref,
        "params": params_dict(model.params),
        "x_f64_le": _encode(model.x),
        "y_f64_le": _encode(model.y),
        "noise_f64_le": _encode(model.noise) if model.noise is not None else None,
        "noise_rescale": model.noise_rescale,
        "het_converged": model.het_converged,
        "latent": None,
    }
    if model.latent is not None:
        payload["latent"] = {
            "params": params_dict(model.latent.params),
            "y_f64_le": _encode(model.latent.y),
        }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1)


def load_model(path) -> GpModel:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format") != "aolcorr-hgp-v1":
        raise ModelError(f"unrecognized model format in {path}")
    n, d = payload["n_train"], payload["n_features"]

    def params_from(obj) -> GpKernelParams:
        return GpKernelParams(
            length_scales=np.asarray(obj["length_scales"], dtype=float),
            signal_variance=float(obj["signal_variance"]),
            noise_variance=float(obj["noise_variance"]),
        )

    x = _decode(payload["x_f64_le"], (n, d))
    y = _decode(payload["y_f64_le"], (n,))
    noise = None
    if payload["noise_f64_le"] is not None:
        noise = _decode(payload["noise_f64_le"], (n,))
    model = condition(x, y, params_from(payload["params"]), noise=noise)
    if payload["latent"] is not None:
        lat = condition(x, _decode(payload["latent"]["y_f64_le"], (n,)), params_from(payload["latent"]["params"]))
        model.latent = lat
    model.noise_rescale = float(payload["noise_rescale"])
    model.het_converged = bool(payload["het_converged"])
    return model
