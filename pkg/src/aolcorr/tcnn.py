"""Time-conditioned feed-forward network predicting a univariate Gaussian
over the AOL error.

Architecture: 31 -> 128 -> 128 -> 2, softplus hidden activations. The two
outputs are the mean (identity) and the log-variance, exponentiated so the
predicted variance is positive for any input at any stage of training.
Training minimizes the mean Gaussian negative log likelihood

    L = 1/2 [ (y - f)^2 / sigma^2 + ln sigma^2 ]

(the constant term dropped) with Adam. All arithmetic is plain numpy and
deterministic given the seed; backprop is hand-written and verified against
finite differences in the test suite.
"""

import base64
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ModelError

LAYER_SIZES = (31, 128, 128, 2)
ACTIVATION = "softplus"
_LOGVAR_CLIP = 30.0  # overflow guard on exp(); keeps variance finite and positive

_PARAM_ORDER = ("w1", "b1", "w2", "b2", "w3", "b3")


@dataclass(frozen=True)
class GaussianPrediction:
    """Scalar Gaussian over the AOL error: mean (rad) and variance (rad^2)
    once denormalized; normalized units straight out of a model.

    Model outputs are strictly positive in variance by construction (exp
    head here, posterior-plus-noise for the GP); zero is tolerated so known
    exact errors can be pushed through the corrector.
    """

    mean: float
    variance: float

    def __post_init__(self):
        if not (math.isfinite(self.mean) and math.isfinite(self.variance)):
            raise ModelError("prediction must be finite")
        if self.variance < 0.0:
            raise ModelError("predicted variance must be non-negative")


@dataclass
class TcnnModel:
    params: dict
    step: int = 0
    adam_m: dict = field(default_factory=dict)
    adam_v: dict = field(default_factory=dict)

    def n_parameters(self) -> int:
        return sum(p.size for p in self.params.values())


def init_model(seed: int) -> TcnnModel:
    """Fan-in-scaled uniform init; the log-variance output bias starts at
    ln(1) = 0 so a fresh model predicts unit variance in normalized space."""
    rng = np.random.default_rng(seed)
    params = {}
    sizes = LAYER_SIZES
    for k, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:]), start=1):
        bound = 1.0 / math.sqrt(n_in)
        params[f"w{k}"] = rng.uniform(-bound, bound, size=(n_in, n_out))
        params[f"b{k}"] = rng.uniform(-bound, bound, size=n_out)
    params["b3"] = np.zeros(2)
    model = TcnnModel(params=params)
    _reset_adam(model)
    return model


def _reset_adam(model: TcnnModel) -> None:
    model.step = 0
    model.adam_m = {k: np.zeros_like(v) for k, v in model.params.items()}
    model.adam_v = {k: np.zeros_like(v) for k, v in model.params.items()}


def _softplus(x):
    return np.where(x > 30.0, x, np.log1p(np.exp(np.minimum(x, 30.0))))


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0.0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def forward(model: TcnnModel, z: np.ndarray):
    """Batch forward pass on normalized features z (n, 31).

    Returns (mean (n,), variance (n,)); variance = exp(logvar) > 0 always.
    """
    z = np.atleast_2d(np.asarray(z, dtype=float))
    if z.shape[1] != LAYER_SIZES[0]:
        raise ModelError(f"expected {LAYER_SIZES[0]} features, got {z.shape[1]}")
    if not np.all(np.isfinite(z)):
        raise ModelError("non-finite feature input")
    p = model.params
    h1 = _softplus(z @ p["w1"] + p["b1"])
    h2 = _softplus(h1 @ p["w2"] + p["b2"])
    out = h2 @ p["w3"] + p["b3"]
    logvar = np.clip(out[:, 1], -_LOGVAR_CLIP, _LOGVAR_CLIP)
    return out[:, 0], np.exp(logvar)


def predict_one(model: TcnnModel, z: np.ndarray) -> GaussianPrediction:
    mean, var = forward(model, np.asarray(z)[None, :])
    return GaussianPrediction(mean=float(mean[0]), variance=float(var[0]))


def nll_loss(pred_mean, pred_var, target) -> float:
    """Mean Gaussian NLL (constant dropped): 1/2 [(y-f)^2/s^2 + ln s^2]."""
    resid = np.asarray(target, dtype=float) - np.asarray(pred_mean, dtype=float)
    var = np.asarray(pred_var, dtype=float)
    return float(np.mean(0.5 * (resid * resid / var + np.log(var))))


def backward(model: TcnnModel, z: np.ndarray, y: np.ndarray, beta: float = 0.0):
    """Gradients of the mean batch NLL for every parameter.

    beta > 0 applies the variance-weighted loss scaling (per-sample weight
    sigma^(2*beta), held out of the gradient) that counteracts the NLL's
    down-weighting of hard samples; beta = 0 is the plain NLL.

    Returns (grads dict, plain batch NLL).
    """
    z = np.atleast_2d(np.asarray(z, dtype=float))
    y = np.asarray(y, dtype=float)
    if z.shape[0] == 0:
        raise ModelError("empty batch")
    p = model.params
    a1 = z @ p["w1"] + p["b1"]
    h1 = _softplus(a1)
    a2 = h1 @ p["w2"] + p["b2"]
    h2 = _softplus(a2)
    out = h2 @ p["w3"] + p["b3"]
    f = out[:, 0]
    srow = np.clip(out[:, 1], -_LOGVAR_CLIP, _LOGVAR_CLIP)
    var = np.exp(srow)
    resid = y - f
    n = z.shape[0]

    loss = float(np.mean(0.5 * (resid * resid / var + srow)))

    weight = var**beta if beta != 0.0 else np.ones(n)

    d_out = np.empty_like(out)
    d_out[:, 0] = -(resid / var) * weight / n
    d_out[:, 1] = 0.5 * (1.0 - resid * resid / var) * weight / n
    # clip subgradient: no flow through a saturated log-variance
    d_out[:, 1] *= np.abs(out[:, 1]) < _LOGVAR_CLIP

    grads = {}
    grads["w3"] = h2.T @ d_out
    grads["b3"] = d_out.sum(axis=0)
    d_h2 = d_out @ p["w3"].T
    d_a2 = d_h2 * _sigmoid(a2)
    grads["w2"] = h1.T @ d_a2
    grads["b2"] = d_a2.sum(axis=0)
    d_h1 = d_a2 @ p["w2"].T
    d_a1 = d_h1 * _sigmoid(a1)
    grads["w1"] = z.T @ d_a1
    grads["b1"] = d_a1.sum(axis=0)
    return grads, loss


def adam_step(
    model: TcnnModel,
    grads: dict,
    lr: float = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> TcnnModel:
    """Standard Adam update with bias correction; mutates and returns model."""
    model.step += 1
    t = model.step
    for name, g in grads.items():
        m = model.adam_m[name]
        v = model.adam_v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        m_hat = m / (1.0 - beta1**t)
        v_hat = v / (1.0 - beta2**t)
        model.params[name] -= lr * m_hat / (np.sqrt(v_hat) + eps)
    return model


@dataclass
class TrainResult:
    train_loss: list
    val_loss: list
    best_epoch: int
    stopped_epoch: int


def train(
    model: TcnnModel,
    z_train: np.ndarray,
    y_train: np.ndarray,
    z_val: np.ndarray | None = None,
    y_val: np.ndarray | None = None,
    *,
    epochs: int = 200,
    batch_size: int = 1024,
    lr: float = 1e-3,
    seed: int = 0,
    patience: int = 10,
    beta: float = 0.0,
) -> TrainResult:
    """Mini-batch Adam training with optional early stopping on a validation
    NLL (patience in epochs). Deterministic given the seed. Divergence (NaN
    loss) raises with the offending step index."""
    rng = np.random.default_rng(seed)
    n = z_train.shape[0]
    if n == 0:
        raise ModelError("empty training set")
    has_val = z_val is not None and len(z_val) > 0
    best_val = math.inf
    best_params = None
    best_epoch = -1
    train_trace = []
    val_trace = []
    step_index = 0
    for epoch in range(epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        n_batches = 0
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            grads, loss = backward(model, z_train[idx], y_train[idx], beta=beta)
            step_index += 1
            if not math.isfinite(loss):
                raise ModelError(f"training diverged (non-finite loss) at step {step_index}")
            adam_step(model, grads, lr=lr)
            epoch_loss += loss
            n_batches += 1
        train_trace.append(epoch_loss / n_batches)
        if has_val:
            mean_v, var_v = forward(model, z_val)
            vloss = nll_loss(mean_v, var_v, y_val)
            val_trace.append(vloss)
            if vloss < best_val - 1e-12:
                best_val = vloss
                best_epoch = epoch
                best_params = {k: v.copy() for k, v in model.params.items()}
            elif epoch - best_epoch >= patience:
                break
    if best_params is not None:
        model.params = best_params
    return TrainResult(
        train_loss=train_trace,
        val_loss=val_trace,
        best_epoch=best_epoch if has_val else len(train_trace) - 1,
        stopped_epoch=len(train_trace) - 1,
    )


def save_model(model: TcnnModel, path, norm_stats_ref: str = "") -> None:
    """Persist as JSON: architecture header, normalization-stats reference,
    and the flat little-endian float64 parameter array (base64)."""
    flat = np.concatenate([model.params[k].ravel() for k in _PARAM_ORDER])
    payload = {
        "format": "aolcorr-tcnn-v1",
        "layers": list(LAYER_SIZES),
        "activation": ACTIVATION,
        "variance_head": "exp",
        "norm_stats": norm_stats_ref,
        "n_parameters": int(flat.size),
        "params_f64_le": base64.b64encode(flat.astype("<f8").tobytes()).decode(),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1)


def load_model(path) -> TcnnModel:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format") != "aolcorr-tcnn-v1":
        raise ModelError(f"unrecognized model format in {path}")
    if tuple(payload["layers"]) != LAYER_SIZES:
        raise ModelError(f"unsupported layer sizes {payload['layers']}")
    flat = np.frombuffer(base64.b64decode(payload["params_f64_le"]), dtype="<f8").astype(float)
    params = {}
    offset = 0
    sizes = LAYER_SIZES
    shapes = {}
    for k, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:]), start=1):
        shapes[f"w{k}"] = (n_in, n_out)
        shapes[f"b{k}"] = (n_out,)
    for name in _PARAM_ORDER:
        size = int(np.prod(shapes[name]))
        params[name] = flat[offset : offset + size].reshape(shapes[name])
        offset += size
    if offset != flat.size:
        raise ModelError("parameter array length mismatch")
    model = TcnnModel(params=params)
    _reset_adam(model)
    return model
