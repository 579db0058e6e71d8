"""Single-layer LSTM regressor with a linear head, trained by BPTT.

Everything is hand-rolled numpy: gate forward passes, backpropagation through
time, global-norm gradient clipping, and plain SGD over chronological
mini-batches. Inputs are min-max scaled to [0, 1] with statistics fitted on
the training split only; the target (next-day price) shares the price
column's scaling so predictions invert back to dollars.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import date, timedelta
from pathlib import Path

import numpy as np

from .errors import DataInsufficientError, ValidationError
from .indicators import FeatureMatrix

LSTM_SCHEMA = "lstm-model/1"

PARAM_NAMES = (
    "W_f", "U_f", "b_f",
    "W_i", "U_i", "b_i",
    "W_c", "U_c", "b_c",
    "W_o", "U_o", "b_o",
    "V", "c",
)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    window: int = 14
    hidden_size: int = 64
    learning_rate: float = 1e-3
    batch_size: int = 32
    clip_norm: float = 1.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ValidationError(f"epochs must be >= 1, got {self.epochs}")
        if self.window < 1:
            raise ValidationError(f"window must be >= 1, got {self.window}")
        if self.hidden_size < 1:
            raise ValidationError(f"hidden_size must be >= 1, got {self.hidden_size}")
        if self.learning_rate <= 0:
            raise ValidationError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ValidationError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.clip_norm <= 0:
            raise ValidationError(f"clip_norm must be > 0, got {self.clip_norm}")


@dataclass
class LstmWeights:
    """Gate weights (forget/input/cell/output) plus the linear head.

    W_* are (hidden, input), U_* are (hidden, hidden), b_* are (hidden,);
    V is (hidden,) and c is a (1,) array so all parameters update uniformly.
    """

    W_f: np.ndarray
    U_f: np.ndarray
    b_f: np.ndarray
    W_i: np.ndarray
    U_i: np.ndarray
    b_i: np.ndarray
    W_c: np.ndarray
    U_c: np.ndarray
    b_c: np.ndarray
    W_o: np.ndarray
    U_o: np.ndarray
    b_o: np.ndarray
    V: np.ndarray
    c: np.ndarray

    @property
    def hidden_size(self) -> int:
        return self.W_f.shape[0]

    @property
    def input_dim(self) -> int:
        return self.W_f.shape[1]

    def items(self):
        for name in PARAM_NAMES:
            yield name, getattr(self, name)


def init_weights(input_dim: int, hidden_size: int, seed: int) -> LstmWeights:
    """Uniform init on [-1/sqrt(h), 1/sqrt(h)], drawn in a fixed parameter order."""
    if input_dim < 1 or hidden_size < 1:
        raise ValidationError("input_dim and hidden_size must be >= 1")
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0xC311)))
    k = 1.0 / np.sqrt(hidden_size)
    shapes = {
        **{f"W_{g}": (hidden_size, input_dim) for g in "fico"},
        **{f"U_{g}": (hidden_size, hidden_size) for g in "fico"},
        **{f"b_{g}": (hidden_size,) for g in "fico"},
        "V": (hidden_size,),
        "c": (1,),
    }
    values = {name: rng.uniform(-k, k, size=shapes[name]) for name in PARAM_NAMES}
    return LstmWeights(**values)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-z))


def cell_forward(
    x_t: np.ndarray,
    h_prev: np.ndarray,
    c_prev: np.ndarray,
    w: LstmWeights,
) -> tuple[np.ndarray, np.ndarray, tuple]:
    """One LSTM step over a batch: rows of x_t are samples.

    Returns (h_t, c_t, cache); the cache carries everything the backward
    pass needs.
    """
    x_t = np.asarray(x_t, dtype=float)
    if x_t.ndim != 2 or x_t.shape[1] != w.input_dim:
        raise ValidationError(
            f"x_t must be (batch, {w.input_dim}), got {x_t.shape}"
        )
    if h_prev.shape != (x_t.shape[0], w.hidden_size) or c_prev.shape != h_prev.shape:
        raise ValidationError("state shapes do not match the batch and hidden size")
    if not np.all(np.isfinite(x_t)):
        raise ValidationError("non-finite input to cell_forward")

    f = _sigmoid(x_t @ w.W_f.T + h_prev @ w.U_f.T + w.b_f)
    i = _sigmoid(x_t @ w.W_i.T + h_prev @ w.U_i.T + w.b_i)
    c_hat = np.tanh(x_t @ w.W_c.T + h_prev @ w.U_c.T + w.b_c)
    c_t = f * c_prev + i * c_hat
    o = _sigmoid(x_t @ w.W_o.T + h_prev @ w.U_o.T + w.b_o)
    tanh_c = np.tanh(c_t)
    h_t = o * tanh_c
    cache = (x_t, h_prev, c_prev, f, i, c_hat, o, tanh_c)
    return h_t, c_t, cache


def _run_batch(windows: np.ndarray, w: LstmWeights) -> tuple[np.ndarray, np.ndarray, list]:
    """Forward a (m, T, d) batch of windows; returns (preds, h_T, caches)."""
    m, T, _ = windows.shape
    h = np.zeros((m, w.hidden_size))
    c = np.zeros((m, w.hidden_size))
    caches = []
    for t in range(T):
        h, c, cache = cell_forward(windows[:, t, :], h, c, w)
        caches.append(cache)
    preds = h @ w.V + w.c[0]
    return preds, h, caches


def forward_window(window: np.ndarray, w: LstmWeights) -> float:
    """Scalar prediction for one complete (T, d) window of scaled inputs."""
    arr = np.asarray(window, dtype=float)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] != w.input_dim:
        raise ValidationError(
            f"window must be (steps, {w.input_dim}) with steps >= 1, got {arr.shape}"
        )
    preds, _, _ = _run_batch(arr[np.newaxis, :, :], w)
    return float(preds[0])


def bptt_gradients(
    windows: np.ndarray,
    targets: np.ndarray,
    w: LstmWeights,
) -> tuple[dict[str, np.ndarray], float]:
    """Analytic gradients of the batch mean squared error, plus the loss.

    windows is (m, T, d), targets is (m,). Gradients come back keyed by
    parameter name, unclipped.
    """
    windows = np.asarray(windows, dtype=float)
    targets = np.asarray(targets, dtype=float)
    if windows.ndim != 3:
        raise ValidationError(f"windows must be (batch, steps, features), got {windows.shape}")
    if targets.shape != (windows.shape[0],):
        raise ValidationError(
            f"targets shape {targets.shape} does not match batch {windows.shape[0]}"
        )

    preds, h_last, caches = _run_batch(windows, w)
    err = preds - targets
    if not np.all(np.isfinite(err)):
        bad = int(np.argmax(~np.isfinite(err)))
        raise ValidationError(f"non-finite loss at window {bad}")
    m = len(targets)
    loss = float(np.mean(err**2))

    grads = {name: np.zeros_like(arr) for name, arr in w.items()}
    dpred = (2.0 / m) * err  # (m,)
    grads["V"] = dpred @ h_last
    grads["c"] = np.array([float(np.sum(dpred))])

    dh = np.outer(dpred, w.V)  # (m, hidden)
    dc = np.zeros_like(dh)
    for x_t, h_prev, c_prev, f, i, c_hat, o, tanh_c in reversed(caches):
        do = dh * tanh_c
        dc = dc + dh * o * (1.0 - tanh_c**2)
        dpre_f = (dc * c_prev) * f * (1.0 - f)
        dpre_i = (dc * c_hat) * i * (1.0 - i)
        dpre_c = (dc * i) * (1.0 - c_hat**2)
        dpre_o = do * o * (1.0 - o)

        grads["W_f"] += dpre_f.T @ x_t
        grads["U_f"] += dpre_f.T @ h_prev
        grads["b_f"] += dpre_f.sum(axis=0)
        grads["W_i"] += dpre_i.T @ x_t
        grads["U_i"] += dpre_i.T @ h_prev
        grads["b_i"] += dpre_i.sum(axis=0)
        grads["W_c"] += dpre_c.T @ x_t
        grads["U_c"] += dpre_c.T @ h_prev
        grads["b_c"] += dpre_c.sum(axis=0)
        grads["W_o"] += dpre_o.T @ x_t
        grads["U_o"] += dpre_o.T @ h_prev
        grads["b_o"] += dpre_o.sum(axis=0)

        dh = dpre_f @ w.U_f + dpre_i @ w.U_i + dpre_c @ w.U_c + dpre_o @ w.U_o
        dc = dc * f
    return grads, loss


def clip_gradients(grads: dict[str, np.ndarray], max_norm: float) -> tuple[dict[str, np.ndarray], float]:
    """Scale all gradients by max_norm/norm when the global norm exceeds it."""
    if max_norm <= 0:
        raise ValidationError(f"max_norm must be > 0, got {max_norm}")
    total = 0.0
    for g in grads.values():
        total += float(np.sum(g * g))
    norm = float(np.sqrt(total))
    if norm > max_norm:
        scale = max_norm / norm
        grads = {name: g * scale for name, g in grads.items()}
    return grads, norm


@dataclass
class MinMaxScaler:
    """Column-wise min-max map to [0, 1], fitted on the training split only.

    The target shares the scaling of `target_column` (the same-day price), so
    scaled predictions invert back to the original units. Constant columns
    map to 0.
    """

    mins: np.ndarray
    maxs: np.ndarray
    target_column: int = -1

    @classmethod
    def fit(cls, values: np.ndarray, target_column: int = -1) -> "MinMaxScaler":
        values = np.asarray(values, dtype=float)
        if values.ndim != 2 or values.shape[0] < 1:
            raise ValidationError("scaler needs a non-empty (n, d) matrix")
        return cls(values.min(axis=0), values.max(axis=0), target_column)

    def transform(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        span = self.maxs - self.mins
        safe = np.where(span > 0, span, 1.0)
        scaled = (values - self.mins) / safe
        return np.where(span > 0, scaled, 0.0)

    def transform_target(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        lo = self.mins[self.target_column]
        span = self.maxs[self.target_column] - lo
        if span <= 0:
            return np.zeros_like(y)
        return (y - lo) / span

    def inverse_target(self, scaled: np.ndarray | float) -> np.ndarray | float:
        lo = self.mins[self.target_column]
        span = self.maxs[self.target_column] - lo
        return scaled * span + lo


@dataclass
class LstmModel:
    weights: LstmWeights
    scaler: MinMaxScaler
    config: TrainConfig
    input_dim: int
    loss_trace: list[float] = field(default_factory=list)


def _apply_sgd(w: LstmWeights, grads: dict[str, np.ndarray], lr: float) -> None:
    for name, arr in w.items():
        arr -= lr * grads[name]


def fit_lstm(features: FeatureMatrix, config: TrainConfig) -> LstmModel:
    """Train on sliding windows of the feature matrix (chronological batches).

    Window i covers rows [i, i+T) and its target is row i+T-1's next-day
    price. The loss trace records the mean squared training loss of each
    epoch (one entry per epoch).
    """
    inputs = features.input_array()
    targets = features.target_array()
    n = len(targets)
    T = config.window
    if n < T:
        raise DataInsufficientError(f"need at least {T} feature rows, got {n}")

    scaler = MinMaxScaler.fit(inputs)
    scaled = scaler.transform(inputs)
    scaled_targets = scaler.transform_target(targets)

    n_windows = n - T + 1
    windows = np.stack([scaled[i : i + T] for i in range(n_windows)])
    window_targets = scaled_targets[T - 1 :]

    w = init_weights(inputs.shape[1], config.hidden_size, config.seed)
    trace: list[float] = []
    for _ in range(config.epochs):
        sse = 0.0
        for start in range(0, n_windows, config.batch_size):
            batch = windows[start : start + config.batch_size]
            batch_targets = window_targets[start : start + config.batch_size]
            grads, loss = bptt_gradients(batch, batch_targets, w)
            grads, _ = clip_gradients(grads, config.clip_norm)
            _apply_sgd(w, grads, config.learning_rate)
            sse += loss * len(batch_targets)
        trace.append(sse / n_windows)
    return LstmModel(
        weights=w,
        scaler=scaler,
        config=config,
        input_dim=inputs.shape[1],
        loss_trace=trace,
    )


def predict_window(model: LstmModel, window_rows: np.ndarray) -> float:
    """Next-day price (in original units) from one (T, d) window of raw inputs."""
    arr = np.asarray(window_rows, dtype=float)
    expected = (model.config.window, model.input_dim)
    if arr.shape != expected:
        raise ValidationError(f"incomplete window: expected {expected}, got {arr.shape}")
    scaled_pred = forward_window(model.scaler.transform(arr), model.weights)
    return float(model.scaler.inverse_target(scaled_pred))


def predict_series(model: LstmModel, features: FeatureMatrix) -> dict[date, float]:
    """Predictions keyed by the day they refer to (the day after each window).

    The first T-1 rows seed windows only, so the earliest prediction targets
    the day after row T-1; days before that have no prediction.
    """
    T = model.config.window
    inputs = features.input_array()
    out: dict[date, float] = {}
    for i in range(len(features.rows) - T + 1):
        day = features.rows[i + T - 1].day + timedelta(days=1)
        out[day] = predict_window(model, inputs[i : i + T])
    return out


def save_lstm(model: LstmModel, path: str | Path) -> None:
    """Write the model as versioned JSON: config, scaler bounds, matrices row-major."""
    doc = {
        "schema": LSTM_SCHEMA,
        "input_dim": model.input_dim,
        "config": {
            "epochs": model.config.epochs,
            "window": model.config.window,
            "hidden_size": model.config.hidden_size,
            "learning_rate": model.config.learning_rate,
            "batch_size": model.config.batch_size,
            "clip_norm": model.config.clip_norm,
            "seed": model.config.seed,
        },
        "scaler": {
            "mins": model.scaler.mins.tolist(),
            "maxs": model.scaler.maxs.tolist(),
            "target_column": model.scaler.target_column,
        },
        "weights": {name: arr.tolist() for name, arr in model.weights.items()},
        "loss_trace": model.loss_trace,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def load_lstm(path: str | Path) -> LstmModel:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("schema") != LSTM_SCHEMA:
        raise ValidationError(f"unsupported model schema {doc.get('schema')!r}")
    config = TrainConfig(**doc["config"])
    weights = LstmWeights(**{name: np.array(doc["weights"][name], dtype=float) for name in PARAM_NAMES})
    scaler = MinMaxScaler(
        mins=np.array(doc["scaler"]["mins"], dtype=float),
        maxs=np.array(doc["scaler"]["maxs"], dtype=float),
        target_column=doc["scaler"]["target_column"],
    )
    return LstmModel(
        weights=weights,
        scaler=scaler,
        config=config,
        input_dim=doc["input_dim"],
        loss_trace=list(doc["loss_trace"]),
    )
