"""Fully connected ReLU network with a softmax output, trained by backprop.

Hidden layers compute ``h = relu(W h_prev + b)``; the last layer maps to class
probabilities with a softmax. Training minimizes mean squared error between
the softmax output and the one-hot target with plain mini-batch gradient
descent. Everything is float64 and seeded so that a run is reproducible bit
for bit.
"""

from __future__ import annotations

import copy
import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from . import LABELS
from .dataset import LabeledDataset, stratified_split
from .errors import BadDims, DimMismatch, InsufficientData, ModelParseError, NonFiniteLoss
from .metrics import ConfusionMatrix, Metrics, compute_metrics

DEFAULT_HIDDEN = (250, 200, 150, 100)
DEFAULT_DIMS = (40, *DEFAULT_HIDDEN, 2)

MODEL_HEADER = "MLP v1"


@dataclass
class LayerParams:
    weights: np.ndarray  # (out, in)
    biases: np.ndarray  # (out,)
    activation: str = "relu"


@dataclass
class MlpModel:
    layers: list[LayerParams]

    @property
    def dims(self) -> list[int]:
        return [self.layers[0].weights.shape[1]] + [l.weights.shape[0] for l in self.layers]

    def copy(self) -> MlpModel:
        return copy.deepcopy(self)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.05
    epochs: int = 300
    batch_size: int = 32
    seed: int = 0
    split_ratio: float = 0.8
    loss: str = "mse"

    def __post_init__(self) -> None:
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if not 0 < self.split_ratio < 1:
            raise ValueError("split_ratio must lie in (0, 1)")
        if self.loss not in ("mse", "xent"):
            raise ValueError(f"unknown loss {self.loss!r}")

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    train_acc: float
    valid_loss: float
    valid_acc: float


@dataclass
class TrainReport:
    epochs: list[EpochRecord] = field(default_factory=list)
    metrics: Metrics | None = None


def init_model(dims, seed: int) -> MlpModel:
    """Glorot-uniform weights, zero biases, ReLU hidden layers, softmax output."""
    dims = [int(d) for d in dims]
    if len(dims) < 2 or any(d < 1 for d in dims):
        raise BadDims(f"need at least two positive layer widths, got {dims}")
    rng = np.random.default_rng(seed)
    layers = []
    for j, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-limit, limit, size=(fan_out, fan_in))
        act = "softmax" if j == len(dims) - 2 else "relu"
        layers.append(LayerParams(w, np.zeros(fan_out), act))
    return MlpModel(layers)


def layer_param_counts(model: MlpModel) -> list[int]:
    return [l.weights.size + l.biases.size for l in model.layers]


def param_count(model: MlpModel) -> int:
    return sum(layer_param_counts(model))


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _check_width(model: MlpModel, x: np.ndarray) -> None:
    if x.shape[-1] != model.layers[0].weights.shape[1]:
        raise DimMismatch(f"input width {x.shape[-1]} != model input width {model.layers[0].weights.shape[1]}")


def _activations(model: MlpModel, X: np.ndarray) -> list[np.ndarray]:
    """Layer outputs for a batch; ``acts[0]`` is the input, ``acts[-1]`` the softmax."""
    acts = [X]
    a = X
    for layer in model.layers:
        z = a @ layer.weights.T + layer.biases
        a = softmax(z) if layer.activation == "softmax" else np.maximum(z, 0.0)
        acts.append(a)
    return acts


def forward(model: MlpModel, x) -> np.ndarray:
    """Class probabilities for one vector (or a batch of row vectors)."""
    x = np.asarray(x, dtype=np.float64)
    _check_width(model, x)
    return _activations(model, x)[-1]


def loss_mse(output, target) -> float:
    output = np.asarray(output, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if output.shape != target.shape:
        raise DimMismatch(f"output shape {output.shape} != target shape {target.shape}")
    return float(np.mean((output - target) ** 2))


def loss_xent(output, target) -> float:
    output = np.asarray(output, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if output.shape != target.shape:
        raise DimMismatch(f"output shape {output.shape} != target shape {target.shape}")
    p = np.clip(output, 1e-300, 1.0)
    return float(-np.sum(target * np.log(p)) / max(1, output.size // output.shape[-1]))


def batch_loss(model: MlpModel, X: np.ndarray, Y: np.ndarray, loss: str = "mse") -> float:
    out = forward(model, X)
    return loss_mse(out, Y) if loss == "mse" else loss_xent(out, Y)


def one_hot(labels, n_classes: int = 2) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros((labels.size, n_classes))
    out[np.arange(labels.size), labels] = 1.0
    return out


def gradients(model: MlpModel, X, Y, loss: str = "mse") -> list[tuple[np.ndarray, np.ndarray]]:
    """Exact gradient of the mean batch loss, as ``(dW, db)`` per layer.

    ReLU's derivative at zero is taken as 0.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
    if X.shape[0] == 0:
        raise DimMismatch("empty batch")
    _check_width(model, X)
    if Y.shape != (X.shape[0], model.layers[-1].weights.shape[0]):
        raise DimMismatch(f"target shape {Y.shape} does not match batch/output")
    acts = _activations(model, X)
    p = acts[-1]
    n = X.shape[0]
    if loss == "mse":
        g = 2.0 * (p - Y) / (n * p.shape[1])
        delta = p * (g - np.sum(g * p, axis=1, keepdims=True))
    else:
        delta = (p - Y) / n

    grads: list[tuple[np.ndarray, np.ndarray]] = []
    for j in range(len(model.layers) - 1, -1, -1):
        a_prev = acts[j]
        grads.append((delta.T @ a_prev, delta.sum(axis=0)))
        if j:
            delta = (delta @ model.layers[j].weights) * (a_prev > 0.0)
    grads.reverse()
    return grads


def _evaluate(model: MlpModel, X: np.ndarray, Y: np.ndarray, y: np.ndarray, loss: str) -> tuple[float, float]:
    if not len(y):
        return float("nan"), float("nan")
    out = forward(model, X)
    value = loss_mse(out, Y) if loss == "mse" else loss_xent(out, Y)
    return value, float(np.mean(np.argmax(out, axis=1) == y))


def fit(
    model: MlpModel,
    X_train: np.ndarray,
    y_train: np.ndarray,
    X_valid: np.ndarray,
    y_valid: np.ndarray,
    cfg: TrainConfig,
    on_epoch: Callable[[EpochRecord], None] | None = None,
) -> tuple[MlpModel, TrainReport]:
    """Mini-batch gradient descent on an already split dataset."""
    X_train = np.asarray(X_train, dtype=np.float64)
    X_valid = np.asarray(X_valid, dtype=np.float64)
    y_train = np.asarray(y_train, dtype=np.int64)
    y_valid = np.asarray(y_valid, dtype=np.int64)
    _check_width(model, X_train)
    model = model.copy()
    report = TrainReport()
    if cfg.epochs == 0:
        return model, report

    Y_train, Y_valid = one_hot(y_train), one_hot(y_valid)
    rng = np.random.default_rng([cfg.seed, 1])
    lr = cfg.learning_rate
    n = len(y_train)
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(1, cfg.epochs + 1):
            order = rng.permutation(n)
            for start in range(0, n, cfg.batch_size):
                idx = order[start:start + cfg.batch_size]
                for layer, (dw, db) in zip(model.layers, gradients(model, X_train[idx], Y_train[idx], cfg.loss)):
                    layer.weights -= lr * dw
                    layer.biases -= lr * db
            rec = EpochRecord(epoch, *_evaluate(model, X_train, Y_train, y_train, cfg.loss),
                              *_evaluate(model, X_valid, Y_valid, y_valid, cfg.loss))
            if not math.isfinite(rec.train_loss):
                raise NonFiniteLoss(epoch, rec.train_loss)
            report.epochs.append(rec)
            if on_epoch is not None:
                on_epoch(rec)
    if len(y_valid):
        cm = ConfusionMatrix.from_labels(y_valid, predict_labels(model, X_valid))
        report.metrics = compute_metrics(cm)
    return model, report


def train(model: MlpModel, data: LabeledDataset, cfg: TrainConfig, **kw) -> tuple[MlpModel, TrainReport]:
    """Stratified seeded split by ``cfg.split_ratio``, then :func:`fit`."""
    counts = np.bincount(data.labels, minlength=2)
    if data.labels.size == 0 or counts.min() < 2:
        raise InsufficientData(f"need at least 2 samples per class, have {counts.tolist()}")
    train_idx, valid_idx = stratified_split(data.labels, cfg.split_ratio, cfg.seed)
    return fit(model, data.X[train_idx], data.labels[train_idx],
               data.X[valid_idx], data.labels[valid_idx], cfg, **kw)


def predict_labels(model: MlpModel, X) -> np.ndarray:
    # argmax returns the first maximum, so ties go to benign (index 0)
    return np.argmax(forward(model, np.atleast_2d(X)), axis=1)


def predict(model: MlpModel, x) -> tuple[str, float]:
    p = forward(model, np.asarray(x, dtype=np.float64).ravel())
    idx = int(np.argmax(p))
    return LABELS[idx], float(p[idx])


# --------------------------------------------------------------------------
# text format


def _fmt(values) -> str:
    return " ".join(repr(float(v)) for v in values)


def save_model(model: MlpModel) -> bytes:
    lines = [MODEL_HEADER, " ".join(str(d) for d in model.dims)]
    for layer in model.layers:
        if not (np.all(np.isfinite(layer.weights)) and np.all(np.isfinite(layer.biases))):
            raise ValueError("refusing to save a model with non-finite parameters")
        lines.extend(_fmt(row) for row in layer.weights)
        lines.append(_fmt(layer.biases))
    lines.append(" ".join(l.activation for l in model.layers))
    return ("\n".join(lines) + "\n").encode("utf-8")


def _floats(line: str, n: int, where: str) -> list[float]:
    try:
        vals = [float(t) for t in line.split()]
    except ValueError:
        raise ModelParseError(f"{where}: non-numeric value") from None
    if len(vals) != n:
        raise ModelParseError(f"{where}: expected {n} values, found {len(vals)}")
    if not all(math.isfinite(v) for v in vals):
        raise ModelParseError(f"{where}: non-finite value")
    return vals


def load_model(data: bytes) -> MlpModel:
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError:
        raise ModelParseError("model file is not UTF-8") from None
    lines = text.splitlines()
    if not lines or lines[0].strip() != MODEL_HEADER:
        raise ModelParseError(f"missing {MODEL_HEADER!r} header")
    if len(lines) < 2:
        raise ModelParseError("missing dims line")
    try:
        dims = [int(t) for t in lines[1].split()]
    except ValueError:
        raise ModelParseError("dims line must hold integers") from None
    if len(dims) < 2 or any(d < 1 for d in dims):
        raise ModelParseError(f"bad dims {dims}")
    expected = 2 + sum(d + 1 for d in dims[1:]) + 1
    if len(lines) != expected:
        raise ModelParseError(f"expected {expected} lines for dims {dims}, found {len(lines)}")
    acts = lines[-1].split()
    if len(acts) != len(dims) - 1 or any(a not in ("relu", "softmax") for a in acts):
        raise ModelParseError(f"bad activation line {lines[-1]!r}")
    layers = []
    pos = 2
    for j, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
        rows = [_floats(lines[pos + r], fan_in, f"layer {j} row {r}") for r in range(fan_out)]
        pos += fan_out
        bias = _floats(lines[pos], fan_out, f"layer {j} bias")
        pos += 1
        layers.append(LayerParams(np.array(rows, dtype=np.float64).reshape(fan_out, fan_in),
                                  np.array(bias, dtype=np.float64), acts[j]))
    return MlpModel(layers)


def default_model(input_width: int = DEFAULT_DIMS[0], seed: int = 0) -> MlpModel:
    """The five-layer topology used throughout, for a given input width."""
    return init_model([input_width, *DEFAULT_HIDDEN, 2], seed)

