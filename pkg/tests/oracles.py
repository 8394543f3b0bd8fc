"""Independent reference computations used by unit and acceptance tests."""

from __future__ import annotations

from fractions import Fraction

import numpy as np

from droiddnn.dnn import batch_loss, gradients, init_model


def reference_metrics(tp: int, tn: int, fp: int, fn: int) -> tuple[float, float, float, float]:
    """Accuracy, precision, recall, F1 in exact rational arithmetic; 0 where undefined."""
    total = tp + tn + fp + fn
    acc = Fraction(tp + tn, total)
    prec = Fraction(tp, tp + fp) if tp + fp else Fraction(0)
    rec = Fraction(tp, tp + fn) if tp + fn else Fraction(0)
    f1 = 2 * prec * rec / (prec + rec) if prec + rec else Fraction(0)
    return float(acc), float(prec), float(rec), float(f1)


def reference_metrics_array(cms: np.ndarray) -> np.ndarray:
    """Vectorized metrics for rows of (tp, tn, fp, fn); F1 via 2tp / (2tp + fp + fn)."""
    tp, tn, fp, fn = (cms[:, i].astype(np.float64) for i in range(4))

    def safe(num, den):
        return np.divide(num, den, out=np.zeros_like(num), where=den > 0)

    return np.stack([(tp + tn) / (tp + tn + fp + fn), safe(tp, tp + fp), safe(tp, tp + fn),
                     safe(2 * tp, 2 * tp + fp + fn)], axis=1)


def confusion_matrices(max_total: int):
    for total in range(1, max_total + 1):
        for tp in range(total + 1):
            for tn in range(total - tp + 1):
                for fp in range(total - tp - tn + 1):
                    yield tp, tn, fp, total - tp - tn - fp


def numeric_gradients(model, X, Y, loss: str, eps: float = 1e-5):
    """Central finite differences of the mean batch loss for every parameter."""
    out = []
    for layer in model.layers:
        grads = []
        for param in (layer.weights, layer.biases):
            g = np.zeros_like(param)
            flat, gflat = param.reshape(-1), g.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + eps
                up = batch_loss(model, X, Y, loss)
                flat[i] = orig - eps
                down = batch_loss(model, X, Y, loss)
                flat[i] = orig
                gflat[i] = (up - down) / (2 * eps)
            grads.append(g)
        out.append(tuple(grads))
    return out


def gradient_check(seed: int, loss: str = "mse", rtol: float = 1e-4, atol: float = 1e-6) -> tuple[bool, float, list[int]]:
    """Random topology (at most 4 layers, widths at most 10) checked coordinate-wise.

    A coordinate passes when it is within *atol* absolutely or *rtol* relatively.
    Returns (ok, worst absolute error, dims).
    """
    rng = np.random.default_rng(seed)
    n_layers = int(rng.integers(1, 5))
    dims = [int(d) for d in rng.integers(1, 11, size=n_layers)] + [2]
    model = init_model(dims, seed)
    for layer in model.layers:  # nonzero biases exercise every term
        layer.biases[:] = rng.normal(0, 0.1, layer.biases.shape)
    batch = int(rng.integers(1, 6))
    X = rng.normal(size=(batch, dims[0]))
    Y = np.eye(2)[rng.integers(0, 2, size=batch)]
    analytic = gradients(model, X, Y, loss)
    numeric = numeric_gradients(model, X, Y, loss)
    ok, worst = True, 0.0
    for (aw, ab), (nw, nb) in zip(analytic, numeric):
        for a, n in ((aw, nw), (ab, nb)):
            err = np.abs(a - n)
            worst = max(worst, float(err.max(initial=0.0)))
            rel = err / np.maximum(np.abs(n), 1e-300)
            ok &= bool(np.all((err <= atol) | (rel <= rtol)))
    return ok, worst, dims
