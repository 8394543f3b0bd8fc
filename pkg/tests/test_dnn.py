import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from droiddnn import BENIGN, MALICIOUS
from droiddnn.dataset import LabeledDataset
from droiddnn.dnn import (
    DEFAULT_DIMS,
    LayerParams,
    MlpModel,
    TrainConfig,
    default_model,
    fit,
    forward,
    gradients,
    init_model,
    layer_param_counts,
    load_model,
    loss_mse,
    loss_xent,
    param_count,
    predict,
    predict_labels,
    save_model,
    softmax,
    train,
)
from droiddnn.errors import BadDims, DimMismatch, InsufficientData, ModelParseError, NonFiniteLoss
from oracles import gradient_check


def test_default_topology_counts():
    model = default_model()
    assert model.dims == list(DEFAULT_DIMS) == [40, 250, 200, 150, 100, 2]
    assert layer_param_counts(model) == [10250, 50200, 30150, 15100, 202]
    assert param_count(model) == 105902
    assert [l.activation for l in model.layers] == ["relu"] * 4 + ["softmax"]


@pytest.mark.parametrize("seed", range(10))
@pytest.mark.parametrize("loss", ["mse", "xent"])
def test_gradients_match_finite_differences(seed, loss):
    ok, worst, dims = gradient_check(seed, loss)
    assert ok, (dims, worst)


def _hand_model():
    # 2 -> 2 (relu) -> 2 (softmax), weights chosen so every quantity is easy to follow
    l1 = LayerParams(np.array([[1.0, -1.0], [0.5, 2.0]]), np.array([0.0, -1.0]), "relu")
    l2 = LayerParams(np.array([[1.0, 0.0], [0.0, 1.0]]), np.array([0.0, 0.0]), "softmax")
    return MlpModel([l1, l2])


def test_hand_computed_forward_and_gradient():
    model = _hand_model()
    x = np.array([[2.0, 1.0]])
    # hidden: relu([1, 2]) = [1, 2]; output softmax([1, 2])
    p2 = math.exp(2) / (math.exp(1) + math.exp(2))
    p = forward(model, x)[0]
    assert p == pytest.approx([1 - p2, p2], abs=1e-15)
    y = np.array([[1.0, 0.0]])
    assert loss_mse(forward(model, x), y) == pytest.approx(((1 - p2 - 1) ** 2 + p2 ** 2) / 2)
    # dL/dp = (p - y); softmax Jacobian maps it to dz = p*(g - g.p)
    g = np.array([-p2, p2])
    dz = p * (g - g @ p)
    grads = gradients(model, x, y, "mse")
    assert grads[1][0] == pytest.approx(np.outer(dz, [1.0, 2.0]))
    assert grads[1][1] == pytest.approx(dz)
    dh = model.layers[1].weights.T @ dz
    assert grads[0][0] == pytest.approx(np.outer(dh, x[0]))
    # relu inactive unit gets no gradient
    x2 = np.array([[0.0, 1.0]])  # hidden pre-activations [-1, 1]
    assert np.all(gradients(model, x2, y, "mse")[0][0][0] == 0)


@given(st.lists(st.floats(-50, 50), min_size=2, max_size=6))
def test_softmax_is_distribution(z):
    p = softmax(np.array(z))
    assert p.sum() == pytest.approx(1.0) and np.all(p >= 0)


def test_losses():
    p = np.array([[0.25, 0.75]])
    y = np.array([[0.0, 1.0]])
    assert loss_mse(p, y) == pytest.approx(0.0625)
    assert loss_xent(p, y) == pytest.approx(-math.log(0.75))


def _toy(n=80, seed=0):
    rng = np.random.default_rng(seed)
    y = np.repeat([0, 1], n // 2)
    X = (rng.random((n, 6)) < np.where(y[:, None] == 1, 0.8, 0.2)).astype(float)
    return LabeledDataset(tuple(f"a{i}" for i in range(n)), X, y)


def test_training_learns_and_is_deterministic():
    data = _toy()
    cfg = TrainConfig(epochs=60, seed=3, learning_rate=0.5)
    m1, r1 = train(init_model([6, 8, 2], 3), data, cfg)
    m2, r2 = train(init_model([6, 8, 2], 3), data, cfg)
    assert save_model(m1) == save_model(m2)
    assert r1.epochs == r2.epochs and len(r1.epochs) == 60
    assert r1.epochs[-1].train_loss < r1.epochs[0].train_loss
    assert r1.metrics.accuracy >= 0.8


def test_fit_leaves_input_model_untouched():
    data = _toy()
    model = init_model([6, 4, 2], 0)
    before = save_model(model)
    fit(model, data.X, data.labels, data.X, data.labels, TrainConfig(epochs=2))
    assert save_model(model) == before


def test_non_finite_loss_raises():
    data = _toy()
    model = init_model([6, 16, 16, 2], 0)
    with pytest.raises(NonFiniteLoss):
        train(model, data, TrainConfig(epochs=5, learning_rate=1e308))


def test_insufficient_data():
    data = LabeledDataset(("a", "b", "c"), np.zeros((3, 6)), np.array([0, 0, 1]))
    with pytest.raises(InsufficientData):
        train(init_model([6, 2], 0), data, TrainConfig())


def test_dims_checks():
    with pytest.raises(BadDims):
        init_model([4], 0)
    with pytest.raises(BadDims):
        init_model([4, 0, 2], 0)
    with pytest.raises(DimMismatch):
        forward(init_model([4, 2], 0), np.zeros(5))


def test_predict_ties_go_benign():
    model = MlpModel([LayerParams(np.zeros((2, 3)), np.zeros(2), "softmax")])
    assert predict(model, [1, 0, 1]) == (BENIGN, 0.5)
    assert predict_labels(model, np.ones((4, 3))).tolist() == [0] * 4
    model.layers[0].biases[:] = [0.0, 1.0]
    label, prob = predict(model, [0, 0, 0])
    assert label == MALICIOUS and prob > 0.5


@settings(max_examples=20, deadline=None)
@given(st.lists(st.integers(1, 6), min_size=2, max_size=4), st.integers(0, 1000))
def test_model_file_roundtrip(dims, seed):
    model = init_model(dims, seed)
    for l in model.layers:
        l.biases[:] = np.random.default_rng(seed).normal(size=l.biases.shape)
    text = save_model(model)
    back = load_model(text)
    assert back.dims == model.dims
    for a, b in zip(model.layers, back.layers):
        assert np.array_equal(a.weights, b.weights) and np.array_equal(a.biases, b.biases)
        assert a.activation == b.activation
    assert save_model(back) == text


@pytest.mark.parametrize("blob", [b"", b"MLP v2\n", b"MLP v1\n2 x\n", b"MLP v1\n2 2\n1 2\n", b"\xff\xfe",
                                  b"MLP v1\n1 1\n0.5\n0.0\nsigmoid\n", b"MLP v1\n1 1\nnan\n0.0\nsoftmax\n"])
def test_model_parse_errors(blob):
    with pytest.raises(ModelParseError):
        load_model(blob)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10 ** 6), st.floats(-100, 100))
def test_constant_output_shift_keeps_labels(seed, shift):
    model = init_model([5, 4, 2], seed)
    X = np.random.default_rng(seed).integers(0, 2, size=(16, 5)).astype(float)
    before = predict_labels(model, X)
    model.layers[-1].biases += shift
    assert np.array_equal(predict_labels(model, X), before)
