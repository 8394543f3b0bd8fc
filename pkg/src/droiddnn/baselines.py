"""Classical classifiers used as comparison points: KNN, CART, random forest, linear SVM.

All of them take a float matrix of 0/1 features and integer labels
(0 = benign, 1 = malicious) and are deterministic given their seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BadK, EmptyTrainSet, ModelParseError, SingleClassData

_LEAF = -1


def _as_xy(X, y) -> tuple[np.ndarray, np.ndarray]:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.int64)
    if y.size == 0:
        raise EmptyTrainSet("training set is empty")
    if X.shape[0] != y.shape[0]:
        raise ValueError(f"{X.shape[0]} rows but {y.shape[0]} labels")
    return X, y


# --------------------------------------------------------------------------
# k nearest neighbours


@dataclass
class KnnModel:
    X: np.ndarray
    y: np.ndarray
    k: int = 5

    def predict(self, X) -> np.ndarray:
        return knn_predict(self.X, self.y, self.k, X)


def knn_train(X, y, k: int = 5) -> KnnModel:
    X, y = _as_xy(X, y)
    if k < 1 or k % 2 == 0 or k > len(y):
        raise BadK(f"k must be odd and in [1, {len(y)}], got {k}")
    return KnnModel(X, y, k)


def knn_predict(X_train, y_train, k: int, X):
    """Majority label of the *k* nearest training rows by squared Euclidean distance.

    On 0/1 vectors this is the Hamming distance. Equal distances are broken
    toward the lower training index. Returns an array for a 2-D query and a
    plain int for a single vector.
    """
    X_train, y_train = _as_xy(X_train, y_train)
    if k < 1 or k % 2 == 0 or k > len(y_train):
        raise BadK(f"k must be odd and in [1, {len(y_train)}], got {k}")
    Q = np.asarray(X, dtype=np.float64)
    single = Q.ndim == 1
    Q = np.atleast_2d(Q)
    votes = np.empty(Q.shape[0], dtype=np.int64)
    for start in range(0, Q.shape[0], 64):
        d = ((Q[start:start + 64, None, :] - X_train[None, :, :]) ** 2).sum(axis=2)
        nearest = np.argsort(d, axis=1, kind="stable")[:, :k]
        votes[start:start + 64] = y_train[nearest].sum(axis=1)
    labels = (2 * votes > k).astype(np.int64)
    return int(labels[0]) if single else labels


# --------------------------------------------------------------------------
# CART decision tree


@dataclass
class TreeModel:
    feature: np.ndarray  # -1 marks a leaf
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    label: np.ndarray

    @property
    def depth(self) -> int:
        def walk(i: int) -> int:
            if self.feature[i] == _LEAF:
                return 0
            return 1 + max(walk(self.left[i]), walk(self.right[i]))
        return walk(0)

    def predict(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        node = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        while True:
            feat = self.feature[node]
            inner = feat != _LEAF
            if not inner.any():
                return self.label[node].astype(np.int64)
            go_right = X[rows[inner], feat[inner]] > self.threshold[node[inner]]
            node[inner] = np.where(go_right, self.right[node[inner]], self.left[node[inner]])


def gini(y: np.ndarray) -> float:
    if y.size == 0:
        return 0.0
    p = y.mean()
    return 2.0 * p * (1.0 - p)


def split_scores(X: np.ndarray, y: np.ndarray, threshold: float = 0.5) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Weighted child Gini impurity per feature, plus the child sizes."""
    right = X > threshold
    n = y.size
    n_r = right.sum(axis=0).astype(np.float64)
    n_l = n - n_r
    pos_r = (right & (y[:, None] == 1)).sum(axis=0).astype(np.float64)
    pos_l = y.sum() - pos_r
    with np.errstate(invalid="ignore", divide="ignore"):
        p_r = np.where(n_r > 0, pos_r / n_r, 0.0)
        p_l = np.where(n_l > 0, pos_l / n_l, 0.0)
    weighted = (n_l * 2 * p_l * (1 - p_l) + n_r * 2 * p_r * (1 - p_r)) / n
    return weighted, n_l, n_r


def _majority(y: np.ndarray) -> int:
    # ties go to benign
    return int(2 * y.sum() > y.size)


def dtree_train(X, y, max_depth: int = 10, min_leaf: int = 2, seed: int = 0,
                max_features: int | None = None, rng: np.random.Generator | None = None) -> TreeModel:
    """Greedy CART on Gini impurity with splits at 0.5 (Boolean features).

    ``max_features`` draws that many candidate features per split (the forest
    uses this); otherwise every feature is considered and the seed is unused.
    Among equally good splits the lowest feature index wins.
    """
    X, y = _as_xy(X, y)
    d = X.shape[1]
    if rng is None:
        rng = np.random.default_rng(seed)
    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    label: list[int] = []

    def new_node(lab: int) -> int:
        feature.append(_LEAF)
        threshold.append(0.0)
        left.append(_LEAF)
        right.append(_LEAF)
        label.append(lab)
        return len(feature) - 1

    def grow(idx: np.ndarray, depth: int) -> int:
        ys = y[idx]
        node = new_node(_majority(ys))
        parent = gini(ys)
        if depth >= max_depth or parent == 0.0 or idx.size < 2 * min_leaf:
            return node
        if max_features is not None and max_features < d:
            cand = np.sort(rng.choice(d, size=max_features, replace=False))
        else:
            cand = np.arange(d)
        scores, n_l, n_r = split_scores(X[np.ix_(idx, cand)], ys)
        ok = (n_l >= min_leaf) & (n_r >= min_leaf) & (parent - scores > 1e-12)
        if not ok.any():
            return node
        best = int(np.argmin(np.where(ok, scores, np.inf)))
        f = int(cand[best])
        go_right = X[idx, f] > 0.5
        feature[node], threshold[node] = f, 0.5
        left[node] = grow(idx[~go_right], depth + 1)
        right[node] = grow(idx[go_right], depth + 1)
        return node

    grow(np.arange(len(y)), 0)
    return TreeModel(np.array(feature), np.array(threshold), np.array(left), np.array(right), np.array(label))


def dtree_predict(model: TreeModel, X) -> np.ndarray:
    return model.predict(X)


# --------------------------------------------------------------------------
# random forest


@dataclass
class ForestModel:
    trees: list[TreeModel]
    seed: int = 0

    def predict(self, X) -> np.ndarray:
        votes = np.sum([t.predict(X) for t in self.trees], axis=0)
        return (2 * votes > len(self.trees)).astype(np.int64)


def rforest_train(X, y, n_trees: int = 100, max_depth: int = 10, seed: int = 0, min_leaf: int = 1) -> ForestModel:
    """Bagged CARTs with sqrt(d) candidate features per split; tree i uses seed + i."""
    X, y = _as_xy(X, y)
    if n_trees < 1:
        raise ValueError("n_trees must be at least 1")
    n, d = X.shape
    max_features = max(1, int(math.sqrt(d)))
    trees = []
    for i in range(n_trees):
        rng = np.random.default_rng(seed + i)
        boot = rng.integers(0, n, size=n)
        trees.append(dtree_train(X[boot], y[boot], max_depth, min_leaf, max_features=max_features, rng=rng))
    return ForestModel(trees, seed)


def rforest_predict(model: ForestModel, X) -> np.ndarray:
    return model.predict(X)


# --------------------------------------------------------------------------
# linear SVM (Pegasos)


@dataclass
class SvmModel:
    w: np.ndarray
    b: float = 0.0
    lam: float = 1e-3
    history: list[float] = field(default_factory=list, compare=False)

    def decision(self, X) -> np.ndarray:
        return np.atleast_2d(np.asarray(X, dtype=np.float64)) @ self.w + self.b

    def predict(self, X) -> np.ndarray:
        return (self.decision(X) > 0).astype(np.int64)


def svm_objective(w: np.ndarray, b: float, X, y, lam: float) -> float:
    """lam/2 * |(w, b)|^2 + mean hinge loss, labels in {0, 1}."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    s = 2.0 * np.asarray(y, dtype=np.float64) - 1.0
    hinge = np.maximum(0.0, 1.0 - s * (X @ w + b))
    return float(0.5 * lam * (w @ w + b * b) + hinge.mean())


def svm_train(X, y, lam: float = 1e-3, epochs: int = 100, seed: int = 0) -> SvmModel:
    """Pegasos: stochastic subgradient steps of size 1/(lam*t) with projection.

    The bias is learned as the weight of a constant input and is regularized
    with the rest of the weights. ``history`` holds the objective after each epoch.
    """
    X, y = _as_xy(X, y)
    if len(np.unique(y)) < 2:
        raise SingleClassData("SVM training needs both classes")
    if lam <= 0:
        raise ValueError("lam must be positive")
    n, d = X.shape
    Xa = np.hstack([X, np.ones((n, 1))])
    s = 2.0 * y - 1.0
    w = np.zeros(d + 1)
    radius = 1.0 / math.sqrt(lam)
    rng = np.random.default_rng(seed)
    history = []
    t = 0
    for _ in range(epochs):
        for i in rng.permutation(n):
            t += 1
            eta = 1.0 / (lam * t)
            margin = s[i] * (Xa[i] @ w)
            w *= 1.0 - eta * lam
            if margin < 1.0:
                w += (eta * s[i]) * Xa[i]
            norm = math.sqrt(w @ w)
            if norm > radius:
                w *= radius / norm
        history.append(svm_objective(w[:-1], w[-1], X, y, lam))
    return SvmModel(w[:-1].copy(), float(w[-1]), lam, history)


def svm_predict(model: SvmModel, X) -> np.ndarray:
    return model.predict(X)


# --------------------------------------------------------------------------
# text persistence


def _row(values) -> str:
    return " ".join(repr(float(v)) for v in values)


def _tree_lines(t: TreeModel) -> list[str]:
    lines = [f"nodes {len(t.feature)}"]
    for f, th, l, r, lab in zip(t.feature, t.threshold, t.left, t.right, t.label):
        lines.append(f"{int(f)} {float(th)!r} {int(l)} {int(r)} {int(lab)}")
    return lines


def dumps(model) -> str:
    if isinstance(model, KnnModel):
        lines = ["KNN v1", f"{model.k} {model.X.shape[0]} {model.X.shape[1]}"]
        lines += [f"{int(lab)} {_row(row)}" for lab, row in zip(model.y, model.X)]
    elif isinstance(model, TreeModel):
        lines = ["DT v1", *_tree_lines(model)]
    elif isinstance(model, ForestModel):
        lines = ["RF v1", f"trees {len(model.trees)} seed {model.seed}"]
        for t in model.trees:
            lines += _tree_lines(t)
    elif isinstance(model, SvmModel):
        lines = ["SVM v1", f"{model.lam!r} {model.w.size}", _row(model.w), repr(float(model.b))]
    else:
        raise TypeError(f"not a baseline model: {type(model).__name__}")
    return "\n".join(lines) + "\n"


class _Lines:
    def __init__(self, text: str):
        self.lines = text.splitlines()
        self.pos = 0

    def next(self) -> list[str]:
        if self.pos >= len(self.lines):
            raise ModelParseError("unexpected end of model file")
        self.pos += 1
        return self.lines[self.pos - 1].split()


def _read_tree(src: _Lines) -> TreeModel:
    head = src.next()
    if len(head) != 2 or head[0] != "nodes":
        raise ModelParseError("expected 'nodes <n>'")
    n = int(head[1])
    rows = [src.next() for _ in range(n)]
    if any(len(r) != 5 for r in rows):
        raise ModelParseError("tree node lines need 5 fields")
    cols = list(zip(*rows)) if rows else [()] * 5
    t = TreeModel(np.array(cols[0], dtype=np.int64), np.array(cols[1], dtype=np.float64),
                  np.array(cols[2], dtype=np.int64), np.array(cols[3], dtype=np.int64),
                  np.array(cols[4], dtype=np.int64))
    inner = t.feature != _LEAF
    kids = np.concatenate([t.left[inner], t.right[inner]])
    if n == 0 or (kids.size and (kids.min() <= 0 or kids.max() >= n)) or len(set(kids.tolist())) != kids.size:
        raise ModelParseError("tree child indices out of bounds or shared")
    if (kids <= np.concatenate([np.flatnonzero(inner)] * 2)).any():
        raise ModelParseError("tree child must follow its parent")
    return t


def loads(text: str):
    src = _Lines(text)
    try:
        header = " ".join(src.next())
        if header == "KNN v1":
            k, n, d = (int(v) for v in src.next())
            rows = [src.next() for _ in range(n)]
            y = np.array([int(r[0]) for r in rows], dtype=np.int64)
            X = np.array([[float(v) for v in r[1:]] for r in rows], dtype=np.float64).reshape(n, d)
            return KnnModel(X, y, k)
        if header == "DT v1":
            return _read_tree(src)
        if header == "RF v1":
            parts = src.next()
            if len(parts) != 4 or parts[0] != "trees" or parts[2] != "seed":
                raise ModelParseError("expected 'trees <n> seed <s>'")
            trees = [_read_tree(src) for _ in range(int(parts[1]))]
            if not trees:
                raise ModelParseError("forest has no trees")
            return ForestModel(trees, int(parts[3]))
        if header == "SVM v1":
            lam_s, d_s = src.next()
            w = np.array([float(v) for v in src.next()], dtype=np.float64)
            if w.size != int(d_s):
                raise ModelParseError("SVM weight length mismatch")
            (b,) = src.next()
            return SvmModel(w, float(b), float(lam_s))
    except (ValueError, IndexError) as exc:
        raise ModelParseError(f"malformed model file: {exc}") from None
    raise ModelParseError(f"unknown model header {header!r}")
