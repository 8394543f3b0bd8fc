"""Experiment drivers: feature-set ablation, classifier comparison, reports."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import baselines
from .dataset import LabeledDataset, split, stratified_split
from .dnn import EpochRecord, MlpModel, TrainConfig, fit, default_model, predict_labels
from .errors import DroidDnnError, InsufficientData
from .features import FeatureSchema, parse_subset
from .metrics import ConfusionMatrix, Metrics, compute_metrics

log = logging.getLogger(__name__)

__all__ = [
    "ABLATION_SUBSETS", "AblationRow", "BaselineParams", "CompareRow", "ablation", "compare",
    "compute_metrics", "cross_validate", "split",
]

# all; APIs; permissions; intents; then the three mixed rows
ABLATION_SUBSETS = (
    "all",
    "fs3",
    "fs1",
    "fs2",
    "fs3+fs1+fs4+fs5",
    "fs3+fs2+fs4+fs5",
    "fs1+fs4+fs5",
)

ModelFactory = Callable[[int], MlpModel]


def default_factory(seed: int) -> ModelFactory:
    return lambda width: default_model(width, seed)


@dataclass(frozen=True)
class AblationRow:
    subset: str
    width: int
    accuracy: float | None
    metrics: Metrics | None = None
    error: str | None = None


def ablation(
    data: LabeledDataset,
    schema: FeatureSchema,
    model_factory: ModelFactory | None,
    cfg: TrainConfig,
    subsets: Sequence[str] = ABLATION_SUBSETS,
) -> list[AblationRow]:
    """Retrain a fresh network per feature-set subset on one shared split."""
    if data.width != len(schema):
        raise ValueError(f"data width {data.width} != schema width {len(schema)}")
    factory = model_factory or default_factory(cfg.seed)
    tr, va = stratified_split(data.labels, cfg.split_ratio, cfg.seed)
    rows = []
    for subset in subsets:
        cols: list[int] = []
        try:
            cols = schema.columns(parse_subset(subset))
            if not cols:
                raise InsufficientData(f"subset {subset!r} selects no columns in this schema")
            X = data.X[:, cols]
            _, report = fit(factory(len(cols)), X[tr], data.labels[tr], X[va], data.labels[va], cfg)
            m = report.metrics
            rows.append(AblationRow(subset, len(cols), m.accuracy if m else None, m))
        except (DroidDnnError, ArithmeticError, ValueError) as exc:
            log.error("ablation row %s failed: %s", subset, exc)
            rows.append(AblationRow(subset, len(cols), None, None, str(exc)))
    return rows


@dataclass(frozen=True)
class BaselineParams:
    k: int = 5
    tree_depth: int = 10
    min_leaf: int = 2
    n_trees: int = 100
    forest_depth: int = 10
    svm_lambda: float = 1e-3
    svm_epochs: int = 100


@dataclass(frozen=True)
class CompareRow:
    classifier: str
    metrics: Metrics | None
    error: str | None = None


def compare(
    data: LabeledDataset,
    cfg: TrainConfig,
    params: BaselineParams = BaselineParams(),
    model_factory: ModelFactory | None = None,
) -> list[CompareRow]:
    """DNN and the four baselines on the same train/validation folds."""
    factory = model_factory or default_factory(cfg.seed)
    tr, va = stratified_split(data.labels, cfg.split_ratio, cfg.seed)
    Xtr, ytr, Xva, yva = data.X[tr], data.labels[tr], data.X[va], data.labels[va]

    def run_dnn():
        model, _ = fit(factory(data.width), Xtr, ytr, Xva, yva, cfg)
        return predict_labels(model, Xva)

    runners = [
        ("DNN", run_dnn),
        ("DT", lambda: baselines.dtree_train(Xtr, ytr, params.tree_depth, params.min_leaf, cfg.seed).predict(Xva)),
        ("KNN", lambda: baselines.knn_predict(Xtr, ytr, params.k, Xva)),
        ("RF", lambda: baselines.rforest_train(Xtr, ytr, params.n_trees, params.forest_depth, cfg.seed).predict(Xva)),
        ("SVM", lambda: baselines.svm_train(Xtr, ytr, params.svm_lambda, params.svm_epochs, cfg.seed).predict(Xva)),
    ]
    rows = []
    for name, run in runners:
        try:
            pred = run()
            rows.append(CompareRow(name, compute_metrics(ConfusionMatrix.from_labels(yva, pred))))
        except (DroidDnnError, ArithmeticError, ValueError) as exc:
            log.error("%s failed: %s", name, exc)
            rows.append(CompareRow(name, None, str(exc)))
    return rows


def kfold_indices(labels, folds: int, seed: int) -> list[np.ndarray]:
    """Stratified fold assignment; returns the validation indices of each fold."""
    labels = np.asarray(labels, dtype=np.int64)
    if folds < 2:
        raise ValueError("need at least 2 folds")
    counts = np.bincount(labels, minlength=2)
    if counts.min() < folds:
        raise InsufficientData(f"each class needs at least {folds} samples, have {counts.tolist()}")
    rng = np.random.default_rng(seed)
    out: list[list[int]] = [[] for _ in range(folds)]
    for cls in (0, 1):
        members = rng.permutation(np.flatnonzero(labels == cls))
        for i, chunk in enumerate(np.array_split(members, folds)):
            out[i].extend(chunk.tolist())
    return [np.sort(np.array(f, dtype=np.int64)) for f in out]


def cross_validate(data: LabeledDataset, cfg: TrainConfig, folds: int = 5,
                   model_factory: ModelFactory | None = None) -> list[Metrics]:
    factory = model_factory or default_factory(cfg.seed)
    results = []
    everything = np.arange(len(data))
    for va in kfold_indices(data.labels, folds, cfg.seed):
        tr = np.setdiff1d(everything, va)
        _, report = fit(factory(data.width), data.X[tr], data.labels[tr], data.X[va], data.labels[va], cfg)
        results.append(report.metrics)
    return results


# --------------------------------------------------------------------------
# reports


def _csv(rows: Sequence[Sequence]) -> str:
    out = io.StringIO()
    csv.writer(out, lineterminator="\n").writerows(rows)
    return out.getvalue()


def _num(v: float | None) -> str:
    return "" if v is None else repr(float(v))


def metrics_csv(m: Metrics) -> str:
    return _csv([("metric", "value"), *((k, _num(v)) for k, v in m.as_dict().items())])


def curves_csv(epochs: Sequence[EpochRecord]) -> str:
    rows = [("epoch", "train_loss", "valid_loss", "train_acc", "valid_acc")]
    rows += [(e.epoch, _num(e.train_loss), _num(e.valid_loss), _num(e.train_acc), _num(e.valid_acc)) for e in epochs]
    return _csv(rows)


def ablation_csv(rows: Sequence[AblationRow]) -> str:
    return _csv([("subset", "width", "accuracy", "error"),
                 *((r.subset, r.width, _num(r.accuracy), r.error or "") for r in rows)])


def compare_csv(rows: Sequence[CompareRow]) -> str:
    out = [("classifier", "accuracy", "precision", "recall", "f1", "error")]
    for r in rows:
        vals = r.metrics.as_dict().values() if r.metrics else [None] * 4
        out.append((r.classifier, *(_num(v) for v in vals), r.error or ""))
    return _csv(out)


def format_table(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    """Aligned plain-text table; floats shown with four decimals."""
    cells = [[f"{c:.4f}" if isinstance(c, float) else ("-" if c is None else str(c)) for c in row] for row in rows]
    widths = [max(len(str(h)), *(len(r[i]) for r in cells)) for i, h in enumerate(header)]
    lines = ["  ".join(str(h).ljust(w) for h, w in zip(header, widths)).rstrip()]
    lines.append("  ".join("-" * w for w in widths))
    lines += ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in cells]
    return "\n".join(lines)
