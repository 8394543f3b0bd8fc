"""Labeled feature matrices, stratified splitting and the CSV file formats."""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InsufficientData, ManifestParseError


@dataclass(frozen=True)
class LabeledDataset:
    ids: tuple[str, ...]
    X: np.ndarray  # (n, d) of 0.0/1.0
    labels: np.ndarray  # (n,) of 0 = benign, 1 = malicious

    def __post_init__(self) -> None:
        X = np.asarray(self.X, dtype=np.float64)
        if X.ndim == 1:
            X = X.reshape(len(self.ids), -1) if len(self.ids) else X.reshape(0, 0)
        y = np.asarray(self.labels, dtype=np.int64)
        if not (len(self.ids) == X.shape[0] == y.shape[0]):
            raise ValueError(f"length mismatch: {len(self.ids)} ids, {X.shape[0]} rows, {y.shape[0]} labels")
        if y.size and not np.isin(y, (0, 1)).all():
            raise ValueError("labels must be 0 (benign) or 1 (malicious)")
        object.__setattr__(self, "ids", tuple(self.ids))
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "labels", y)

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def width(self) -> int:
        return self.X.shape[1]

    def subset(self, idx) -> LabeledDataset:
        idx = np.asarray(idx, dtype=np.int64)
        return LabeledDataset(tuple(self.ids[i] for i in idx), self.X[idx], self.labels[idx])

    def columns(self, cols) -> LabeledDataset:
        return LabeledDataset(self.ids, self.X[:, list(cols)], self.labels)


def stratified_split(labels, ratio: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Seeded per-class partition; returns sorted (train, valid) index arrays."""
    if not 0 < ratio < 1:
        raise ValueError("ratio must lie in (0, 1)")
    labels = np.asarray(labels, dtype=np.int64)
    counts = np.bincount(labels, minlength=2)
    if labels.size == 0 or counts.min() < 2:
        raise InsufficientData(f"need at least 2 samples per class, have {counts.tolist()}")
    rng = np.random.default_rng(seed)
    train, valid = [], []
    for cls in (0, 1):
        members = rng.permutation(np.flatnonzero(labels == cls))
        n_train = min(max(int(round(ratio * members.size)), 1), members.size - 1)
        train.append(members[:n_train])
        valid.append(members[n_train:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(valid))


def split(data: LabeledDataset, ratio: float, seed: int) -> tuple[LabeledDataset, LabeledDataset]:
    tr, va = stratified_split(data.labels, ratio, seed)
    return data.subset(tr), data.subset(va)


# --------------------------------------------------------------------------
# feature CSV: id,label,f0,...,f{n-1}


def format_feature_csv(data: LabeledDataset) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["id", "label", *(f"f{i}" for i in range(data.width))])
    for app_id, label, row in zip(data.ids, data.labels, data.X):
        w.writerow([app_id, int(label), *(int(v) for v in row)])
    return out.getvalue()


def write_feature_csv(path: str | os.PathLike, data: LabeledDataset) -> None:
    Path(path).write_text(format_feature_csv(data), encoding="utf-8")


def parse_feature_csv(text: str) -> LabeledDataset:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise ValueError("feature CSV is empty")
    header = rows[0]
    if header[:2] != ["id", "label"] or header[2:] != [f"f{i}" for i in range(len(header) - 2)]:
        raise ValueError(f"bad feature CSV header {header[:4]}...")
    width = len(header) - 2
    ids, labels, bits = [], [], []
    for lineno, row in enumerate(rows[1:], 2):
        if not row:
            continue
        if len(row) != width + 2:
            raise ValueError(f"line {lineno}: expected {width + 2} fields, found {len(row)}")
        if row[1] not in ("0", "1") or any(v not in ("0", "1") for v in row[2:]):
            raise ValueError(f"line {lineno}: label and bits must be 0 or 1")
        ids.append(row[0])
        labels.append(int(row[1]))
        bits.append([float(v) for v in row[2:]])
    X = np.array(bits, dtype=np.float64).reshape(len(ids), width)
    return LabeledDataset(tuple(ids), X, np.array(labels, dtype=np.int64))


def read_feature_csv(path: str | os.PathLike) -> LabeledDataset:
    return parse_feature_csv(Path(path).read_text(encoding="utf-8"))


# --------------------------------------------------------------------------
# dataset manifest: apk_path,label


@dataclass(frozen=True)
class DatasetManifest:
    rows: tuple[tuple[str, int], ...]
    source: str = ""


def read_manifest(path: str | os.PathLike) -> DatasetManifest:
    """Read an ``apk_path,label`` CSV; relative paths resolve against its directory."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ManifestParseError(f"cannot read manifest {path}: {exc}") from None
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or [c.strip() for c in rows[0]] != ["apk_path", "label"]:
        raise ManifestParseError(f"{path}: header must be 'apk_path,label'")
    out = []
    for lineno, row in enumerate(rows[1:], 2):
        if not row or not any(c.strip() for c in row):
            continue
        if len(row) != 2 or not row[0].strip() or row[1].strip() not in ("0", "1"):
            raise ManifestParseError(f"{path}:{lineno}: expected '<apk_path>,<0|1>'")
        apk = Path(row[0].strip())
        if not apk.is_absolute():
            apk = path.parent / apk
        out.append((str(apk), int(row[1])))
    return DatasetManifest(tuple(out), str(path))
