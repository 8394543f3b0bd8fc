"""Synthetic labeled feature vectors for running the experiments without a real corpus.

Benign rows set every bit independently with probability ``noise``. For the
malicious rows, each feature set K is "active" in a random subset of exactly
``round(signal_weights[K] * n_malicious)`` rows: an active set has all of its
bits on, an inactive one is drawn like benign noise. Each malicious bit in
span K is therefore on with probability ``w_K * (1 - noise) + noise``, and the
per-set weights directly control how separable the classes are from that set
alone. Fixing the active count keeps empirical frequencies close to that
probability even though the bits of one set move together.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataset import LabeledDataset
from .features import FEATURE_SETS, FeatureSchema

DEFAULT_WEIGHTS = {"fs1": 0.7, "fs2": 0.55, "fs3": 0.9, "fs4": 0.8, "fs5": 0.6}
DEFAULT_NOISE = 0.1


@dataclass(frozen=True)
class SyntheticConfig:
    n_benign: int = 600
    n_malicious: int = 600
    seed: int = 7
    signal_weights: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_WEIGHTS))
    noise: float = DEFAULT_NOISE

    def __post_init__(self) -> None:
        if self.n_benign < 1 or self.n_malicious < 1:
            raise ValueError("sample counts must be at least 1")
        if not 0 <= self.noise < 0.5:
            raise ValueError("noise must lie in [0, 0.5)")
        for fs, w in self.signal_weights.items():
            if fs not in FEATURE_SETS:
                raise ValueError(f"unknown feature set {fs!r}")
            if not 0 <= w <= 1:
                raise ValueError(f"weight for {fs} must lie in [0, 1]")

    def bit_probability(self, feature_set: str) -> float:
        """Marginal probability that a malicious bit in *feature_set* is on."""
        w = self.signal_weights.get(feature_set, 0.0)
        return w * (1 - self.noise) + self.noise


def synthesize(cfg: SyntheticConfig, schema: FeatureSchema) -> LabeledDataset:
    rng = np.random.default_rng(cfg.seed)
    d = len(schema)
    benign = rng.random((cfg.n_benign, d)) < cfg.noise
    malicious = rng.random((cfg.n_malicious, d)) < cfg.noise
    for fs in FEATURE_SETS:
        order = rng.permutation(cfg.n_malicious)  # drawn for every set so spans stay independent of the schema
        span = schema.set_spans.get(fs)
        if span is None:
            continue
        n_active = int(round(cfg.signal_weights.get(fs, 0.0) * cfg.n_malicious))
        malicious[order[:n_active], span.start:span.stop] = True
    X = np.vstack([benign, malicious]).astype(np.float64)
    y = np.concatenate([np.zeros(cfg.n_benign, np.int64), np.ones(cfg.n_malicious, np.int64)])
    ids = [f"benign-{i:05d}" for i in range(cfg.n_benign)] + [f"malicious-{i:05d}" for i in range(cfg.n_malicious)]
    return LabeledDataset(tuple(ids), X, y)
