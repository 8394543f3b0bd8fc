"""Feature universe and the Boolean embedding of an application.

The schema is an ordered list of descriptors split into five contiguous spans:
fs1 permissions (single and pairwise), fs2 intent actions, fs3 API
categories, fs4 invalid certificate, fs5 APK payload in assets.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from datetime import datetime
from importlib import resources
from typing import Iterable, Sequence

import numpy as np

from .apk import ApkArchive, read_entry, scan_assets
from .axml import ManifestInfo, parse_axml, permission_pairs
from .cert import check_signature
from .dex import API_CATEGORIES, DEFAULT_RULES, ApiCategoryRule, detect_api_categories, scan_all_dex
from .errors import DroidDnnError, EmptySubset, ExtractionError, SchemaParseError

log = logging.getLogger(__name__)

FEATURE_SETS = ("fs1", "fs2", "fs3", "fs4", "fs5")

KIND_TO_SET = {
    "perm": "fs1",
    "permpair": "fs1",
    "intent": "fs2",
    "api": "fs3",
    "cert_invalid": "fs4",
    "apk_in_assets": "fs5",
}


@dataclass(frozen=True)
class FeatureDescriptor:
    kind: str
    key: str | frozenset[str] | None = None

    @property
    def feature_set(self) -> str:
        return KIND_TO_SET[self.kind]

    def label(self) -> str:
        if self.kind == "permpair":
            return "+".join(sorted(self.key))  # type: ignore[arg-type]
        if self.key is None:
            return self.kind
        return str(self.key)


@dataclass(frozen=True)
class FeatureSchema:
    descriptors: tuple[FeatureDescriptor, ...]
    set_spans: dict[str, range]

    def __len__(self) -> int:
        return len(self.descriptors)

    def columns(self, subset: Iterable[str]) -> list[int]:
        """Column indices for *subset*, concatenated in schema order."""
        chosen = _check_subset(subset)
        cols: list[int] = []
        for fs in FEATURE_SETS:
            if fs in chosen:
                cols.extend(self.set_spans.get(fs, range(0)))
        return cols

    def width(self, subset: Iterable[str]) -> int:
        return len(self.columns(subset))


@dataclass(frozen=True)
class AppFeatures:
    permissions: frozenset[str] = frozenset()
    permission_pairs: frozenset[frozenset[str]] = frozenset()
    intent_actions: frozenset[str] = frozenset()
    api_categories: frozenset[str] = frozenset()
    cert_invalid: bool = False
    apk_in_assets: bool = False
    warnings: tuple[str, ...] = field(default=(), compare=False)

    @classmethod
    def build(cls, permissions: Iterable[str] = (), intent_actions: Iterable[str] = (),
              api_categories: Iterable[str] = (), cert_invalid: bool = False,
              apk_in_assets: bool = False, warnings: Sequence[str] = ()) -> AppFeatures:
        perms = frozenset(permissions)
        pairs = permission_pairs(ManifestInfo("", perms, frozenset()))
        return cls(perms, pairs, frozenset(intent_actions), frozenset(api_categories),
                   bool(cert_invalid), bool(apk_in_assets), tuple(warnings))


@dataclass(frozen=True)
class FeatureVector:
    bits: tuple[int, ...]
    app_id: str = ""

    def __len__(self) -> int:
        return len(self.bits)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.bits, dtype=np.float64)


# --------------------------------------------------------------------------
# schema


def _parse_line(line: str, lineno: int) -> FeatureDescriptor:
    kind, _, arg = line.partition(" ")
    arg = arg.strip()
    if kind in ("perm", "intent", "api"):
        if not arg or " " in arg:
            raise SchemaParseError(f"line {lineno}: {kind} needs exactly one name")
        if kind == "api" and arg not in API_CATEGORIES:
            raise SchemaParseError(f"line {lineno}: unknown API category {arg!r}")
        return FeatureDescriptor(kind, arg)
    if kind == "permpair":
        names = arg.split("+")
        if len(names) != 2 or not all(names) or names[0] == names[1] or " " in arg:
            raise SchemaParseError(f"line {lineno}: malformed permission pair {arg!r}")
        return FeatureDescriptor(kind, frozenset(names))
    if kind == "cert" and arg == "invalid":
        return FeatureDescriptor("cert_invalid")
    if kind == "asset" and arg == "apk_in_assets":
        return FeatureDescriptor("apk_in_assets")
    raise SchemaParseError(f"line {lineno}: unknown descriptor {line!r}")


def load_schema(text: str) -> FeatureSchema:
    descriptors: list[FeatureDescriptor] = []
    seen: set[FeatureDescriptor] = set()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        d = _parse_line(line, lineno)
        if d in seen:
            raise SchemaParseError(f"line {lineno}: duplicate descriptor {line!r}")
        seen.add(d)
        descriptors.append(d)
    if not descriptors:
        raise SchemaParseError("schema defines no features")

    spans: dict[str, range] = {}
    order = [d.feature_set for d in descriptors]
    for fs in FEATURE_SETS:
        idx = [i for i, s in enumerate(order) if s == fs]
        if idx:
            spans[fs] = range(idx[0], idx[-1] + 1)
            if len(idx) != idx[-1] - idx[0] + 1:
                raise SchemaParseError(f"features of {fs} are not contiguous")
    if [fs for fs in FEATURE_SETS if fs in spans] != list(dict.fromkeys(order)):
        raise SchemaParseError("feature sets must appear in fs1..fs5 order")
    return FeatureSchema(tuple(descriptors), spans)


def default_schema_text() -> str:
    return resources.files("droiddnn").joinpath("data/default_schema.txt").read_text("utf-8")


def default_schema() -> FeatureSchema:
    return load_schema(default_schema_text())


# --------------------------------------------------------------------------
# extraction and embedding


def extract(
    archive: ApkArchive,
    now: datetime,
    *,
    lenient: bool = False,
    rules: Sequence[ApiCategoryRule] = DEFAULT_RULES,
    check_digests: bool = True,
    check_window: bool = True,
) -> AppFeatures:
    """Run every detector over *archive*.

    A failing manifest or DEX stage raises :class:`ExtractionError`, or with
    ``lenient`` degrades that stage to empty sets and records a warning.
    """
    warnings: list[str] = list(archive.warnings)

    def degrade(stage: str, exc: DroidDnnError) -> None:
        if not lenient:
            raise ExtractionError(stage, exc) from exc
        msg = f"{stage} stage degraded to empty: {exc}"
        log.warning(msg)
        warnings.append(msg)

    manifest = ManifestInfo("", frozenset(), frozenset())
    try:
        manifest = parse_axml(read_entry(archive, "AndroidManifest.xml"))
    except DroidDnnError as exc:
        degrade("manifest", exc)

    apis: frozenset[str] = frozenset()
    try:
        apis = detect_api_categories(scan_all_dex(archive), rules)
    except DroidDnnError as exc:
        degrade("dex", exc)

    sig = check_signature(archive, now, check_digests=check_digests, check_window=check_window)
    assets = scan_assets(archive)
    warnings.extend(assets.warnings)
    return AppFeatures(
        permissions=manifest.permissions,
        permission_pairs=permission_pairs(manifest),
        intent_actions=manifest.intent_actions,
        api_categories=apis,
        cert_invalid=sig.verdict_invalid,
        apk_in_assets=assets.found,
        warnings=tuple(warnings),
    )


def matches(descriptor: FeatureDescriptor, features: AppFeatures) -> bool:
    """Whether *features* has the property *descriptor* names."""
    kind, key = descriptor.kind, descriptor.key
    if kind == "perm":
        return key in features.permissions
    if kind == "permpair":
        return key <= features.permissions  # type: ignore[operator]
    if kind == "intent":
        return key in features.intent_actions
    if kind == "api":
        return key in features.api_categories
    if kind == "cert_invalid":
        return features.cert_invalid
    if kind == "apk_in_assets":
        return features.apk_in_assets
    raise ValueError(f"unknown descriptor kind {kind!r}")


def vectorize(features: AppFeatures, schema: FeatureSchema, app_id: str = "") -> FeatureVector:
    return FeatureVector(tuple(int(matches(d, features)) for d in schema.descriptors), app_id)


def _check_subset(subset: Iterable[str]) -> frozenset[str]:
    chosen = frozenset(subset)
    if not chosen:
        raise EmptySubset("feature-set subset is empty")
    unknown = chosen - set(FEATURE_SETS)
    if unknown:
        raise ValueError(f"unknown feature sets: {sorted(unknown)}")
    return chosen


def project(vector: FeatureVector, schema: FeatureSchema, subset: Iterable[str]) -> FeatureVector:
    if len(vector) != len(schema):
        raise ValueError(f"vector width {len(vector)} != schema width {len(schema)}")
    cols = schema.columns(subset)
    return FeatureVector(tuple(vector.bits[c] for c in cols), vector.app_id)


def parse_subset(text: str) -> tuple[str, ...]:
    """``"all"`` or ``"fs3+fs1+fs4"`` to a tuple of feature-set ids."""
    text = text.strip()
    if text == "all":
        return FEATURE_SETS
    parts = tuple(p.strip() for p in text.split("+") if p.strip())
    _check_subset(parts)
    return parts


def fired_features(vector: FeatureVector, schema: FeatureSchema) -> dict[str, list[str]]:
    """Labels of the set bits, grouped by feature set."""
    out: dict[str, list[str]] = {fs: [] for fs in FEATURE_SETS if fs in schema.set_spans}
    for bit, d in zip(vector.bits, schema.descriptors):
        if bit:
            out[d.feature_set].append(d.label())
    return out
