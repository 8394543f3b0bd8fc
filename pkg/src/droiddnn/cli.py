"""Command-line interface: scan, extract, synth, train, eval, ablate, compare."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import MALICIOUS, __version__
from .apk import open_apk
from .dataset import LabeledDataset, format_feature_csv, read_feature_csv, read_manifest
from .dnn import TrainConfig, load_model, default_model, predict, predict_labels, save_model, train
from .errors import DroidDnnError, ExtractionError
from .evaluation import (
    ABLATION_SUBSETS,
    BaselineParams,
    ablation,
    ablation_csv,
    compare,
    compare_csv,
    cross_validate,
    curves_csv,
    format_table,
    metrics_csv,
)
from .features import (
    AppFeatures,
    FeatureSchema,
    default_schema,
    extract,
    fired_features,
    load_schema,
    vectorize,
)
from .metrics import ConfusionMatrix, compute_metrics
from .synth import DEFAULT_NOISE, DEFAULT_WEIGHTS, SyntheticConfig, synthesize

log = logging.getLogger("droiddnn")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_INTERNAL = 2
EXIT_MALICIOUS = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors share the parse-error exit code
        self.print_usage(sys.stderr)
        raise UsageError(message)


def parse_now(text: str | None) -> datetime:
    if text is None:
        return datetime.now(timezone.utc).replace(microsecond=0)
    try:
        now = datetime.fromisoformat(text.replace("Z", "+00:00"))
    except ValueError:
        raise UsageError(f"--now: not an ISO-8601 timestamp: {text!r}") from None
    return now if now.tzinfo else now.replace(tzinfo=timezone.utc)


def _schema(args) -> FeatureSchema:
    if args.schema is None:
        return default_schema()
    return load_schema(Path(args.schema).read_text(encoding="utf-8"))


def _train_config(args) -> TrainConfig:
    return TrainConfig(learning_rate=args.lr, epochs=args.epochs, batch_size=args.batch,
                       seed=args.seed, split_ratio=args.split, loss=args.loss)


def _echo_config(command: str, **items) -> None:
    print(f"config {command}: " + json.dumps(items, sort_keys=True, default=str))


def _write(path: str | None, text: str) -> None:
    if path:
        Path(path).write_text(text, encoding="utf-8")


def _check_width(data: LabeledDataset, schema: FeatureSchema) -> None:
    if data.width != len(schema):
        raise UsageError(f"feature CSV has {data.width} columns but the schema defines {len(schema)}")


# --------------------------------------------------------------------------
# commands


def cmd_scan(args) -> int:
    now = parse_now(args.now)
    schema = _schema(args)
    model = load_model(Path(args.model).read_bytes())
    if model.dims[0] != len(schema):
        raise UsageError(f"model input width {model.dims[0]} != schema width {len(schema)}")
    _echo_config("scan", apk=args.apk, model=args.model, schema=args.schema or "default", now=now.isoformat(),
                 lenient=args.lenient, digest_check=not args.no_digest_check, window_check=not args.no_window_check)
    archive = open_apk(Path(args.apk).read_bytes())
    feats = extract(archive, now, lenient=args.lenient,
                    check_digests=not args.no_digest_check, check_window=not args.no_window_check)
    vec = vectorize(feats, schema, Path(args.apk).name)
    for fs, labels in fired_features(vec, schema).items():
        print(f"{fs}: " + (", ".join(labels) if labels else "-"))
    for w in feats.warnings:
        print(f"warning: {w}")
    label, prob = predict(model, vec.as_array())
    print(f"label: {label}")
    print(f"probability: {prob:.6f}")
    return EXIT_MALICIOUS if label == MALICIOUS else EXIT_OK


def _extract_one(job) -> tuple[str, tuple[int, ...], list[str]]:
    apk_path, schema_text, now, lenient, checks = job
    schema = load_schema(schema_text)
    try:
        archive = open_apk(Path(apk_path).read_bytes())
        feats = extract(archive, now, lenient=lenient, check_digests=checks[0], check_window=checks[1])
    except (DroidDnnError, OSError) as exc:
        if not lenient:
            stage = exc.stage if isinstance(exc, ExtractionError) else "container"
            raise ExtractionError(stage, RuntimeError(f"{apk_path}: {exc}")) from None
        feats = AppFeatures(warnings=(f"unreadable APK, emitting empty features: {exc}",))
    return apk_path, vectorize(feats, schema).bits, list(feats.warnings)


def cmd_extract(args) -> int:
    now = parse_now(args.now)
    schema_text = Path(args.schema).read_text(encoding="utf-8") if args.schema else None
    schema = load_schema(schema_text) if schema_text else default_schema()
    if schema_text is None:
        from .features import default_schema_text
        schema_text = default_schema_text()
    manifest = read_manifest(args.manifest)
    _echo_config("extract", manifest=args.manifest, schema=args.schema or "default", now=now.isoformat(),
                 lenient=args.lenient, jobs=args.jobs, out=args.out)
    checks = (not args.no_digest_check, not args.no_window_check)
    jobs = [(path, schema_text, now, args.lenient, checks) for path, _ in manifest.rows]
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            results = list(pool.map(_extract_one, jobs))  # map keeps manifest order
    else:
        results = [_extract_one(j) for j in jobs]
    ids, bits = [], []
    for (path, vec, warnings), (_, label) in zip(results, manifest.rows):
        for w in warnings:
            print(f"warning: {Path(path).name}: {w}", file=sys.stderr)
        ids.append(Path(path).name)
        bits.append(vec)
    X = np.array(bits, dtype=np.float64).reshape(len(ids), len(schema))
    data = LabeledDataset(tuple(ids), X, np.array([l for _, l in manifest.rows], dtype=np.int64))
    text = format_feature_csv(data)
    if args.out:
        _write(args.out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _parse_weights(text: str | None) -> dict[str, float]:
    weights = dict(DEFAULT_WEIGHTS)
    if not text:
        return weights
    for item in text.split(","):
        key, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"--weights: expected fsK=value, got {item!r}")
        try:
            weights[key.strip()] = float(value)
        except ValueError:
            raise UsageError(f"--weights: bad number in {item!r}") from None
    return weights


def cmd_synth(args) -> int:
    schema = _schema(args)
    try:
        cfg = SyntheticConfig(args.benign, args.malicious, args.seed, _parse_weights(args.weights), args.noise)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    _echo_config("synth", benign=cfg.n_benign, malicious=cfg.n_malicious, seed=cfg.seed,
                 weights=cfg.signal_weights, noise=cfg.noise, schema=args.schema or "default", out=args.out)
    text = format_feature_csv(synthesize(cfg, schema))
    if args.out:
        _write(args.out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _train_config(args)
    data = read_feature_csv(args.features)
    _echo_config("train", features=args.features, out=args.out, cv=args.cv, **cfg.as_dict())
    if args.cv:
        results = cross_validate(data, cfg, args.cv)
        rows = [(f"fold{i + 1}", *m.as_dict().values()) for i, m in enumerate(results)]
        mean = np.mean([list(m.as_dict().values()) for m in results], axis=0)
        rows.append(("mean", *(float(v) for v in mean)))
        print(format_table(("fold", "accuracy", "precision", "recall", "f1"), rows))
        return EXIT_OK
    model, report = train(default_model(data.width, cfg.seed), data, cfg)
    _write(args.out, save_model(model).decode("utf-8"))
    _write(args.curves, curves_csv(report.epochs))
    if report.metrics is not None:
        _write(args.metrics, metrics_csv(report.metrics))
        print(format_table(("metric", "value"), list(report.metrics.as_dict().items())))
    return EXIT_OK


def cmd_eval(args) -> int:
    data = read_feature_csv(args.features)
    model = load_model(Path(args.model).read_bytes())
    _echo_config("eval", features=args.features, model=args.model, out=args.out)
    if model.dims[0] != data.width:
        raise UsageError(f"model input width {model.dims[0]} != feature width {data.width}")
    m = compute_metrics(ConfusionMatrix.from_labels(data.labels, predict_labels(model, data.X)))
    _write(args.out, metrics_csv(m))
    print(format_table(("metric", "value"), list(m.as_dict().items())))
    return EXIT_OK


def cmd_ablate(args) -> int:
    cfg = _train_config(args)
    schema = _schema(args)
    data = read_feature_csv(args.features)
    _check_width(data, schema)
    subsets = [s.strip() for s in args.subsets.split(",") if s.strip()]
    _echo_config("ablate", features=args.features, schema=args.schema or "default", subsets=subsets,
                 out=args.out, **cfg.as_dict())
    rows = ablation(data, schema, None, cfg, subsets)
    _write(args.out, ablation_csv(rows))
    print(format_table(("subset", "width", "accuracy"), [(r.subset, r.width, r.accuracy) for r in rows]))
    return EXIT_OK


def cmd_compare(args) -> int:
    cfg = _train_config(args)
    params = BaselineParams(args.k, args.tree_depth, args.min_leaf, args.trees, args.forest_depth,
                            args.svm_lambda, args.svm_epochs)
    data = read_feature_csv(args.features)
    _echo_config("compare", features=args.features, out=args.out, **cfg.as_dict(), **params.__dict__)
    rows = compare(data, cfg, params)
    _write(args.out, compare_csv(rows))
    table = [(r.classifier, *(r.metrics.as_dict().values() if r.metrics else [None] * 4)) for r in rows]
    print(format_table(("classifier", "accuracy", "precision", "recall", "f1"), table))
    return EXIT_OK


# --------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="droiddnn", description=__doc__)
    p.add_argument("--version", action="version", version=f"droiddnn {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    schema = _Parser(add_help=False)
    schema.add_argument("--schema", help="feature schema file (default: bundled 40-feature schema)")

    extraction = _Parser(add_help=False)
    extraction.add_argument("--now", help="ISO-8601 time for certificate validity (default: current time)")
    extraction.add_argument("--lenient", action="store_true", help="degrade failing stages instead of aborting")
    extraction.add_argument("--no-digest-check", action="store_true", help="ignore MANIFEST.MF digest mismatches")
    extraction.add_argument("--no-window-check", action="store_true", help="ignore certificate validity window")

    training = _Parser(add_help=False)
    training.add_argument("--seed", type=int, default=0)
    training.add_argument("--lr", type=float, default=0.05)
    training.add_argument("--epochs", type=int, default=300)
    training.add_argument("--batch", type=int, default=32)
    training.add_argument("--split", type=float, default=0.8, help="training fraction")
    training.add_argument("--loss", choices=("mse", "xent"), default="mse")

    s = sub.add_parser("scan", parents=[schema, extraction], help="classify one APK")
    s.add_argument("apk")
    s.add_argument("--model", required=True)
    s.set_defaults(func=cmd_scan)

    s = sub.add_parser("extract", parents=[schema, extraction], help="APK manifest CSV to feature CSV")
    s.add_argument("manifest")
    s.add_argument("--out")
    s.add_argument("--jobs", type=int, default=1)
    s.set_defaults(func=cmd_extract)

    s = sub.add_parser("synth", parents=[schema], help="generate a synthetic feature CSV")
    s.add_argument("--benign", type=int, default=600)
    s.add_argument("--malicious", type=int, default=600)
    s.add_argument("--seed", type=int, default=7)
    s.add_argument("--noise", type=float, default=DEFAULT_NOISE)
    s.add_argument("--weights", help="e.g. fs3=0.9,fs1=0.7")
    s.add_argument("--out")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("train", parents=[training], help="train the DNN on a feature CSV")
    s.add_argument("features")
    s.add_argument("--out", help="model file")
    s.add_argument("--curves", help="per-epoch loss/accuracy CSV")
    s.add_argument("--metrics", help="validation metrics CSV")
    s.add_argument("--cv", type=int, default=0, help="k-fold cross-validation instead of a single split")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="evaluate a saved model on a feature CSV")
    s.add_argument("features")
    s.add_argument("--model", required=True)
    s.add_argument("--out")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("ablate", parents=[schema, training], help="retrain per feature-set subset")
    s.add_argument("features")
    s.add_argument("--subsets", default=",".join(ABLATION_SUBSETS))
    s.add_argument("--out")
    s.set_defaults(func=cmd_ablate)

    s = sub.add_parser("compare", parents=[training], help="DNN vs KNN, DT, RF and SVM")
    s.add_argument("features")
    s.add_argument("--out")
    s.add_argument("--k", type=int, default=5)
    s.add_argument("--tree-depth", type=int, default=10)
    s.add_argument("--min-leaf", type=int, default=2)
    s.add_argument("--trees", type=int, default=100)
    s.add_argument("--forest-depth", type=int, default=10)
    s.add_argument("--svm-lambda", type=float, default=1e-3)
    s.add_argument("--svm-epochs", type=int, default=100)
    s.set_defaults(func=cmd_compare)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"droiddnn: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, DroidDnnError, OSError, ValueError, UnicodeDecodeError) as exc:
        print(f"droiddnn {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except Exception as exc:  # noqa: BLE001
        log.exception("internal error")
        print(f"droiddnn {args.command}: internal error: {exc!r}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
