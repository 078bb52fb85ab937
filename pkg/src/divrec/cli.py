"""Command-line surface: scan, preprocess, extract, train, evaluate, predict,
make-fixture.

Every command is deterministic given identical inputs, flags, and seed.
Exit codes are a stable contract: 0 success, 1 usage error, 2 data error,
3 internal numeric error.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .audio_io import ingest, write_wav
from .errors import DataError, DivrecError, NumericError
from .evaluation import (
    DIVISION_NAMES,
    check_compatible,
    confusion_csv,
    evaluate,
    label_from_name,
    predict,
    report_json,
)
from .features import (
    AggregatedFeature,
    FeatureConfig,
    aggregate,
    build_filterbank,
    extract,
    read_feature_cache,
    write_feature_cache,
    write_feature_csv,
)
from .fixture import make_fixture
from .manifest import ManifestRow, read_manifest, scan_corpus, write_manifest
from .network import load_model, save_model
from .preprocess import NoiseReductionConfig, SegmentationPolicy, reduce_noise, segment
from .training import TrainingConfig, split_dataset, train, write_metrics_csv

_TRAINING_KEYS = {f.name for f in dataclasses.fields(TrainingConfig)}
_FEATURE_KEYS = {f.name for f in dataclasses.fields(FeatureConfig)}


class UsageError(Exception):
    """Bad flags or config keys; maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    """argparse that exits 1 (not 2) on usage errors, per the exit-code contract."""

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(1)


def _parse_config_file(path) -> dict[str, str]:
    """Plain-text key=value overrides; '#' starts a comment."""
    values: dict[str, str] = {}
    try:
        fh = open(path)
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from exc
    with fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            values[key] = value
    return values


def _coerce(key: str, raw: str):
    if key in ("batch_size", "epochs", "seed", "plateau_patience",
               "frame_len", "hop", "fft_size", "num_filters", "delta_window",
               "sample_rate"):
        return int(raw)
    if key == "pre_emphasis":
        return None if raw.lower() in ("off", "none", "") else float(raw)
    return float(raw)


def _build_configs(args) -> tuple[TrainingConfig, FeatureConfig]:
    """defaults <- config file <- explicit CLI flags."""
    training_kwargs: dict = {}
    feature_kwargs: dict = {}
    if getattr(args, "config", None):
        for key, raw in _parse_config_file(args.config).items():
            if key in _TRAINING_KEYS:
                training_kwargs[key] = _coerce(key, raw)
            elif key in _FEATURE_KEYS:
                feature_kwargs[key] = _coerce(key, raw)
            else:
                raise UsageError(f"unknown config key {key!r}")
    for key in ("learning_rate", "batch_size", "epochs", "seed"):
        value = getattr(args, key, None)
        if value is not None:
            training_kwargs[key] = value
    return TrainingConfig(**training_kwargs), FeatureConfig(**feature_kwargs)


# --- commands ---

def cmd_scan(args) -> int:
    rows, skipped = scan_corpus(args.root)
    for name in skipped:
        print(f"skipping unknown division directory: {name}", file=sys.stderr)
    write_manifest(rows, args.out)
    print(f"wrote {len(rows)} rows to {args.out}")
    return 0


def _preprocess_one(row: ManifestRow, out_dir: Path, policy: SegmentationPolicy,
                    nr_config: NoiseReductionConfig | None) -> list[ManifestRow]:
    clip = ingest(row.audio_path)
    stem = Path(row.audio_path).stem
    seg_dir = out_dir / row.division / row.speaker_id
    seg_dir.mkdir(parents=True, exist_ok=True)
    out_rows = []
    for i, chunk in enumerate(segment(clip, policy)):
        if nr_config is not None:
            chunk = reduce_noise(chunk, nr_config)
        seg_path = seg_dir / f"{stem}_seg{i:03d}.wav"
        write_wav(chunk, seg_path)
        out_rows.append(
            ManifestRow(
                audio_path=str(seg_path),
                division=row.division,
                speaker_id=row.speaker_id,
                gender=row.gender,
            )
        )
    return out_rows


def cmd_preprocess(args) -> int:
    rows = read_manifest(args.manifest)
    out_dir = Path(args.out_dir)
    policy = SegmentationPolicy(args.chunk_seconds, args.min_tail_seconds)
    nr_config = None if args.skip_noise_reduction else NoiseReductionConfig()

    def work(row: ManifestRow):
        try:
            return _preprocess_one(row, out_dir, policy, nr_config), None
        except DivrecError as exc:
            return None, f"{row.audio_path}: {exc}"

    out_rows: list[ManifestRow] = []
    failures = 0
    with ThreadPoolExecutor(max_workers=args.workers) as pool:
        for result, err in pool.map(work, rows):
            if err is not None:
                failures += 1
                print(err, file=sys.stderr)
            else:
                out_rows.extend(result)

    if failures == len(rows):
        raise DataError("all input files failed preprocessing")
    write_manifest(out_rows, args.out)
    print(f"wrote {len(out_rows)} segment rows to {args.out} "
          f"({failures}/{len(rows)} input files failed)")
    return 0


def cmd_extract(args) -> int:
    _, feature_config = _build_configs(args)
    rows = read_manifest(args.manifest)
    bank = build_filterbank(
        feature_config.num_filters, feature_config.fft_size, feature_config.sample_rate
    )

    def work(row: ManifestRow):
        try:
            clip = ingest(row.audio_path, feature_config.sample_rate)
            vector = aggregate(extract(clip, feature_config, bank))
            return (
                AggregatedFeature(
                    vector=vector,
                    label=label_from_name(row.division),
                    source_id=row.audio_path,
                ),
                None,
            )
        except DivrecError as exc:
            return None, f"{row.audio_path}: {exc}"

    records: list[AggregatedFeature] = []
    failures = 0
    with ThreadPoolExecutor(max_workers=args.workers) as pool:
        for record, err in pool.map(work, rows):
            if err is not None:
                failures += 1
                print(err, file=sys.stderr)
            else:
                records.append(record)

    if not records:
        raise DataError("no segments could be extracted")
    write_feature_cache(records, args.out)
    print(f"wrote {len(records)} records to {args.out} "
          f"({failures}/{len(rows)} segments failed)")
    if args.csv:
        write_feature_csv(records, args.csv)
        print(f"wrote CSV mirror to {args.csv}")
    return 0


def cmd_train(args) -> int:
    training_config, _ = _build_configs(args)
    records = read_feature_cache(args.cache)
    params, history = train(
        records,
        training_config,
        require_all_labels=not args.allow_missing_classes,
        checkpoint_every=args.checkpoint_every,
        checkpoint_dir=args.checkpoint_dir,
    )
    for m in history:
        print(
            f"epoch {m.epoch:3d}  train_loss {m.train_loss:.4f}  train_acc {m.train_acc:.4f}  "
            f"val_loss {m.val_loss:.4f}  val_acc {m.val_acc:.4f}  lr {m.learning_rate:.6g}",
            file=sys.stderr,
        )
    save_model(params, args.model_out)
    write_metrics_csv(history, args.metrics_out)
    final = history[-1]
    print(f"final train accuracy: {final.train_acc:.6f}")
    print(f"final val accuracy: {final.val_acc:.6f}")
    print(f"model written to {args.model_out}, metrics to {args.metrics_out}")
    return 0


def cmd_evaluate(args) -> int:
    params = load_model(args.model)
    check_compatible(params)
    records = read_feature_cache(args.cache)
    if args.split != "full":
        training_config, _ = _build_configs(args)
        train_set, test_set, val_set = split_dataset(
            records, training_config, require_all_labels=not args.allow_missing_classes
        )
        records = {"train": train_set, "test": test_set, "val": val_set}[args.split]
    report = evaluate(params, records)
    text = report_json(report)
    print(text)
    if args.out:
        Path(args.out).write_text(text + "\n")
    if args.confusion_csv:
        Path(args.confusion_csv).write_text(confusion_csv(report))
    return 0


def cmd_predict(args) -> int:
    params = load_model(args.model)
    check_compatible(params)
    clip = ingest(args.wav)
    segments = segment(clip)
    if not segments:
        raise DataError(
            f"{args.wav}: too short ({clip.duration:.2f} s), need at least "
            f"{SegmentationPolicy().min_tail_seconds:.0f} s"
        )
    feature_config = FeatureConfig()
    bank = build_filterbank()
    nr_config = NoiseReductionConfig()
    votes = np.zeros(len(DIVISION_NAMES), dtype=np.int64)
    for chunk in segments:
        cleaned = reduce_noise(chunk, nr_config)
        vector = aggregate(extract(cleaned, feature_config, bank))
        label, probs = predict(params, vector)
        votes[label] += 1
        print(f"{chunk.source_id}: {DIVISION_NAMES[label]} p={probs[label]:.4f}")
    winner = int(np.argmax(votes))  # ties resolve to the lowest label index
    print(f"prediction: {DIVISION_NAMES[winner]} "
          f"({votes[winner]}/{len(segments)} segments)")
    return 0


def cmd_make_fixture(args) -> int:
    written = make_fixture(
        args.out,
        seed=args.seed if args.seed is not None else 0,
        speakers_per_class=args.speakers_per_class,
        files_per_speaker=args.files_per_speaker,
        file_seconds=args.file_seconds,
        noise_level=args.noise_level,
    )
    print(f"wrote {len(written)} files under {args.out}")
    return 0


# --- wiring ---

def build_parser() -> _Parser:
    parser = _Parser(prog="divrec", description=__doc__)
    parser.add_argument("--version", action="version", version=f"divrec {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("scan", help="walk a corpus tree and write a manifest CSV")
    p.add_argument("root")
    p.add_argument("--out", required=True, help="manifest CSV path")
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("preprocess", help="segment into 8-10 s chunks and reduce noise")
    p.add_argument("manifest")
    p.add_argument("--out-dir", required=True, help="root for segment WAVs")
    p.add_argument("--out", required=True, help="segment manifest CSV path")
    p.add_argument("--chunk-seconds", type=float, default=10.0)
    p.add_argument("--min-tail-seconds", type=float, default=8.0)
    p.add_argument("--skip-noise-reduction", action="store_true")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("extract", help="compute 26-dim segment features into a cache")
    p.add_argument("manifest")
    p.add_argument("--out", required=True, help="feature cache path")
    p.add_argument("--csv", help="also write a CSV mirror here")
    p.add_argument("--config", help="key=value overrides file")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train", help="train the classifier on a feature cache")
    p.add_argument("cache")
    p.add_argument("--model-out", required=True)
    p.add_argument("--metrics-out", required=True)
    p.add_argument("--config", help="key=value overrides file")
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--lr", dest="learning_rate", type=float)
    p.add_argument("--allow-missing-classes", action="store_true")
    p.add_argument("--checkpoint-every", type=int)
    p.add_argument("--checkpoint-dir")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a model against a feature cache")
    p.add_argument("model")
    p.add_argument("cache")
    p.add_argument("--split", choices=["full", "train", "test", "val"], default="full")
    p.add_argument("--seed", type=int)
    p.add_argument("--config", help="key=value overrides file")
    p.add_argument("--allow-missing-classes", action="store_true")
    p.add_argument("--out", help="write the JSON report here")
    p.add_argument("--confusion-csv", help="write the confusion matrix CSV here")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("predict", help="classify one WAV file end to end")
    p.add_argument("model")
    p.add_argument("wav")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("make-fixture", help="generate the synthetic 8-class corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--speakers-per-class", type=int, default=5)
    p.add_argument("--files-per-speaker", type=int, default=5)
    p.add_argument("--file-seconds", type=float, default=100.0)
    p.add_argument("--noise-level", type=float, default=0.01)
    p.set_defaults(func=cmd_make_fixture)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (DataError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 3
    except DivrecError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
