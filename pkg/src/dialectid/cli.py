"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 data error, 3 training failure.
All randomness flows from --seed, so a fixed seed reproduces outputs byte for
byte (pass --deterministic to grid so reports omit wall-clock times).
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from dialectid.audio_io import PIPELINE_RATE_HZ, WavFormatError, read_wav, write_wav
from dialectid.corpus import (
    BALANCE_MODES,
    BALANCE_SCOPES,
    DEFAULT_CLASS_NAMES,
    SPLIT_LABELS,
    CorpusFormatError,
    SplitRatios,
    apply_balance,
    corpus_from_clips,
    generate_synthetic_corpus,
    load_corpus,
    save_corpus,
    split,
)
from dialectid.exprunner import (
    ExperimentCell,
    ExperimentResult,
    GridConfig,
    best_per_model,
    emit_report,
    full_grid,
    run_grid,
)
from dialectid.mfcc import MfccConfig
from dialectid.models import MODEL_KINDS, ShapeError, build_model, load_checkpoint, save_checkpoint
from dialectid.train_eval import TrainConfig, TrainingError, evaluate, train

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_TRAINING = 3


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage problems; the contract here is 1
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


class DataError(ValueError):
    pass


def _add_mfcc_flags(parser):
    parser.add_argument("--frame-ms", type=float, default=25.0)
    parser.add_argument("--hop-ms", type=float, default=10.0)
    parser.add_argument("--n-fft", type=int, default=1024)
    parser.add_argument("--n-mels", type=int, default=26)
    parser.add_argument("--n-coeffs", type=int, default=13)
    parser.add_argument("--pre-emphasis", type=float, default=0.97)
    parser.add_argument("--log-floor", type=float, default=1e-10)


def _mfcc_config(args) -> MfccConfig:
    return MfccConfig(
        frame_ms=args.frame_ms,
        hop_ms=args.hop_ms,
        n_fft=args.n_fft,
        n_mels=args.n_mels,
        n_coeffs=args.n_coeffs,
        pre_emphasis=args.pre_emphasis,
        log_floor=args.log_floor,
    )


def _add_train_flags(parser):
    parser.add_argument("--learning-rate", type=float, default=1e-4)
    parser.add_argument("--batch-size", type=int, default=32)
    parser.add_argument("--max-epochs", type=int, default=200)
    parser.add_argument("--patience", type=int, default=10)


def _train_config(args, seed: int) -> TrainConfig:
    return TrainConfig(
        learning_rate=args.learning_rate,
        batch_size=args.batch_size,
        max_epochs=args.max_epochs,
        patience=args.patience,
        seed=seed,
    )


def _read_corpus(path: str):
    try:
        with open(path, "rb") as fh:
            return load_corpus(fh.read())
    except OSError as exc:
        raise DataError(f"cannot read corpus {path}: {exc}")


def cmd_synth(args) -> int:
    clips = generate_synthetic_corpus(
        n_per_class=args.n_per_class,
        duration_s=args.duration,
        sample_rate_hz=args.rate,
        seed=args.seed,
    )
    counters = {name: 0 for name in DEFAULT_CLASS_NAMES}
    for clip, label in clips:
        name = DEFAULT_CLASS_NAMES[label]
        class_dir = os.path.join(args.out_dir, name)
        os.makedirs(class_dir, exist_ok=True)
        path = os.path.join(class_dir, f"clip_{counters[name]:04d}.wav")
        with open(path, "wb") as fh:
            fh.write(write_wav(clip))
        counters[name] += 1
    for name in DEFAULT_CLASS_NAMES:
        print(f"{name}: {counters[name]} clips")
    print(f"wrote {len(clips)} clips to {args.out_dir}")
    return EXIT_OK


def cmd_ingest(args) -> int:
    config = _mfcc_config(args)
    try:
        entries = sorted(os.listdir(args.wav_dir))
    except OSError as exc:
        raise DataError(f"cannot list {args.wav_dir}: {exc}")
    found_dirs = [e for e in entries if os.path.isdir(os.path.join(args.wav_dir, e))]
    unknown = [d for d in found_dirs if d not in DEFAULT_CLASS_NAMES]
    if unknown:
        raise DataError(
            "unknown class directories: " + ", ".join(sorted(unknown))
            + f" (expected {', '.join(DEFAULT_CLASS_NAMES)})"
        )
    missing = [name for name in DEFAULT_CLASS_NAMES if name not in found_dirs]
    if missing:
        raise DataError("missing class directories: " + ", ".join(missing))

    labeled_clips = []
    for label, name in enumerate(DEFAULT_CLASS_NAMES):
        class_dir = os.path.join(args.wav_dir, name)
        wavs = sorted(f for f in os.listdir(class_dir) if f.lower().endswith(".wav"))
        if not wavs:
            raise DataError(f"class directory {name!r} contains no .wav files")
        for filename in wavs:
            with open(os.path.join(class_dir, filename), "rb") as fh:
                try:
                    clip = read_wav(fh.read())
                except WavFormatError as exc:
                    raise DataError(f"{name}/{filename}: {exc}")
            labeled_clips.append((clip, label))

    corpus = corpus_from_clips(
        labeled_clips,
        duration_s=args.duration,
        config=config,
        target_rate_hz=args.rate,
    )
    counts = corpus.class_counts()
    for name, count in zip(DEFAULT_CLASS_NAMES, counts):
        print(f"{name}: {int(count)} segments")
    os.makedirs(os.path.dirname(os.path.abspath(args.out)), exist_ok=True)
    with open(args.out, "wb") as fh:
        fh.write(save_corpus(corpus))
    print(f"wrote corpus of {len(corpus)} items to {args.out}")
    return EXIT_OK


def cmd_balance(args) -> int:
    corpus = _read_corpus(args.corpus)
    balanced = apply_balance(corpus, args.mode, args.seed)
    with open(args.out, "wb") as fh:
        fh.write(save_corpus(balanced))
    counts = balanced.class_counts()
    for name, count in zip(balanced.class_names, counts):
        print(f"{name}: {int(count)}")
    print(f"wrote {len(balanced)} items to {args.out}")
    return EXIT_OK


def cmd_split(args) -> int:
    corpus = _read_corpus(args.corpus)
    ratios = SplitRatios.from_label(args.ratios)
    train_set, val_set, test_set = split(corpus, ratios, args.seed)
    for part, name in ((train_set, "train"), (val_set, "val"), (test_set, "test")):
        path = f"{args.out_prefix}.{name}.json"
        with open(path, "wb") as fh:
            fh.write(save_corpus(part))
        print(f"{name}: {len(part)} items -> {path}")
    return EXIT_OK


def cmd_train(args) -> int:
    train_corpus = _read_corpus(args.corpus)
    val_corpus = _read_corpus(args.val_corpus) if args.val_corpus else None
    features = train_corpus.items[0][0] if train_corpus.items else None
    if features is None:
        raise DataError("training corpus is empty")
    input_shape = (features.frame_count, features.coeff_count)
    config = _train_config(args, args.seed)
    try:
        model = build_model(args.model, input_shape, train_corpus.n_classes, seed=args.seed)
        model, history = train(model, train_corpus, val_corpus, config)
    except (ShapeError, FloatingPointError, TrainingError) as exc:
        print(f"training failed: {exc}", file=sys.stderr)
        return EXIT_TRAINING
    with open(args.checkpoint, "wb") as fh:
        fh.write(save_checkpoint(model))
    print(json.dumps({
        "monitored": history.monitored,
        "best_epoch": history.best_epoch,
        "stopped_epoch": history.stopped_epoch,
        "best_loss": history.best_loss,
        "wall_time_s": history.wall_time_s,
    }))
    print(f"wrote checkpoint to {args.checkpoint}")
    return EXIT_OK


def cmd_eval(args) -> int:
    with open(args.checkpoint, "rb") as fh:
        model, _, _ = load_checkpoint(fh.read())
    corpus = _read_corpus(args.corpus)
    metrics = evaluate(model, corpus)
    print(json.dumps({
        "accuracy": metrics.accuracy,
        "precision": [float(v) for v in metrics.precision],
        "recall": [float(v) for v in metrics.recall],
        "f1": [float(v) for v in metrics.f1],
        "confusion": metrics.confusion.tolist(),
        "class_names": list(corpus.class_names),
    }))
    return EXIT_OK


def _parse_list(text: str, cast, valid, what: str):
    values = []
    for part in text.split(","):
        part = part.strip()
        try:
            value = cast(part)
        except ValueError:
            raise DataError(f"bad {what} value {part!r}")
        if valid is not None and value not in valid:
            raise DataError(f"{what} {part!r} not in {valid}")
        values.append(value)
    if not values:
        raise DataError(f"empty {what} list")
    return values


def cmd_grid(args) -> int:
    durations = _parse_list(args.durations, int, None, "duration")
    splits = _parse_list(args.splits, str, SPLIT_LABELS, "split")
    balances = _parse_list(args.balances, str, BALANCE_MODES, "balance")
    models = _parse_list(args.models, str, MODEL_KINDS, "model")
    cells = full_grid(durations, splits, balances, models)
    config = GridConfig(
        seed=args.seed,
        train=_train_config(args, args.seed),
        balance_scope=args.balance_scope,
        deterministic=args.deterministic,
        workers=args.workers,
    )
    results, failures = run_grid(args.corpus_root, cells, config)
    os.makedirs(args.out_dir, exist_ok=True)
    with open(os.path.join(args.out_dir, "results.jsonl"), "w") as fh:
        for result in sorted(results + failures, key=lambda r: r.cell.sort_key()):
            fh.write(result.to_json() + "\n")
    csv_bytes, summary_bytes = emit_report(
        results, failures, DEFAULT_CLASS_NAMES, config
    )
    with open(os.path.join(args.out_dir, "results.csv"), "wb") as fh:
        fh.write(csv_bytes)
    with open(os.path.join(args.out_dir, "summary.json"), "wb") as fh:
        fh.write(summary_bytes)
    print(f"ran {len(results) + len(failures)} cells "
          f"({len(results)} ok, {len(failures)} failed)")
    for kind, info in best_per_model(results).items():
        print(f"best {kind}: accuracy {info['accuracy']:.4f} "
              f"({info['duration_s']}s, {info['split']}, {info['balance']})")
    if failures:
        for failure in failures:
            c = failure.cell
            print(f"failed: {c.duration_s}s {c.split_label} {c.balance} {c.model}: "
                  f"{failure.error}")
    return EXIT_OK


def cmd_report(args) -> int:
    try:
        with open(args.results) as fh:
            rows = [ExperimentResult.from_json(line) for line in fh if line.strip()]
    except (OSError, json.JSONDecodeError, KeyError, ValueError) as exc:
        raise DataError(f"cannot parse results log {args.results}: {exc}")
    results = [r for r in rows if r.status == "ok"]
    failures = [r for r in rows if r.status != "ok"]
    csv_bytes, summary_bytes = emit_report(results, failures, DEFAULT_CLASS_NAMES)
    os.makedirs(args.out_dir, exist_ok=True)
    with open(os.path.join(args.out_dir, "results.csv"), "wb") as fh:
        fh.write(csv_bytes)
    with open(os.path.join(args.out_dir, "summary.json"), "wb") as fh:
        fh.write(summary_bytes)
    print(f"report over {len(rows)} cells written to {args.out_dir}")
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="dialectid",
                     description="Speech subdialect classification toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate labeled synthetic WAV clips")
    p.add_argument("--out-dir", required=True, help="directory for per-class WAV folders")
    p.add_argument("--n-per-class", type=int, default=50)
    p.add_argument("--duration", type=int, default=1, help="clip length in seconds")
    p.add_argument("--rate", type=int, default=PIPELINE_RATE_HZ, help="sample rate in Hz")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", help="build a feature corpus from class-folder WAVs")
    p.add_argument("--wav-dir", required=True,
                   help="directory with one subdirectory per class name")
    p.add_argument("--out", required=True, help="output corpus JSON path")
    p.add_argument("--duration", type=int, default=1, help="segment length in seconds")
    p.add_argument("--rate", type=int, default=PIPELINE_RATE_HZ,
                   help="processing sample rate in Hz")
    _add_mfcc_flags(p)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("balance", help="rebalance class counts in a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--mode", choices=BALANCE_MODES, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_balance)

    p = sub.add_parser("split", help="split a corpus into train/val/test")
    p.add_argument("--corpus", required=True)
    p.add_argument("--ratios", default="80:10:10",
                   help="train:val:test percentages, e.g. 80:10:10 or 80:20")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-prefix", required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", help="train one model on a corpus")
    p.add_argument("--corpus", required=True, help="training corpus JSON")
    p.add_argument("--val-corpus", help="validation corpus JSON (optional)")
    p.add_argument("--model", choices=MODEL_KINDS, required=True)
    p.add_argument("--checkpoint", required=True, help="output checkpoint path")
    p.add_argument("--seed", type=int, default=0)
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint against a corpus")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--corpus", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("grid", help="run the experiment grid")
    p.add_argument("--corpus-root", required=True,
                   help="directory holding corpus_<D>s.json files")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--durations", default="1,3,5,10,30", help="comma list of seconds")
    p.add_argument("--splits", default=",".join(SPLIT_LABELS), help="comma list of ratio labels")
    p.add_argument("--balances", default=",".join(BALANCE_MODES))
    p.add_argument("--models", default=",".join(MODEL_KINDS))
    p.add_argument("--balance-scope", choices=BALANCE_SCOPES, default="corpus")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--deterministic", action="store_true",
                   help="zero wall times so reports are byte-reproducible")
    _add_train_flags(p)
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("report", help="regenerate CSV and summary from a results log")
    p.add_argument("--results", required=True, help="results.jsonl from a grid run")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (DataError, CorpusFormatError, WavFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
