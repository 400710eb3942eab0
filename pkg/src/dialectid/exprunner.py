"""The experiment grid: durations x split ratios x balancing x architectures.

Each cell gets its own seed derived from the global seed and the cell fields,
so any cell can be re-run in isolation and reproduce its grid result. Cell
failures are captured per cell and reported, never fatal to the run.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

from dialectid.audio_io import SEGMENT_DURATIONS_S
from dialectid.corpus import (
    BALANCE_MODES,
    BALANCE_SCOPES,
    SPLIT_LABELS,
    LabeledCorpus,
    SplitRatios,
    apply_balance,
    load_corpus,
    split,
)
from dialectid.models import MODEL_KINDS, build_model
from dialectid.train_eval import TrainConfig, evaluate, train


def derive_seed(*parts) -> int:
    """Stable 63-bit seed from the given parts (order matters)."""
    text = "|".join(repr(p) for p in parts)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1


@dataclass(frozen=True)
class ExperimentCell:
    duration_s: int
    split_label: str
    balance: str
    model: str

    def __post_init__(self):
        if self.duration_s < 1:
            raise ValueError("duration_s must be positive")
        SplitRatios.from_label(self.split_label)
        if self.balance not in BALANCE_MODES:
            raise ValueError(f"balance must be one of {BALANCE_MODES}")
        if self.model not in MODEL_KINDS:
            raise ValueError(f"model must be one of {MODEL_KINDS}")

    def sort_key(self):
        def position(value, ordering):
            return (ordering.index(value), "") if value in ordering else (len(ordering), str(value))

        return (
            position(self.duration_s, SEGMENT_DURATIONS_S),
            position(self.split_label, SPLIT_LABELS),
            position(self.balance, BALANCE_MODES),
            position(self.model, MODEL_KINDS),
        )

    def ratios(self) -> SplitRatios:
        """The split this cell actually trains with. Dense models use two-way
        splits (validation folded into test, training loss monitored)."""
        three_way = SplitRatios.from_label(self.split_label)
        if self.model == "ann":
            return SplitRatios(train=three_way.train, val=0.0,
                               test=three_way.val + three_way.test)
        return three_way


def full_grid(
    durations=SEGMENT_DURATIONS_S,
    split_labels=SPLIT_LABELS,
    balances=BALANCE_MODES,
    models=MODEL_KINDS,
) -> list[ExperimentCell]:
    """All combinations in canonical order; defaults give 5*5*3*3 = 225 cells."""
    return [
        ExperimentCell(duration_s=d, split_label=s, balance=b, model=m)
        for d in durations
        for s in split_labels
        for b in balances
        for m in models
    ]


@dataclass(frozen=True)
class GridConfig:
    seed: int = 0
    train: TrainConfig = TrainConfig()
    balance_scope: str = "corpus"
    deterministic: bool = False
    workers: int = 1

    def __post_init__(self):
        if self.balance_scope not in BALANCE_SCOPES:
            raise ValueError(f"balance_scope must be one of {BALANCE_SCOPES}")
        if self.workers < 1:
            raise ValueError("workers must be positive")


@dataclass
class ExperimentResult:
    cell: ExperimentCell
    seed: int
    status: str  # "ok" | "failed"
    error: str | None = None
    accuracy: float | None = None
    f1: list[float] | None = None
    best_epoch: int | None = None
    stopped_epoch: int | None = None
    wall_time_s: float | None = None
    config_echo: dict | None = None

    def to_json(self) -> str:
        doc = {
            "cell": {
                "duration_s": self.cell.duration_s,
                "split": self.cell.split_label,
                "balance": self.cell.balance,
                "model": self.cell.model,
            },
            "seed": self.seed,
            "status": self.status,
            "error": self.error,
            "accuracy": self.accuracy,
            "f1": self.f1,
            "best_epoch": self.best_epoch,
            "stopped_epoch": self.stopped_epoch,
            "wall_time_s": self.wall_time_s,
            "config_echo": self.config_echo,
        }
        return json.dumps(doc, separators=(",", ":"))

    @classmethod
    def from_json(cls, line: str) -> "ExperimentResult":
        doc = json.loads(line)
        cell = ExperimentCell(
            duration_s=doc["cell"]["duration_s"],
            split_label=doc["cell"]["split"],
            balance=doc["cell"]["balance"],
            model=doc["cell"]["model"],
        )
        return cls(
            cell=cell,
            seed=doc["seed"],
            status=doc["status"],
            error=doc.get("error"),
            accuracy=doc.get("accuracy"),
            f1=doc.get("f1"),
            best_epoch=doc.get("best_epoch"),
            stopped_epoch=doc.get("stopped_epoch"),
            wall_time_s=doc.get("wall_time_s"),
            config_echo=doc.get("config_echo"),
        )


def corpus_path(corpus_root: str, duration_s: int) -> str:
    return os.path.join(corpus_root, f"corpus_{duration_s}s.json")


def _load_corpus_file(path: str) -> LabeledCorpus:
    with open(path, "rb") as fh:
        return load_corpus(fh.read())


def run_cell(corpus: LabeledCorpus, cell: ExperimentCell, config: GridConfig) -> ExperimentResult:
    """Balance, split, build, train, and score one cell. Exceptions come back
    as a failed result instead of propagating."""
    cell_seed = derive_seed(config.seed, cell.duration_s, cell.split_label,
                            cell.balance, cell.model)
    started = time.perf_counter()
    try:
        ratios = cell.ratios()
        balance_seed = derive_seed(cell_seed, "balance")
        split_seed = derive_seed(cell_seed, "split")
        if config.balance_scope == "corpus":
            working = apply_balance(corpus, cell.balance, balance_seed)
            train_set, val_set, test_set = split(working, ratios, split_seed)
        else:
            train_set, val_set, test_set = split(corpus, ratios, split_seed)
            train_set = apply_balance(train_set, cell.balance, balance_seed)
        if len(test_set) == 0:
            raise ValueError("test split is empty")

        features = train_set.items[0][0]
        input_shape = (features.frame_count, features.coeff_count)
        model = build_model(cell.model, input_shape, train_set.n_classes,
                            seed=derive_seed(cell_seed, "init"))
        train_config = replace(config.train, seed=derive_seed(cell_seed, "train"))
        model, history = train(model, train_set, val_set, train_config)
        metrics = evaluate(model, test_set)
        wall = 0.0 if config.deterministic else time.perf_counter() - started
        return ExperimentResult(
            cell=cell,
            seed=cell_seed,
            status="ok",
            accuracy=metrics.accuracy,
            f1=[float(v) for v in metrics.f1],
            best_epoch=history.best_epoch,
            stopped_epoch=history.stopped_epoch,
            wall_time_s=wall,
            config_echo={
                "ratios": ratios.label(),
                "monitored": history.monitored,
                "balance_scope": config.balance_scope,
                "learning_rate": config.train.learning_rate,
                "batch_size": config.train.batch_size,
                "max_epochs": config.train.max_epochs,
                "patience": config.train.patience,
                "adam": [config.train.beta1, config.train.beta2, config.train.eps],
                "grad_clip_norm": model.grad_clip_norm,
                "input_shape": list(input_shape),
            },
        )
    except Exception as exc:  # noqa: BLE001  cell isolation is the contract
        wall = 0.0 if config.deterministic else time.perf_counter() - started
        return ExperimentResult(
            cell=cell,
            seed=cell_seed,
            status="failed",
            error=f"{type(exc).__name__}: {exc}",
            wall_time_s=wall,
        )


_WORKER_CACHE: dict[str, LabeledCorpus] = {}


def _run_cell_by_path(corpus_root: str, cell: ExperimentCell, config: GridConfig) -> ExperimentResult:
    path = corpus_path(corpus_root, cell.duration_s)
    if path not in _WORKER_CACHE:
        _WORKER_CACHE.clear()  # one corpus in memory per worker at a time
        _WORKER_CACHE[path] = _load_corpus_file(path)
    return run_cell(_WORKER_CACHE[path], cell, config)


def run_grid(
    corpus_root: str,
    cells: list[ExperimentCell],
    config: GridConfig = GridConfig(),
) -> tuple[list[ExperimentResult], list[ExperimentResult]]:
    """Run every cell against the per-duration corpora under corpus_root.

    Returns (ok_results, failed_results), both in canonical cell order.
    Missing corpus files are a hard error before any cell runs.
    """
    missing = sorted(
        {d for d in (c.duration_s for c in cells)
         if not os.path.exists(corpus_path(corpus_root, d))}
    )
    if missing:
        raise FileNotFoundError(
            f"missing corpus files under {corpus_root} for durations: "
            + ", ".join(f"{d}s" for d in missing)
        )

    ordered = sorted(cells, key=ExperimentCell.sort_key)
    if config.workers == 1:
        results = []
        for cell in ordered:
            path = corpus_path(corpus_root, cell.duration_s)
            if path not in _WORKER_CACHE:
                _WORKER_CACHE.clear()
                _WORKER_CACHE[path] = _load_corpus_file(path)
            results.append(run_cell(_WORKER_CACHE[path], cell, config))
        _WORKER_CACHE.clear()
    else:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = list(
                pool.map(_run_cell_by_path,
                         [corpus_root] * len(ordered), ordered,
                         [config] * len(ordered))
            )
    results.sort(key=lambda r: r.cell.sort_key())
    ok = [r for r in results if r.status == "ok"]
    failed = [r for r in results if r.status != "ok"]
    return ok, failed


def best_per_model(results: list[ExperimentResult]) -> dict[str, dict]:
    """Highest-accuracy ok cell for each model kind; ties resolve to the
    earliest cell in canonical order."""
    best: dict[str, ExperimentResult] = {}
    for result in sorted(results, key=lambda r: r.cell.sort_key()):
        if result.status != "ok":
            continue
        current = best.get(result.cell.model)
        if current is None or result.accuracy > current.accuracy:
            best[result.cell.model] = result
    return {
        kind: {
            "duration_s": r.cell.duration_s,
            "split": r.cell.split_label,
            "balance": r.cell.balance,
            "accuracy": r.accuracy,
        }
        for kind, r in best.items()
    }


def emit_report(
    results: list[ExperimentResult],
    failures: list[ExperimentResult],
    class_names: tuple[str, ...],
    config: GridConfig = GridConfig(),
) -> tuple[bytes, bytes]:
    """Render (csv_bytes, summary_json_bytes); one CSV row per attempted cell,
    in canonical cell order, stable column set."""
    rows = sorted(results + failures, key=lambda r: r.cell.sort_key())
    columns = (
        ["duration_s", "split", "balance", "model", "seed", "status", "accuracy"]
        + [f"f1_{name}" for name in class_names]
        + ["best_epoch", "stopped_epoch", "wall_time_s", "error"]
    )
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(columns)
    for r in rows:
        f1 = r.f1 if r.f1 is not None else [None] * len(class_names)
        record = (
            [r.cell.duration_s, r.cell.split_label, r.cell.balance, r.cell.model,
             r.seed, r.status, _num(r.accuracy)]
            + [_num(v) for v in f1]
            + [_num(r.best_epoch), _num(r.stopped_epoch), _num(r.wall_time_s),
               r.error if r.error is not None else ""]
        )
        writer.writerow(record)
    summary = {
        "cells": len(rows),
        "ok": len(results),
        "failed": len(failures),
        "best_per_model": best_per_model(results),
        "config": {
            "seed": config.seed,
            "balance_scope": config.balance_scope,
            "deterministic": config.deterministic,
            "learning_rate": config.train.learning_rate,
            "batch_size": config.train.batch_size,
            "max_epochs": config.train.max_epochs,
            "patience": config.train.patience,
            "adam": [config.train.beta1, config.train.beta2, config.train.eps],
        },
    }
    summary_bytes = (json.dumps(summary, indent=2) + "\n").encode("utf-8")
    return buffer.getvalue().encode("utf-8"), summary_bytes


def _num(value):
    if value is None:
        return ""
    return repr(float(value)) if isinstance(value, float) else value


def load_report_csv(data: bytes) -> list[dict]:
    """Parse emit_report CSV back into typed row dicts."""
    reader = csv.DictReader(io.StringIO(data.decode("utf-8")))
    rows = []
    for raw in reader:
        row = dict(raw)
        row["duration_s"] = int(row["duration_s"])
        row["seed"] = int(row["seed"])
        for key in list(row):
            if key == "accuracy" or key.startswith("f1_") or key == "wall_time_s":
                row[key] = float(row[key]) if row[key] != "" else None
            if key in ("best_epoch", "stopped_epoch"):
                row[key] = int(row[key]) if row[key] != "" else None
        rows.append(row)
    return rows
