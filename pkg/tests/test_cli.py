"""End-to-end command-line flows, run in-process through main()."""

import json
import os

import numpy as np
import pytest

from corpora import blob_corpus
from dialectid.audio_io import read_wav
from dialectid.cli import main
from dialectid.corpus import (
    DEFAULT_CLASS_NAMES,
    LabeledCorpus,
    load_corpus,
    save_corpus,
)
from dialectid.models import load_checkpoint

# keep training invocations fast; the CLI only forwards these to TrainConfig
FAST_TRAIN_FLAGS = [
    "--learning-rate", "1e-3",
    "--batch-size", "8",
    "--max-epochs", "3",
    "--patience", "2",
]


def run(argv, capsys):
    rc = main(argv)
    captured = capsys.readouterr()
    return rc, captured.out, captured.err


def write_corpus(path, corpus):
    path.write_bytes(save_corpus(corpus))


class TestUsageErrors:
    # argparse-level problems must exit 1, not argparse's native 2

    def test_no_arguments(self, capsys):
        with pytest.raises(SystemExit) as excinfo:
            main([])
        assert excinfo.value.code == 1

    def test_unknown_subcommand(self, capsys):
        with pytest.raises(SystemExit) as excinfo:
            main(["frobnicate"])
        assert excinfo.value.code == 1
        assert "error" in capsys.readouterr().err

    def test_missing_required_flag(self, capsys):
        with pytest.raises(SystemExit) as excinfo:
            main(["synth"])
        assert excinfo.value.code == 1
        assert "--out-dir" in capsys.readouterr().err

    def test_bad_choice_value(self, capsys):
        with pytest.raises(SystemExit) as excinfo:
            main(["balance", "--corpus", "x", "--out", "y", "--mode", "bogus"])
        assert excinfo.value.code == 1

    def test_non_integer_flag(self, capsys):
        with pytest.raises(SystemExit) as excinfo:
            main(["synth", "--out-dir", "d", "--n-per-class", "many"])
        assert excinfo.value.code == 1


class TestSynth:
    def test_writes_class_folders(self, tmp_path, capsys):
        out = tmp_path / "wavs"
        rc, stdout, _ = run(
            ["synth", "--out-dir", str(out), "--n-per-class", "2",
             "--rate", "8000", "--seed", "3"],
            capsys,
        )
        assert rc == 0
        assert "wrote 12 clips" in stdout
        for name in DEFAULT_CLASS_NAMES:
            files = sorted(os.listdir(out / name))
            assert files == ["clip_0000.wav", "clip_0001.wav"]
            clip = read_wav((out / name / files[0]).read_bytes())
            assert clip.sample_rate_hz == 8000
            assert clip.samples.shape == (1, 8000)

    def test_seed_reproduces_bytes(self, tmp_path, capsys):
        args = ["--n-per-class", "1", "--rate", "8000", "--seed", "7"]
        run(["synth", "--out-dir", str(tmp_path / "a")] + args, capsys)
        run(["synth", "--out-dir", str(tmp_path / "b")] + args, capsys)
        run(["synth", "--out-dir", str(tmp_path / "c"), "--n-per-class", "1",
             "--rate", "8000", "--seed", "8"], capsys)
        rel = os.path.join("Pishdari", "clip_0000.wav")
        first = (tmp_path / "a" / rel).read_bytes()
        assert first == (tmp_path / "b" / rel).read_bytes()
        assert first != (tmp_path / "c" / rel).read_bytes()


class TestIngest:
    def synth_tree(self, tmp_path, capsys, n_per_class=2):
        wav_dir = tmp_path / "wavs"
        rc, _, _ = run(
            ["synth", "--out-dir", str(wav_dir), "--n-per-class",
             str(n_per_class), "--rate", "8000", "--seed", "0"],
            capsys,
        )
        assert rc == 0
        return wav_dir

    def test_builds_feature_corpus(self, tmp_path, capsys):
        wav_dir = self.synth_tree(tmp_path, capsys)
        out = tmp_path / "corpus.json"
        rc, stdout, _ = run(
            ["ingest", "--wav-dir", str(wav_dir), "--out", str(out),
             "--rate", "8000", "--n-fft", "256"],
            capsys,
        )
        assert rc == 0
        assert "wrote corpus of 12 items" in stdout
        corpus = load_corpus(out.read_bytes())
        assert list(corpus.class_counts()) == [2] * 6
        features, _ = corpus.items[0]
        assert features.values.shape == (98, 13)
        assert corpus.mfcc_config.n_fft == 256

    def test_unknown_class_directory(self, tmp_path, capsys):
        wav_dir = self.synth_tree(tmp_path, capsys)
        (wav_dir / "Mukriyani").mkdir()
        rc, _, stderr = run(
            ["ingest", "--wav-dir", str(wav_dir), "--out",
             str(tmp_path / "c.json"), "--rate", "8000"],
            capsys,
        )
        assert rc == 2
        assert "unknown class directories" in stderr
        assert "Mukriyani" in stderr

    def test_missing_class_directories(self, tmp_path, capsys):
        wav_dir = tmp_path / "empty"
        wav_dir.mkdir()
        rc, _, stderr = run(
            ["ingest", "--wav-dir", str(wav_dir), "--out",
             str(tmp_path / "c.json")],
            capsys,
        )
        assert rc == 2
        assert "missing class directories" in stderr
        assert "Sulaimani" in stderr

    def test_class_without_wavs(self, tmp_path, capsys):
        wav_dir = self.synth_tree(tmp_path, capsys)
        for f in (wav_dir / "Karkuki").iterdir():
            f.unlink()
        rc, _, stderr = run(
            ["ingest", "--wav-dir", str(wav_dir), "--out",
             str(tmp_path / "c.json"), "--rate", "8000"],
            capsys,
        )
        assert rc == 2
        assert "'Karkuki'" in stderr
        assert "no .wav files" in stderr

    def test_corrupt_wav_names_file(self, tmp_path, capsys):
        wav_dir = self.synth_tree(tmp_path, capsys)
        (wav_dir / "Garmiani" / "zz_bad.wav").write_bytes(b"JUNK")
        rc, _, stderr = run(
            ["ingest", "--wav-dir", str(wav_dir), "--out",
             str(tmp_path / "c.json"), "--rate", "8000"],
            capsys,
        )
        assert rc == 2
        assert "Garmiani/zz_bad.wav" in stderr

    def test_nonexistent_wav_dir(self, tmp_path, capsys):
        rc, _, stderr = run(
            ["ingest", "--wav-dir", str(tmp_path / "nope"), "--out",
             str(tmp_path / "c.json")],
            capsys,
        )
        assert rc == 2
        assert "cannot list" in stderr


class TestBalance:
    def uneven_corpus(self):
        base = blob_corpus(n_per_class=3, seed=5, n_classes=6)
        # drop items so per-class counts become [3, 1, 2, 1, 1, 2]
        keep = {0: 3, 1: 1, 2: 2, 3: 1, 4: 1, 5: 2}
        items = []
        for features, label in base.items:
            if keep[label] > 0:
                items.append((features, label))
                keep[label] -= 1
        return LabeledCorpus(items=items, class_names=base.class_names,
                             duration_s=base.duration_s,
                             mfcc_config=base.mfcc_config)

    def test_oversample_equalizes_to_max(self, tmp_path, capsys):
        src = tmp_path / "src.json"
        out = tmp_path / "out.json"
        write_corpus(src, self.uneven_corpus())
        rc, stdout, _ = run(
            ["balance", "--corpus", str(src), "--mode", "oversample",
             "--seed", "1", "--out", str(out)],
            capsys,
        )
        assert rc == 0
        balanced = load_corpus(out.read_bytes())
        assert list(balanced.class_counts()) == [3] * 6
        assert "Hewleri: 3" in stdout

    def test_undersample_equalizes_to_min(self, tmp_path, capsys):
        src = tmp_path / "src.json"
        out = tmp_path / "out.json"
        write_corpus(src, self.uneven_corpus())
        rc, _, _ = run(
            ["balance", "--corpus", str(src), "--mode", "undersample",
             "--seed", "1", "--out", str(out)],
            capsys,
        )
        assert rc == 0
        assert list(load_corpus(out.read_bytes()).class_counts()) == [1] * 6

    def test_imbalanced_passes_through_bytes(self, tmp_path, capsys):
        src = tmp_path / "src.json"
        out = tmp_path / "out.json"
        write_corpus(src, self.uneven_corpus())
        rc, _, _ = run(
            ["balance", "--corpus", str(src), "--mode", "imbalanced",
             "--out", str(out)],
            capsys,
        )
        assert rc == 0
        assert out.read_bytes() == src.read_bytes()

    def test_malformed_corpus(self, tmp_path, capsys):
        src = tmp_path / "src.json"
        src.write_bytes(b"{")
        rc, _, stderr = run(
            ["balance", "--corpus", str(src), "--mode", "oversample",
             "--out", str(tmp_path / "out.json")],
            capsys,
        )
        assert rc == 2
        assert "error" in stderr

    def test_missing_corpus_file(self, tmp_path, capsys):
        rc, _, stderr = run(
            ["balance", "--corpus", str(tmp_path / "nope.json"),
             "--mode", "oversample", "--out", str(tmp_path / "out.json")],
            capsys,
        )
        assert rc == 2
        assert "cannot read corpus" in stderr


class TestSplit:
    def test_three_way_files(self, tmp_path, capsys):
        src = tmp_path / "src.json"
        write_corpus(src, blob_corpus(n_per_class=10, seed=2, n_classes=6))
        prefix = tmp_path / "parts"
        rc, stdout, _ = run(
            ["split", "--corpus", str(src), "--ratios", "80:10:10",
             "--seed", "0", "--out-prefix", str(prefix)],
            capsys,
        )
        assert rc == 0
        sizes = {}
        for name in ("train", "val", "test"):
            part = load_corpus((tmp_path / f"parts.{name}.json").read_bytes())
            sizes[name] = len(part)
            assert f"{name}: {len(part)} items" in stdout
        assert sizes == {"train": 48, "val": 6, "test": 6}

    def test_two_way_ratio_empties_val(self, tmp_path, capsys):
        src = tmp_path / "src.json"
        write_corpus(src, blob_corpus(n_per_class=5, seed=2, n_classes=6))
        rc, _, _ = run(
            ["split", "--corpus", str(src), "--ratios", "80:20",
             "--out-prefix", str(tmp_path / "p")],
            capsys,
        )
        assert rc == 0
        assert len(load_corpus((tmp_path / "p.val.json").read_bytes())) == 0

    def test_bad_ratio_label(self, tmp_path, capsys):
        src = tmp_path / "src.json"
        write_corpus(src, blob_corpus(n_per_class=4, seed=2))
        rc, _, stderr = run(
            ["split", "--corpus", str(src), "--ratios", "droppings",
             "--out-prefix", str(tmp_path / "p")],
            capsys,
        )
        assert rc == 2
        assert "error" in stderr


class TestTrainEval:
    def corpus_files(self, tmp_path, n_per_class=12):
        full = blob_corpus(n_per_class=n_per_class, seed=4, n_classes=6)
        paths = {}
        for name, lo, hi in (("train", 0, 8), ("val", 8, 10), ("test", 10, 12)):
            items = [pair for i, pair in enumerate(full.items)
                     if lo <= i % n_per_class < hi]
            part = LabeledCorpus(items=items, class_names=full.class_names,
                                 duration_s=1, mfcc_config=full.mfcc_config)
            paths[name] = tmp_path / f"{name}.json"
            write_corpus(paths[name], part)
        return paths

    def test_train_with_validation(self, tmp_path, capsys):
        paths = self.corpus_files(tmp_path)
        ckpt = tmp_path / "model.ckpt"
        rc, stdout, _ = run(
            ["train", "--corpus", str(paths["train"]),
             "--val-corpus", str(paths["val"]), "--model", "ann",
             "--checkpoint", str(ckpt), "--seed", "0"] + FAST_TRAIN_FLAGS,
            capsys,
        )
        assert rc == 0
        history = json.loads(stdout.splitlines()[0])
        assert history["monitored"] == "val_loss"
        assert 1 <= history["best_epoch"] <= history["stopped_epoch"] <= 3
        model, _, _ = load_checkpoint(ckpt.read_bytes())
        assert model.kind == "ann"

    def test_train_without_validation_monitors_train_loss(self, tmp_path, capsys):
        paths = self.corpus_files(tmp_path)
        rc, stdout, _ = run(
            ["train", "--corpus", str(paths["train"]), "--model", "ann",
             "--checkpoint", str(tmp_path / "m.ckpt")] + FAST_TRAIN_FLAGS,
            capsys,
        )
        assert rc == 0
        assert json.loads(stdout.splitlines()[0])["monitored"] == "train_loss"

    def test_eval_reports_metrics(self, tmp_path, capsys):
        paths = self.corpus_files(tmp_path)
        ckpt = tmp_path / "model.ckpt"
        run(
            ["train", "--corpus", str(paths["train"]), "--model", "ann",
             "--checkpoint", str(ckpt)] + FAST_TRAIN_FLAGS,
            capsys,
        )
        rc, stdout, _ = run(
            ["eval", "--checkpoint", str(ckpt), "--corpus", str(paths["test"])],
            capsys,
        )
        assert rc == 0
        report = json.loads(stdout)
        assert 0.0 <= report["accuracy"] <= 1.0
        assert report["class_names"] == list(DEFAULT_CLASS_NAMES)
        confusion = np.array(report["confusion"])
        assert confusion.shape == (6, 6)
        assert confusion.sum() == 12
        assert len(report["f1"]) == 6

    def test_unfittable_model_exits_three(self, tmp_path, capsys):
        # 2x2 features are far below the smallest grid the cnn can pool down
        paths = self.corpus_files(tmp_path)
        rc, _, stderr = run(
            ["train", "--corpus", str(paths["train"]), "--model", "cnn",
             "--checkpoint", str(tmp_path / "m.ckpt")] + FAST_TRAIN_FLAGS,
            capsys,
        )
        assert rc == 3
        assert "training failed" in stderr

    def test_missing_train_corpus(self, tmp_path, capsys):
        rc, _, stderr = run(
            ["train", "--corpus", str(tmp_path / "nope.json"), "--model", "ann",
             "--checkpoint", str(tmp_path / "m.ckpt")],
            capsys,
        )
        assert rc == 2
        assert "cannot read corpus" in stderr


class TestGridAndReport:
    def corpus_root(self, tmp_path):
        root = tmp_path / "root"
        root.mkdir()
        corpus = blob_corpus(n_per_class=6, seed=9, n_classes=6, duration_s=1)
        write_corpus(root / "corpus_1s.json", corpus)
        return root

    def grid_args(self, root, out_dir, models="ann"):
        return [
            "grid", "--corpus-root", str(root), "--out-dir", str(out_dir),
            "--durations", "1", "--splits", "80:10:10",
            "--balances", "imbalanced", "--models", models,
            "--seed", "0", "--deterministic",
        ] + FAST_TRAIN_FLAGS

    def test_restricted_grid_outputs(self, tmp_path, capsys):
        root = self.corpus_root(tmp_path)
        out_dir = tmp_path / "out"
        rc, stdout, _ = run(self.grid_args(root, out_dir), capsys)
        assert rc == 0
        assert "ran 1 cells (1 ok, 0 failed)" in stdout
        assert "best ann:" in stdout
        lines = (out_dir / "results.jsonl").read_text().splitlines()
        assert len(lines) == 1
        assert json.loads(lines[0])["status"] == "ok"
        csv_lines = (out_dir / "results.csv").read_text().splitlines()
        assert len(csv_lines) == 2
        assert csv_lines[0].startswith("duration_s,split,balance,model,")
        summary = json.loads((out_dir / "summary.json").read_bytes())
        assert summary["cells"] == 1
        assert summary["failed"] == 0
        assert "ann" in summary["best_per_model"]

    def test_deterministic_reruns_are_byte_identical(self, tmp_path, capsys):
        root = self.corpus_root(tmp_path)
        run(self.grid_args(root, tmp_path / "a"), capsys)
        run(self.grid_args(root, tmp_path / "b"), capsys)
        for name in ("results.jsonl", "results.csv", "summary.json"):
            assert (tmp_path / "a" / name).read_bytes() == \
                (tmp_path / "b" / name).read_bytes()

    def test_failed_cell_is_isolated(self, tmp_path, capsys):
        root = self.corpus_root(tmp_path)
        out_dir = tmp_path / "out"
        rc, stdout, _ = run(
            self.grid_args(root, out_dir, models="ann,cnn"), capsys
        )
        assert rc == 0
        assert "ran 2 cells (1 ok, 1 failed)" in stdout
        assert "failed: 1s 80:10:10 imbalanced cnn" in stdout
        rows = [json.loads(line)
                for line in (out_dir / "results.jsonl").read_text().splitlines()]
        assert [r["cell"]["model"] for r in rows] == ["ann", "cnn"]  # canonical order
        assert [r["status"] for r in rows] == ["ok", "failed"]
        csv_lines = (out_dir / "results.csv").read_text().splitlines()
        failed_row = next(l for l in csv_lines if ",cnn," in l)
        assert ",failed," in failed_row

    def test_missing_duration_corpus(self, tmp_path, capsys):
        root = self.corpus_root(tmp_path)
        args = self.grid_args(root, tmp_path / "out")
        args[args.index("--durations") + 1] = "3"
        rc, _, stderr = run(args, capsys)
        assert rc == 2
        assert "3s" in stderr

    def test_report_regenerates_csv(self, tmp_path, capsys):
        root = self.corpus_root(tmp_path)
        out_dir = tmp_path / "out"
        run(self.grid_args(root, out_dir, models="ann,cnn"), capsys)
        report_dir = tmp_path / "report"
        rc, stdout, _ = run(
            ["report", "--results", str(out_dir / "results.jsonl"),
             "--out-dir", str(report_dir)],
            capsys,
        )
        assert rc == 0
        assert "report over 2 cells" in stdout
        assert (report_dir / "results.csv").read_bytes() == \
            (out_dir / "results.csv").read_bytes()
        # summary config echoes emit_report defaults here, so compare the rest
        regenerated = json.loads((report_dir / "summary.json").read_bytes())
        original = json.loads((out_dir / "summary.json").read_bytes())
        for key in ("cells", "ok", "failed", "best_per_model"):
            assert regenerated[key] == original[key]

    def test_report_missing_results(self, tmp_path, capsys):
        rc, _, stderr = run(
            ["report", "--results", str(tmp_path / "nope.jsonl"),
             "--out-dir", str(tmp_path / "r")],
            capsys,
        )
        assert rc == 2
        assert "error" in stderr

    def test_report_malformed_results(self, tmp_path, capsys):
        bad = tmp_path / "results.jsonl"
        bad.write_text("not json\n")
        rc, _, stderr = run(
            ["report", "--results", str(bad), "--out-dir", str(tmp_path / "r")],
            capsys,
        )
        assert rc == 2
        assert "cannot parse results log" in stderr
