"""Labeled feature corpora: construction, balancing, splits, serialization.

A corpus is a list of (FeatureMatrix, class_index) pairs plus the class
vocabulary and the segment duration and feature config it was built with.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from dialectid.audio_io import AudioClip, SegmentSpec, downmix, resample, segment
from dialectid.mfcc import FeatureMatrix, MfccConfig, mfcc

DEFAULT_CLASS_NAMES = (
    "Garmiani",
    "Hewleri",
    "Karkuki",
    "Khoshnawi",
    "Pishdari",
    "Sulaimani",
)

BALANCE_MODES = ("imbalanced", "oversample", "undersample")
BALANCE_SCOPES = ("corpus", "train")


class CorpusFormatError(ValueError):
    """Serialized corpus violates the schema; message carries the field path."""


@dataclass(frozen=True)
class BalanceStrategy:
    """What resampling to apply and whether it sees the whole corpus or only
    the training partition."""

    mode: str = "imbalanced"
    scope: str = "corpus"

    def __post_init__(self):
        if self.mode not in BALANCE_MODES:
            raise ValueError(f"mode must be one of {BALANCE_MODES}, got {self.mode!r}")
        if self.scope not in BALANCE_SCOPES:
            raise ValueError(f"scope must be one of {BALANCE_SCOPES}, got {self.scope!r}")


@dataclass(frozen=True)
class SplitRatios:
    """Train/validation/test fractions. They must sum to 1; train must be
    positive; validation may be zero for two-way splits."""

    train: float
    val: float
    test: float

    def __post_init__(self):
        for name, value in (("train", self.train), ("val", self.val), ("test", self.test)):
            if value < 0.0:
                raise ValueError(f"{name} ratio must be non-negative")
        if abs(self.train + self.val + self.test - 1.0) > 1e-9:
            raise ValueError("split ratios must sum to 1")
        if self.train <= 0.0:
            raise ValueError("train ratio must be positive")

    @classmethod
    def from_label(cls, label: str) -> "SplitRatios":
        """Parse '80:10:10' or a two-way '80:20' (validation set empty)."""
        parts = label.split(":")
        if len(parts) not in (2, 3):
            raise ValueError(f"split label must have 2 or 3 fields, got {label!r}")
        try:
            values = [float(p) / 100.0 for p in parts]
        except ValueError:
            raise ValueError(f"split label fields must be numeric, got {label!r}")
        if len(values) == 2:
            return cls(train=values[0], val=0.0, test=values[1])
        return cls(train=values[0], val=values[1], test=values[2])

    def label(self) -> str:
        parts = [self.train, self.val, self.test]
        if self.val == 0.0:
            parts = [self.train, self.test]
        return ":".join(_percent_text(p) for p in parts)


def _percent_text(fraction: float) -> str:
    pct = fraction * 100.0
    return str(int(round(pct))) if abs(pct - round(pct)) < 1e-9 else repr(pct)


# The five three-way ratio labels the experiment grid sweeps over.
SPLIT_LABELS = ("90:5:5", "80:10:10", "70:15:15", "60:20:20", "50:25:25")


@dataclass
class LabeledCorpus:
    """Feature matrices with class labels.

    Attributes:
        items: list of (FeatureMatrix, class_index) pairs; all matrices share
            one shape.
        class_names: ordered class vocabulary; labels index into it.
        duration_s: segment duration the features were computed from.
        mfcc_config: feature extraction parameters used.
    """

    items: list[tuple[FeatureMatrix, int]]
    class_names: tuple[str, ...] = DEFAULT_CLASS_NAMES
    duration_s: int = 1
    mfcc_config: MfccConfig = field(default_factory=MfccConfig)

    def __post_init__(self):
        self.class_names = tuple(self.class_names)
        if not self.class_names:
            raise ValueError("class_names must not be empty")
        shape = None
        for i, (features, label) in enumerate(self.items):
            if not 0 <= label < len(self.class_names):
                raise ValueError(f"items[{i}]: label {label} outside class vocabulary")
            if shape is None:
                shape = features.values.shape
            elif features.values.shape != shape:
                raise ValueError(
                    f"items[{i}]: feature shape {features.values.shape} differs "
                    f"from {shape}"
                )

    def __len__(self) -> int:
        return len(self.items)

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    def class_counts(self) -> np.ndarray:
        counts = np.zeros(self.n_classes, dtype=np.int64)
        for _, label in self.items:
            counts[label] += 1
        return counts

    def subset(self, indices: Iterable[int]) -> "LabeledCorpus":
        return replace(self, items=[self.items[i] for i in indices])

    def as_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Stack into (X, y): X shape (n, frames, coeffs), y int labels."""
        if not self.items:
            raise ValueError("corpus is empty")
        features = np.stack([fm.values for fm, _ in self.items])
        labels = np.array([label for _, label in self.items], dtype=np.int64)
        return features, labels


def split(
    corpus: LabeledCorpus,
    ratios: SplitRatios,
    seed: int,
    stratified: bool = True,
) -> tuple[LabeledCorpus, LabeledCorpus, LabeledCorpus]:
    """Partition a corpus into train/val/test.

    Stratified mode shuffles each class separately with the seeded generator
    and gives train floor(n * train), val floor(n * val), test the remainder,
    per class. Plain mode applies the same arithmetic to one global shuffle.
    The three index sets are disjoint and cover the corpus.
    """
    rng = np.random.default_rng(seed)
    if stratified:
        groups = [
            [i for i, (_, label) in enumerate(corpus.items) if label == c]
            for c in range(corpus.n_classes)
        ]
        for c, group in enumerate(groups):
            if not group:
                raise ValueError(f"class {corpus.class_names[c]!r} has no items to split")
    else:
        groups = [list(range(len(corpus)))]

    train_idx: list[int] = []
    val_idx: list[int] = []
    test_idx: list[int] = []
    for group in groups:
        order = rng.permutation(len(group))
        shuffled = [group[j] for j in order]
        n = len(shuffled)
        n_train = int(n * ratios.train)
        n_val = int(n * ratios.val)
        train_idx += shuffled[:n_train]
        val_idx += shuffled[n_train : n_train + n_val]
        test_idx += shuffled[n_train + n_val :]
    return corpus.subset(train_idx), corpus.subset(val_idx), corpus.subset(test_idx)


def oversample(corpus: LabeledCorpus, seed: int) -> LabeledCorpus:
    """Equalize class counts upward to the current maximum.

    Minority classes are augmented with items drawn uniformly with replacement
    from their own items. An already balanced corpus comes back unchanged.
    """
    counts = corpus.class_counts()
    if (counts == 0).any():
        empty = corpus.class_names[int(np.argmax(counts == 0))]
        raise ValueError(f"class {empty!r} has no items to oversample from")
    target = int(counts.max())
    rng = np.random.default_rng(seed)
    items = list(corpus.items)
    for c in range(corpus.n_classes):
        own = [item for item in corpus.items if item[1] == c]
        deficit = target - len(own)
        if deficit > 0:
            picks = rng.integers(0, len(own), size=deficit)
            items += [own[int(p)] for p in picks]
    return replace(corpus, items=items)


def undersample(corpus: LabeledCorpus, seed: int) -> LabeledCorpus:
    """Equalize class counts downward to the current minimum.

    Each class keeps a uniform without-replacement sample of its items, in
    their original order. An already balanced corpus comes back unchanged.
    """
    counts = corpus.class_counts()
    if (counts == 0).any():
        empty = corpus.class_names[int(np.argmax(counts == 0))]
        raise ValueError(f"class {empty!r} has no items")
    target = int(counts.min())
    rng = np.random.default_rng(seed)
    keep: set[int] = set()
    for c in range(corpus.n_classes):
        own = [i for i, (_, label) in enumerate(corpus.items) if label == c]
        chosen = rng.choice(len(own), size=target, replace=False)
        keep.update(own[int(j)] for j in chosen)
    return corpus.subset(sorted(keep))


def apply_balance(corpus: LabeledCorpus, mode: str, seed: int) -> LabeledCorpus:
    if mode == "imbalanced":
        return corpus
    if mode == "oversample":
        return oversample(corpus, seed)
    if mode == "undersample":
        return undersample(corpus, seed)
    raise ValueError(f"unknown balance mode {mode!r}")


def save_corpus(corpus: LabeledCorpus) -> bytes:
    """Serialize to JSON bytes. Floats are written in shortest round-trip
    form, which carries at least 9 significant digits for float64."""
    doc = {
        "class_names": list(corpus.class_names),
        "duration_s": corpus.duration_s,
        "mfcc_config": {
            "frame_ms": corpus.mfcc_config.frame_ms,
            "hop_ms": corpus.mfcc_config.hop_ms,
            "n_fft": corpus.mfcc_config.n_fft,
            "n_mels": corpus.mfcc_config.n_mels,
            "n_coeffs": corpus.mfcc_config.n_coeffs,
            "pre_emphasis": corpus.mfcc_config.pre_emphasis,
            "log_floor": corpus.mfcc_config.log_floor,
        },
        "items": [
            {
                "label": label,
                "shape": list(features.values.shape),
                "values": features.values.ravel().tolist(),
            }
            for features, label in corpus.items
        ],
    }
    return json.dumps(doc, separators=(",", ":")).encode("utf-8")


def _require(doc: dict, key: str, kind, path: str):
    if key not in doc:
        raise CorpusFormatError(f"{path}.{key}: missing")
    value = doc[key]
    if kind is float:
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise CorpusFormatError(f"{path}.{key}: expected number, got {type(value).__name__}")
        return float(value)
    if not isinstance(value, kind) or isinstance(value, bool) and kind is int:
        raise CorpusFormatError(f"{path}.{key}: expected {kind.__name__}, got {type(value).__name__}")
    return value


def load_corpus(data: bytes) -> LabeledCorpus:
    """Parse save_corpus output; schema violations name the offending field."""
    try:
        doc = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorpusFormatError(f"$: not valid JSON ({exc})")
    if not isinstance(doc, dict):
        raise CorpusFormatError("$: expected object")

    class_names = _require(doc, "class_names", list, "$")
    if not class_names or not all(isinstance(n, str) for n in class_names):
        raise CorpusFormatError("$.class_names: expected non-empty list of strings")
    duration_s = _require(doc, "duration_s", int, "$")
    cfg_doc = _require(doc, "mfcc_config", dict, "$")
    try:
        config = MfccConfig(
            frame_ms=_require(cfg_doc, "frame_ms", float, "$.mfcc_config"),
            hop_ms=_require(cfg_doc, "hop_ms", float, "$.mfcc_config"),
            n_fft=_require(cfg_doc, "n_fft", int, "$.mfcc_config"),
            n_mels=_require(cfg_doc, "n_mels", int, "$.mfcc_config"),
            n_coeffs=_require(cfg_doc, "n_coeffs", int, "$.mfcc_config"),
            pre_emphasis=_require(cfg_doc, "pre_emphasis", float, "$.mfcc_config"),
            log_floor=_require(cfg_doc, "log_floor", float, "$.mfcc_config"),
        )
    except ValueError as exc:
        if isinstance(exc, CorpusFormatError):
            raise
        raise CorpusFormatError(f"$.mfcc_config: {exc}")

    items_doc = _require(doc, "items", list, "$")
    items = []
    for i, entry in enumerate(items_doc):
        path = f"$.items[{i}]"
        if not isinstance(entry, dict):
            raise CorpusFormatError(f"{path}: expected object")
        label = _require(entry, "label", int, path)
        if not 0 <= label < len(class_names):
            raise CorpusFormatError(f"{path}.label: {label} outside class vocabulary")
        shape = _require(entry, "shape", list, path)
        if len(shape) != 2 or not all(isinstance(s, int) and s >= 0 for s in shape):
            raise CorpusFormatError(f"{path}.shape: expected two non-negative ints")
        values = _require(entry, "values", list, path)
        if len(values) != shape[0] * shape[1]:
            raise CorpusFormatError(
                f"{path}.values: {len(values)} values do not fill shape {shape}"
            )
        try:
            array = np.array(values, dtype=np.float64).reshape(shape)
        except (TypeError, ValueError):
            raise CorpusFormatError(f"{path}.values: expected numbers")
        try:
            features = FeatureMatrix(values=array)
        except ValueError as exc:
            raise CorpusFormatError(f"{path}.values: {exc}")
        items.append((features, label))

    try:
        return LabeledCorpus(
            items=items,
            class_names=tuple(class_names),
            duration_s=duration_s,
            mfcc_config=config,
        )
    except ValueError as exc:
        raise CorpusFormatError(f"$.items: {exc}")


def corpus_from_clips(
    labeled_clips: Sequence[tuple[AudioClip, int]],
    duration_s: int,
    class_names: tuple[str, ...] = DEFAULT_CLASS_NAMES,
    config: MfccConfig = MfccConfig(),
    target_rate_hz: int | None = None,
) -> LabeledCorpus:
    """Run clips through downmix, optional resample, segmentation and MFCC."""
    spec = SegmentSpec(duration_s=duration_s)
    items = []
    for clip, label in labeled_clips:
        mono_clip = downmix(clip)
        if target_rate_hz is not None:
            mono_clip = resample(mono_clip, target_rate_hz)
        for piece in segment(mono_clip, spec):
            items.append((mfcc(piece, config), label))
    return LabeledCorpus(
        items=items,
        class_names=class_names,
        duration_s=duration_s,
        mfcc_config=config,
    )


def _event_window(n, sample_rate_hz: int, w_start: int, w_len: int) -> np.ndarray:
    """Rectangular window at [w_start, w_start + w_len) with 10 ms cosine ramps."""
    envelope = np.zeros(n)
    envelope[w_start : w_start + w_len] = 1.0
    ramp = max(1, int(0.01 * sample_rate_hz))
    if 2 * ramp < w_len:
        edge = 0.5 - 0.5 * np.cos(np.pi * np.arange(ramp) / ramp)
        envelope[w_start : w_start + ramp] = edge
        envelope[w_start + w_len - ramp : w_start + w_len] = edge[::-1]
    return envelope


def _unit_rms(burst: np.ndarray, w_start: int, w_len: int) -> np.ndarray:
    rms = float(np.sqrt(np.mean(burst[w_start : w_start + w_len] ** 2)))
    return burst / max(rms, 1e-12)


def _voiced_burst(rng, t, n, sample_rate_hz: int, duration_s: int, k: int,
                  w_start: int, w_len: int) -> np.ndarray:
    """One short harmonic event for class k at the given window.

    Fundamental near 100 + 20k Hz, harmonic amplitudes shaped by the two
    class-specific resonant bands. Placement is the caller's business; the
    burst comes back with unit rms inside its window.
    """
    ceiling_hz = min(3800.0, 0.45 * sample_rate_hz)
    f0 = 100.0 + 20.0 * k + rng.uniform(-8.0, 8.0)
    band_lo = 350.0 + 300.0 * k + rng.uniform(-25.0, 25.0)
    band_hi = 900.0 + 480.0 * k + rng.uniform(-35.0, 35.0)
    drift = rng.uniform(-0.05, 0.05)

    n_harmonics = max(1, int(ceiling_hz / f0))
    h = np.arange(1, n_harmonics + 1)
    freqs = h * f0
    amps = (
        np.exp(-((freqs - band_lo) / 130.0) ** 2)
        + np.exp(-((freqs - band_hi) / 170.0) ** 2)
        + 0.03
    )
    phases = rng.uniform(0.0, 2.0 * np.pi, size=n_harmonics)
    # instantaneous frequency drifts linearly by f0 * drift over the clip
    base = f0 * (t + drift * t**2 / (2.0 * duration_s))
    voice = amps @ np.sin(2.0 * np.pi * np.outer(h, base) + phases[:, None])
    burst = voice * _event_window(n, sample_rate_hz, w_start, w_len)
    return _unit_rms(burst, w_start, w_len)


def _onset_marker(rng, t, n, sample_rate_hz: int,
                  w_start: int, w_len: int) -> np.ndarray:
    """Class-independent cue: a fixed three-tone chord at the given window.

    The tone triple spans low and high bands at once, a combination no class
    burst produces, so the marker is recognizable but carries no label."""
    tones = np.minimum(np.array([700.0, 2100.0, 3500.0]), 0.45 * sample_rate_hz)
    tones = tones + rng.uniform(-15.0, 15.0, size=3)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=3)
    chord = np.sin(2.0 * np.pi * np.outer(tones, t) + phases[:, None]).sum(axis=0)
    marker = chord * _event_window(n, sample_rate_hz, w_start, w_len)
    return _unit_rms(marker, w_start, w_len)


def generate_synthetic_corpus(
    n_per_class: int,
    duration_s: int,
    sample_rate_hz: int,
    seed: int,
    class_names: tuple[str, ...] = DEFAULT_CLASS_NAMES,
) -> list[tuple[AudioClip, int]]:
    """Deterministic labeled clips with spectrally separable classes.

    Class k is a short harmonic burst whose resonant bands rise with k, placed
    at a random position in the clip. An equally loud burst borrowed from an
    adjacent class lands somewhere else in the same clip, so time-averaged
    statistics cannot tell the labeled event from the impostor; the one
    giveaway is a fixed three-tone marker that always sounds just before the
    labeled burst and never before the impostor. A white noise floor covers
    everything. Mean spectral centroid still orders the classes monotonically.
    The same seed reproduces the clips bit for bit.
    """
    if n_per_class < 1:
        raise ValueError("n_per_class must be positive")
    clips: list[tuple[AudioClip, int]] = []
    n = duration_s * sample_rate_hz
    t = np.arange(n) / sample_rate_hz
    n_classes = len(class_names)
    for k in range(n_classes):
        for i in range(n_per_class):
            rng = np.random.default_rng([seed, k, i])
            # marker, short gap and labeled burst form one contiguous block
            m_len = max(1, int(rng.uniform(0.07, 0.10) * n))
            gap = int(rng.uniform(0.01, 0.03) * n)
            b_len = max(1, int(rng.uniform(0.08, 0.15) * n))
            block = m_len + gap + b_len
            block_start = int(rng.integers(0, max(1, n - block + 1)))
            x = _voiced_burst(rng, t, n, sample_rate_hz, duration_s, k,
                              block_start + m_len + gap, b_len)
            x += rng.uniform(0.85, 1.0) * _onset_marker(
                rng, t, n, sample_rate_hz, block_start, m_len)
            if k == 0:
                step = 1
            elif k == n_classes - 1:
                step = -1
            else:
                step = 1 if int(rng.integers(0, 2)) else -1
            d_len = max(1, int(rng.uniform(0.07, 0.14) * n))
            # impostor goes anywhere that leaves the marker block untouched
            left_room = max(0, block_start - d_len + 1)
            right_lo = block_start + block
            right_room = max(0, n - d_len - right_lo + 1)
            if left_room + right_room > 0:
                u = int(rng.integers(0, left_room + right_room))
                d_start = u if u < left_room else right_lo + (u - left_room)
            else:
                d_start = int(rng.integers(0, max(1, n - d_len + 1)))
            x += rng.uniform(0.9, 1.1) * _voiced_burst(
                rng, t, n, sample_rate_hz, duration_s, k + step, d_start, d_len)
            snr_db = rng.uniform(8.0, 16.0)
            # SNR measured against the in-window rms of the unit-level burst
            noise = rng.standard_normal(n) * 10.0 ** (-snr_db / 20.0)
            x = x + noise
            x *= 0.9 / float(np.max(np.abs(x)))
            clips.append((AudioClip(samples=x[None, :], sample_rate_hz=sample_rate_hz), k))
    return clips
