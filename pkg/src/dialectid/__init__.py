"""Speech subdialect classification toolkit.

Pipeline: WAV ingestion -> MFCC features -> labeled corpus (balancing, splits)
-> from-scratch neural models (dense, convolutional, recurrent) -> training with
early stopping -> experiment grid over durations, split ratios, balancing modes
and architectures.
"""

from dialectid.audio_io import (
    AudioClip,
    SegmentSpec,
    WavFormatError,
    downmix,
    read_wav,
    resample,
    segment,
    write_wav,
)
from dialectid.corpus import (
    DEFAULT_CLASS_NAMES,
    BalanceStrategy,
    CorpusFormatError,
    LabeledCorpus,
    SplitRatios,
    generate_synthetic_corpus,
    load_corpus,
    oversample,
    save_corpus,
    split,
    undersample,
)
from dialectid.mfcc import FeatureMatrix, MfccConfig, mfcc
from dialectid.models import build_ann, build_cnn, build_lstm, build_model
from dialectid.train_eval import Metrics, TrainConfig, TrainHistory, evaluate, train

__version__ = "0.1.0"

__all__ = [
    "AudioClip",
    "BalanceStrategy",
    "CorpusFormatError",
    "DEFAULT_CLASS_NAMES",
    "FeatureMatrix",
    "LabeledCorpus",
    "Metrics",
    "MfccConfig",
    "SegmentSpec",
    "SplitRatios",
    "TrainConfig",
    "TrainHistory",
    "WavFormatError",
    "build_ann",
    "build_cnn",
    "build_lstm",
    "build_model",
    "downmix",
    "evaluate",
    "generate_synthetic_corpus",
    "load_corpus",
    "mfcc",
    "oversample",
    "read_wav",
    "resample",
    "save_corpus",
    "segment",
    "split",
    "train",
    "undersample",
    "write_wav",
]
