"""MFCC feature extraction.

Stage order: pre-emphasis, framing with a Hann window, radix-2 FFT power
spectrum, triangular mel filterbank, natural-log energies, orthonormal DCT-II,
coefficient selection. Coefficient 0 is kept.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from dialectid.audio_io import AudioClip
from dialectid.fft import fft, is_power_of_two


@dataclass(frozen=True)
class MfccConfig:
    """Feature extraction parameters.

    Frame and hop lengths are given in milliseconds and converted to sample
    counts with floor(ms * rate / 1000) at the clip's rate.
    """

    frame_ms: float = 25.0
    hop_ms: float = 10.0
    n_fft: int = 1024
    n_mels: int = 26
    n_coeffs: int = 13
    pre_emphasis: float = 0.97
    log_floor: float = 1e-10

    def __post_init__(self):
        if self.frame_ms <= 0 or self.hop_ms <= 0:
            raise ValueError("frame_ms and hop_ms must be positive")
        if self.hop_ms > self.frame_ms:
            raise ValueError("hop_ms must not exceed frame_ms")
        if not is_power_of_two(self.n_fft):
            raise ValueError(f"n_fft must be a power of two, got {self.n_fft}")
        if self.n_mels < 1:
            raise ValueError("n_mels must be positive")
        if not 1 <= self.n_coeffs <= self.n_mels:
            raise ValueError("n_coeffs must lie in [1, n_mels]")
        if not 0.0 <= self.pre_emphasis < 1.0:
            raise ValueError("pre_emphasis must lie in [0, 1)")
        if self.log_floor <= 0.0:
            raise ValueError("log_floor must be positive")

    def frame_samples(self, sample_rate_hz: int) -> int:
        return int(self.frame_ms * sample_rate_hz) // 1000

    def hop_samples(self, sample_rate_hz: int) -> int:
        return int(self.hop_ms * sample_rate_hz) // 1000


@dataclass(frozen=True)
class FeatureMatrix:
    """MFCC output, shape (frame_count, coeff_count), all values finite."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ValueError("feature matrix must be 2-D (frames, coeffs)")
        if not np.isfinite(values).all():
            raise ValueError("feature matrix contains non-finite values")
        object.__setattr__(self, "values", values)

    @property
    def frame_count(self) -> int:
        return self.values.shape[0]

    @property
    def coeff_count(self) -> int:
        return self.values.shape[1]


def pre_emphasize(signal: np.ndarray, alpha: float) -> np.ndarray:
    """First-order high-pass: y[0] = x[0], y[n] = x[n] - alpha * x[n-1]."""
    x = np.asarray(signal, dtype=np.float64)
    y = x.copy()
    y[1:] -= alpha * x[:-1]
    return y


def hann_window(length: int) -> np.ndarray:
    """Hann taper w[n] = 0.5 - 0.5 * cos(2 pi n / (L - 1))."""
    if length == 1:
        return np.ones(1)
    n = np.arange(length)
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * n / (length - 1))


def frame_and_window(signal: np.ndarray, frame_len: int, hop: int) -> np.ndarray:
    """Slice a signal into overlapping frames and apply a Hann window.

    Returns an array of shape (frame_count, frame_len) with
    frame_count = 1 + floor((n - frame_len) / hop). The tail that does not
    fill a frame is dropped.
    """
    x = np.asarray(signal, dtype=np.float64)
    if frame_len < 1 or hop < 1:
        raise ValueError("frame_len and hop must be positive")
    if x.ndim != 1:
        raise ValueError("signal must be 1-D")
    if len(x) < frame_len:
        raise ValueError(
            f"signal of {len(x)} samples is shorter than one {frame_len}-sample frame"
        )
    frames = np.lib.stride_tricks.sliding_window_view(x, frame_len)[::hop]
    return frames * hann_window(frame_len)


def power_spectrum(frames: np.ndarray, n_fft: int) -> np.ndarray:
    """One-sided power spectrum |X[k]|^2 / n_fft for k = 0 .. n_fft/2.

    Frames are zero-padded to n_fft and transformed with the radix-2 FFT,
    so n_fft must be a power of two and at least the frame length.
    """
    frames = np.asarray(frames, dtype=np.float64)
    if not is_power_of_two(n_fft):
        raise ValueError(f"n_fft must be a power of two, got {n_fft}")
    if frames.shape[-1] > n_fft:
        raise ValueError(
            f"frame length {frames.shape[-1]} exceeds n_fft {n_fft}"
        )
    padded = np.zeros(frames.shape[:-1] + (n_fft,))
    padded[..., : frames.shape[-1]] = frames
    spectrum = fft(padded)[..., : n_fft // 2 + 1]
    return (spectrum.real**2 + spectrum.imag**2) / n_fft


def hz_to_mel(hz):
    return 2595.0 * np.log10(1.0 + np.asarray(hz, dtype=np.float64) / 700.0)


def mel_to_hz(mel):
    return 700.0 * (10.0 ** (np.asarray(mel, dtype=np.float64) / 2595.0) - 1.0)


def mel_points(n_mels: int, sample_rate_hz: int) -> np.ndarray:
    """n_mels + 2 uniformly spaced mel points from 0 Hz to the Nyquist rate."""
    return np.linspace(0.0, hz_to_mel(sample_rate_hz / 2.0), n_mels + 2)


def mel_triangle(points: np.ndarray, m: int, mel):
    """Filter m of the bank as a function of mel coordinate.

    Rises linearly from points[m] to 1 at points[m + 1], falls to 0 at
    points[m + 2], and is 0 outside. Adjacent interior filters sum to 1
    between their centers because the points are uniformly spaced.
    """
    mel = np.asarray(mel, dtype=np.float64)
    left, center, right = points[m], points[m + 1], points[m + 2]
    rising = (mel - left) / (center - left)
    falling = (right - mel) / (right - center)
    return np.maximum(0.0, np.minimum(rising, falling))


def mel_filterbank(n_mels: int, n_fft: int, sample_rate_hz: int) -> np.ndarray:
    """Triangular unit-peak mel filterbank sampled at FFT bin frequencies.

    Returns shape (n_mels, n_fft // 2 + 1). Filter centers are uniform on the
    mel scale between 0 and the Nyquist rate; each triangle is evaluated at
    the mel coordinate of every bin.
    """
    points = mel_points(n_mels, sample_rate_hz)
    bin_hz = np.arange(n_fft // 2 + 1) * (sample_rate_hz / n_fft)
    bin_mel = hz_to_mel(bin_hz)
    bank = np.zeros((n_mels, n_fft // 2 + 1))
    for m in range(n_mels):
        bank[m] = mel_triangle(points, m, bin_mel)
    return bank


def log_mel_energies(power: np.ndarray, bank: np.ndarray, log_floor: float) -> np.ndarray:
    """Natural log of floored filterbank energies, shape (frames, n_mels)."""
    return np.log(power @ bank.T + log_floor)


@lru_cache(maxsize=None)
def _dct_matrix(n_coeffs: int, n_input: int) -> np.ndarray:
    # orthonormal DCT-II, rows k = 0 .. n_coeffs - 1
    n = np.arange(n_input)
    k = np.arange(n_coeffs)[:, None]
    mat = np.cos(np.pi * k * (2 * n + 1) / (2 * n_input))
    mat *= np.sqrt(2.0 / n_input)
    mat[0] = np.sqrt(1.0 / n_input)
    mat.setflags(write=False)
    return mat


def dct_ii(energies: np.ndarray, n_coeffs: int) -> np.ndarray:
    """Orthonormal DCT-II along the last axis, keeping coefficients 0 .. n_coeffs - 1."""
    energies = np.asarray(energies, dtype=np.float64)
    n_input = energies.shape[-1]
    if not 1 <= n_coeffs <= n_input:
        raise ValueError(f"n_coeffs must lie in [1, {n_input}], got {n_coeffs}")
    return energies @ _dct_matrix(n_coeffs, n_input).T


@lru_cache(maxsize=None)
def _filterbank_cached(n_mels: int, n_fft: int, sample_rate_hz: int) -> np.ndarray:
    bank = mel_filterbank(n_mels, n_fft, sample_rate_hz)
    bank.setflags(write=False)
    return bank


def mfcc(clip: AudioClip, config: MfccConfig = MfccConfig()) -> FeatureMatrix:
    """Full MFCC pipeline for one mono clip."""
    emphasized = pre_emphasize(clip.mono(), config.pre_emphasis)
    frames = frame_and_window(
        emphasized,
        config.frame_samples(clip.sample_rate_hz),
        config.hop_samples(clip.sample_rate_hz),
    )
    power = power_spectrum(frames, config.n_fft)
    bank = _filterbank_cached(config.n_mels, config.n_fft, clip.sample_rate_hz)
    energies = log_mel_energies(power, bank, config.log_floor)
    return FeatureMatrix(values=dct_ii(energies, config.n_coeffs))
