"""WAV decoding, channel downmix, resampling, and fixed-length segmentation.

All audio is carried as float64 in [-1.0, 1.0]. The decoder accepts 16-bit PCM
RIFF/WAVE with one or two channels; everything downstream works on mono clips.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

# Default processing rate for the feature pipeline; source files at other rates
# are resampled down to this before segmentation.
PIPELINE_RATE_HZ = 22050

# Segment durations the experiment grid sweeps over.
SEGMENT_DURATIONS_S = (1, 3, 5, 10, 30)

_INT16_FULL_SCALE = 32768.0


class WavFormatError(ValueError):
    """Byte stream is not a decodable 16-bit PCM RIFF/WAVE file."""


@dataclass(frozen=True)
class AudioClip:
    """Decoded PCM audio, one row per channel.

    Attributes:
        samples: float64 array of shape (channels, n_samples), values in [-1, 1].
        sample_rate_hz: sampling rate in Hz, positive.
    """

    samples: np.ndarray
    sample_rate_hz: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 2 or samples.shape[0] < 1:
            raise ValueError("samples must have shape (channels, n_samples)")
        if self.sample_rate_hz <= 0:
            raise ValueError("sample_rate_hz must be positive")
        if samples.size and float(np.max(np.abs(samples))) > 1.0:
            raise ValueError("samples must lie in [-1.0, 1.0]")
        object.__setattr__(self, "samples", samples)

    @property
    def channels(self) -> int:
        return self.samples.shape[0]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def duration_s(self) -> float:
        return self.n_samples / self.sample_rate_hz

    def mono(self) -> np.ndarray:
        """The single channel of a mono clip as a 1-D array."""
        if self.channels != 1:
            raise ValueError(f"clip has {self.channels} channels, downmix first")
        return self.samples[0]


@dataclass(frozen=True)
class SegmentSpec:
    """Length of the consecutive non-overlapping windows cut from a clip."""

    duration_s: int

    def __post_init__(self):
        if not isinstance(self.duration_s, int) or self.duration_s < 1:
            raise ValueError("duration_s must be a positive integer")

    def window_samples(self, sample_rate_hz: int) -> int:
        return self.duration_s * sample_rate_hz


def read_wav(data: bytes) -> AudioClip:
    """Decode a RIFF/WAVE byte string into an AudioClip.

    Accepts uncompressed PCM, 16 bits per sample, 1 or 2 channels. Unknown
    chunks are skipped. Integer samples are scaled by 1/32768.

    Raises:
        WavFormatError: malformed container or unsupported encoding; the
            message names the offending chunk.
    """
    if len(data) < 12:
        raise WavFormatError("RIFF header: file shorter than 12 bytes")
    if data[0:4] != b"RIFF":
        raise WavFormatError("RIFF header: missing 'RIFF' tag")
    if data[8:12] != b"WAVE":
        raise WavFormatError("RIFF header: missing 'WAVE' form type")

    fmt = None
    pcm = None
    pos = 12
    while pos + 8 <= len(data):
        chunk_id = data[pos : pos + 4]
        (chunk_size,) = struct.unpack_from("<I", data, pos + 4)
        body = data[pos + 8 : pos + 8 + chunk_size]
        if len(body) < chunk_size:
            raise WavFormatError(
                f"{chunk_id.decode('ascii', 'replace')} chunk: truncated body "
                f"({len(body)} of {chunk_size} bytes)"
            )
        if chunk_id == b"fmt ":
            if chunk_size < 16:
                raise WavFormatError("fmt chunk: shorter than 16 bytes")
            fmt = struct.unpack_from("<HHIIHH", body, 0)
        elif chunk_id == b"data":
            pcm = body
        # chunks are word aligned; odd sizes carry a pad byte
        pos += 8 + chunk_size + (chunk_size & 1)

    if fmt is None:
        raise WavFormatError("fmt chunk: missing")
    audio_format, channels, sample_rate, _byte_rate, _block_align, bits = fmt
    if audio_format != 1:
        raise WavFormatError(f"fmt chunk: codec {audio_format} is not PCM")
    if bits != 16:
        raise WavFormatError(f"fmt chunk: unsupported bit depth {bits}, want 16")
    if channels not in (1, 2):
        raise WavFormatError(f"fmt chunk: unsupported channel count {channels}")
    if sample_rate <= 0:
        raise WavFormatError(f"fmt chunk: invalid sample rate {sample_rate}")
    if pcm is None:
        raise WavFormatError("data chunk: missing")
    if len(pcm) % (2 * channels) != 0:
        raise WavFormatError(
            f"data chunk: size {len(pcm)} is not a multiple of the "
            f"{2 * channels}-byte frame"
        )

    ints = np.frombuffer(pcm, dtype="<i2")
    samples = ints.reshape(-1, channels).T.astype(np.float64) / _INT16_FULL_SCALE
    return AudioClip(samples=samples, sample_rate_hz=sample_rate)


def write_wav(clip: AudioClip) -> bytes:
    """Encode a mono clip as 16-bit PCM RIFF/WAVE bytes.

    Samples are rounded to the nearest 16-bit code and clamped at full scale,
    so read_wav(write_wav(c)) differs from c by at most 2**-15 per sample.
    """
    x = clip.mono()
    codes = np.clip(np.rint(x * _INT16_FULL_SCALE), -32768, 32767).astype("<i2")
    pcm = codes.tobytes()
    fmt_body = struct.pack("<HHIIHH", 1, 1, clip.sample_rate_hz,
                           clip.sample_rate_hz * 2, 2, 16)
    size = 4 + (8 + len(fmt_body)) + (8 + len(pcm))
    out = bytearray()
    out += b"RIFF" + struct.pack("<I", size) + b"WAVE"
    out += b"fmt " + struct.pack("<I", len(fmt_body)) + fmt_body
    out += b"data" + struct.pack("<I", len(pcm)) + pcm
    if len(pcm) & 1:
        out += b"\x00"
    return bytes(out)


def downmix(clip: AudioClip) -> AudioClip:
    """Average all channels into one. Mono input is returned unchanged."""
    if clip.channels == 1:
        return clip
    mixed = clip.samples.mean(axis=0, keepdims=True)
    return AudioClip(samples=mixed, sample_rate_hz=clip.sample_rate_hz)


def resample(clip: AudioClip, target_rate_hz: int) -> AudioClip:
    """Resample by linear interpolation.

    Output length is floor(n_in * target / source). Output sample i is taken
    at position i * source / target in input-sample coordinates, with edge
    values clamped. Same-rate input is returned unchanged.
    """
    if target_rate_hz <= 0:
        raise ValueError(f"target_rate_hz must be positive, got {target_rate_hz}")
    source_rate = clip.sample_rate_hz
    if target_rate_hz == source_rate:
        return clip
    n_in = clip.n_samples
    n_out = n_in * target_rate_hz // source_rate
    positions = np.arange(n_out) * (source_rate / target_rate_hz)
    grid = np.arange(n_in)
    rows = [np.interp(positions, grid, ch) for ch in clip.samples]
    resampled = np.vstack(rows) if rows else np.zeros((clip.channels, 0))
    return AudioClip(samples=resampled, sample_rate_hz=target_rate_hz)


def segment(clip: AudioClip, spec: SegmentSpec) -> list[AudioClip]:
    """Cut a mono clip into consecutive non-overlapping fixed-length windows.

    The trailing remainder shorter than one window is dropped; a clip shorter
    than one window yields an empty list.
    """
    x = clip.mono()
    window = spec.window_samples(clip.sample_rate_hz)
    n_segments = len(x) // window
    return [
        AudioClip(samples=x[k * window : (k + 1) * window][None, :],
                  sample_rate_hz=clip.sample_rate_hz)
        for k in range(n_segments)
    ]
