"""Iterative radix-2 FFT, vectorized over leading axes."""

from __future__ import annotations

from functools import lru_cache

import numpy as np


def is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


@lru_cache(maxsize=None)
def _bit_reversal_permutation(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.intp)
    for b in range(bits):
        rev = (rev << 1) | ((idx >> b) & 1)
    rev.setflags(write=False)
    return rev


def fft(x: np.ndarray) -> np.ndarray:
    """Decimation-in-time Cooley-Tukey FFT along the last axis.

    The transform length must be a power of two. Works on any leading batch
    shape and always returns complex128.
    """
    x = np.asarray(x)
    n = x.shape[-1]
    if not is_power_of_two(n):
        raise ValueError(f"FFT length must be a power of two, got {n}")
    y = np.ascontiguousarray(x, dtype=np.complex128)[..., _bit_reversal_permutation(n)]
    lead = y.shape[:-1]
    m = 2
    while m <= n:
        half = m // 2
        twiddle = np.exp((-2j * np.pi / m) * np.arange(half))
        v = y.reshape(lead + (n // m, m))
        even = v[..., :half].copy()
        odd = v[..., half:] * twiddle
        v[..., :half] = even + odd
        v[..., half:] = even - odd
        m *= 2
    return y
