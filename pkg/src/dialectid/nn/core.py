"""Parameter container and initializers for the from-scratch network engine.

Everything is float64. Numpy is used as array storage and arithmetic only;
all differentiation lives in this package.
"""

from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    """An array does not fit the architecture it was handed to."""


class Tensor:
    """A value array with an optional gradient of the same shape."""

    __slots__ = ("values", "grad")

    def __init__(self, values: np.ndarray, grad: np.ndarray | None = None):
        self.values = np.asarray(values, dtype=np.float64)
        if grad is not None:
            grad = np.asarray(grad, dtype=np.float64)
            if grad.shape != self.values.shape:
                raise ValueError(
                    f"grad shape {grad.shape} does not match values shape "
                    f"{self.values.shape}"
                )
        self.grad = grad

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def size(self) -> int:
        return self.values.size

    def zero_grad(self):
        self.grad = np.zeros_like(self.values)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.values.shape})"


def glorot_uniform(rng: np.random.Generator, shape: tuple[int, ...],
                   fan_in: int, fan_out: int) -> np.ndarray:
    """Uniform(-limit, limit) with limit = sqrt(6 / (fan_in + fan_out))."""
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)
