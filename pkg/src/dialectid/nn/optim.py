"""Adam with bias correction, plus global-norm gradient clipping."""

from __future__ import annotations

import numpy as np

from dialectid.nn.core import Tensor


def adam_init(params: list[np.ndarray]) -> dict:
    return {
        "step": 0,
        "m": [np.zeros_like(p) for p in params],
        "v": [np.zeros_like(p) for p in params],
    }


def adam_step(
    params: list[np.ndarray],
    grads: list[np.ndarray],
    state: dict,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-7,
) -> dict:
    """One bias-corrected Adam update, applied to the params in place.

        m <- beta1 m + (1 - beta1) g        v <- beta2 v + (1 - beta2) g^2
        p <- p - lr * mhat / (sqrt(vhat) + eps)
    """
    state["step"] += 1
    t = state["step"]
    corr1 = 1.0 - beta1**t
    corr2 = 1.0 - beta2**t
    for p, g, m, v in zip(params, grads, state["m"], state["v"]):
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        p -= lr * (m / corr1) / (np.sqrt(v / corr2) + eps)
    return state


def clip_global_norm(grads: list[np.ndarray], max_norm: float) -> float:
    """Scale all gradients down so their joint L2 norm is at most max_norm.
    Returns the pre-clip norm."""
    total = float(np.sqrt(sum(float((g * g).sum()) for g in grads)))
    if total > max_norm and total > 0.0:
        scale = max_norm / total
        for g in grads:
            g *= scale
    return total


class Adam:
    """Stateful wrapper binding adam_step to a model's parameter tensors."""

    def __init__(self, params: list[Tensor], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-7):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.state = adam_init([p.values for p in params])

    def step(self):
        grads = []
        for p in self.params:
            if p.grad is None:
                raise ValueError("parameter has no gradient; run backward first")
            grads.append(p.grad)
        adam_step(
            [p.values for p in self.params],
            grads,
            self.state,
            self.lr,
            self.beta1,
            self.beta2,
            self.eps,
        )
