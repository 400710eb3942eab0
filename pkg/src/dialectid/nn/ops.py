"""Forward and backward passes for every primitive the models use.

Convention: each forward returns (output, cache); the matching backward takes
the upstream gradient and the cache and returns gradients for its inputs.
Activations are batch-first; parameter gradients come back alongside input
gradients. All passes are exact derivatives of the forward arithmetic, which
the test suite checks against central finite differences.
"""

from __future__ import annotations

import numpy as np

# ---------------------------------------------------------------- dense

def dense_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    """y = x @ w.T + b for x (N, D_in), w (D_out, D_in), b (D_out,)."""
    return x @ w.T + b, x


def dense_backward(dy: np.ndarray, cache, w: np.ndarray):
    x = cache
    dx = dy @ w
    dw = dy.T @ x
    db = dy.sum(axis=0)
    return dx, dw, db


# ---------------------------------------------------------------- activations

def relu_forward(x: np.ndarray):
    mask = x > 0
    return x * mask, mask


def relu_backward(dy: np.ndarray, cache):
    return dy * cache


def sigmoid(x: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid_forward(x: np.ndarray):
    y = sigmoid(x)
    return y, y


def sigmoid_backward(dy: np.ndarray, cache):
    y = cache
    return dy * y * (1.0 - y)


def tanh_forward(x: np.ndarray):
    y = np.tanh(x)
    return y, y


def tanh_backward(dy: np.ndarray, cache):
    y = cache
    return dy * (1.0 - y * y)


def softmax(z: np.ndarray) -> np.ndarray:
    """Row-wise softmax along the last axis, stabilized by max subtraction."""
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_forward(z: np.ndarray):
    y = softmax(z)
    return y, y


def softmax_backward(dy: np.ndarray, cache):
    # dz_j = y_j * (dy_j - sum_k dy_k y_k)
    y = cache
    return y * (dy - (dy * y).sum(axis=-1, keepdims=True))


# ---------------------------------------------------------------- conv / pool

def conv2d_forward(x: np.ndarray, kernels: np.ndarray, b: np.ndarray):
    """Valid-mode stride-1 cross-correlation.

    x (N, H, W, C_in), kernels (K, k_h, k_w, C_in), b (K,); output
    (N, H - k_h + 1, W - k_w + 1, K).
    """
    _, h, w, c_in = x.shape
    n_k, k_h, k_w, k_c = kernels.shape
    if k_c != c_in:
        raise ValueError(f"kernel channels {k_c} do not match input channels {c_in}")
    if k_h > h or k_w > w:
        raise ValueError(f"kernel {k_h}x{k_w} larger than input {h}x{w}")
    windows = np.lib.stride_tricks.sliding_window_view(x, (k_h, k_w), axis=(1, 2))
    # windows: (N, H', W', C_in, k_h, k_w); contract against (K, k_h, k_w, C_in)
    y = np.tensordot(windows, kernels, axes=((4, 5, 3), (1, 2, 3))) + b
    return y, (x, windows)


def conv2d_backward(dy: np.ndarray, cache, kernels: np.ndarray):
    x, windows = cache
    _, k_h, k_w, _ = kernels.shape
    h_out, w_out = dy.shape[1], dy.shape[2]
    dkernels = np.tensordot(dy, windows, axes=((0, 1, 2), (0, 1, 2)))
    dkernels = dkernels.transpose(0, 2, 3, 1)  # (K, C, k_h, k_w) -> (K, k_h, k_w, C)
    db = dy.sum(axis=(0, 1, 2))
    dx = np.zeros_like(x)
    for i in range(k_h):
        for j in range(k_w):
            dx[:, i : i + h_out, j : j + w_out, :] += np.tensordot(
                dy, kernels[:, i, j, :], axes=((3,), (0,))
            )
    return dx, dkernels, db


def maxpool2d_forward(x: np.ndarray, pool: tuple[int, int], stride: tuple[int, int]):
    """Max over pool windows; windows that would overrun the edge are dropped."""
    _, h, w, _ = x.shape
    p_h, p_w = pool
    s_h, s_w = stride
    if p_h > h or p_w > w:
        raise ValueError(f"pool {p_h}x{p_w} does not fit input {h}x{w}")
    windows = np.lib.stride_tricks.sliding_window_view(x, (p_h, p_w), axis=(1, 2))
    windows = windows[:, ::s_h, ::s_w]  # (N, H_out, W_out, C, p_h, p_w)
    n, h_out, w_out, c = windows.shape[:4]
    flat = windows.reshape(n, h_out, w_out, c, p_h * p_w)
    argmax = flat.argmax(axis=-1)  # first index wins ties
    y = np.take_along_axis(flat, argmax[..., None], axis=-1)[..., 0]
    return y, (x.shape, pool, stride, argmax)


def maxpool2d_backward(dy: np.ndarray, cache):
    x_shape, (p_h, p_w), (s_h, s_w), argmax = cache
    n, h_out, w_out, c = argmax.shape
    dx = np.zeros(x_shape)
    ni, hi, wi, ci = np.ogrid[:n, :h_out, :w_out, :c]
    rows = hi * s_h + argmax // p_w
    cols = wi * s_w + argmax % p_w
    # pool windows may overlap, so gradients accumulate
    np.add.at(dx, (ni, rows, cols, ci), dy)
    return dx


# ---------------------------------------------------------------- batchnorm

def batchnorm_forward(
    x: np.ndarray,
    gamma: np.ndarray,
    beta: np.ndarray,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    momentum: float,
    eps: float,
    train: bool,
):
    """Per-channel normalization over all axes but the last.

    Training uses biased batch statistics and updates the running arrays in
    place via running = momentum * running + (1 - momentum) * batch.
    Inference normalizes with the running statistics.
    """
    axes = tuple(range(x.ndim - 1))
    if train:
        if x.shape[0] < 2:
            raise ValueError("batchnorm needs a batch of at least 2 in training mode")
        mean = x.mean(axis=axes)
        var = x.var(axis=axes)
        running_mean *= momentum
        running_mean += (1.0 - momentum) * mean
        running_var *= momentum
        running_var += (1.0 - momentum) * var
    else:
        mean = running_mean
        var = running_var
    inv_std = 1.0 / np.sqrt(var + eps)
    x_hat = (x - mean) * inv_std
    y = gamma * x_hat + beta
    return y, (x_hat, inv_std, gamma, axes, train)


def batchnorm_backward(dy: np.ndarray, cache):
    x_hat, inv_std, gamma, axes, train = cache
    dgamma = (dy * x_hat).sum(axis=axes)
    dbeta = dy.sum(axis=axes)
    dx_hat = dy * gamma
    if not train:
        return dx_hat * inv_std, dgamma, dbeta
    m = np.prod([x_hat.shape[a] for a in axes])
    dx = (inv_std / m) * (
        m * dx_hat
        - dx_hat.sum(axis=axes)
        - x_hat * (dx_hat * x_hat).sum(axis=axes)
    )
    return dx, dgamma, dbeta


# ---------------------------------------------------------------- dropout

def dropout_forward(x: np.ndarray, rate: float, train: bool,
                    rng: np.random.Generator | None = None):
    """Inverted dropout: zero with probability rate, scale kept units by
    1 / (1 - rate). Inference is the identity."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must lie in [0, 1), got {rate}")
    if not train or rate == 0.0:
        return x, None
    if rng is None:
        raise ValueError("training-mode dropout needs a random generator")
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return x * mask, mask


def dropout_backward(dy: np.ndarray, cache):
    return dy if cache is None else dy * cache


# ---------------------------------------------------------------- lstm cell

def lstm_cell_step(x_t: np.ndarray, h_prev: np.ndarray, c_prev: np.ndarray,
                   w: np.ndarray, b: np.ndarray):
    """One LSTM step over the concatenation [h_prev, x_t].

    w packs the four gate matrices as rows [input; forget; output; candidate],
    shape (4H, H + X); b likewise (4H,). Returns (h, c, cache).

        i = sigmoid(W_i [h, x] + b_i)      f = sigmoid(W_f [h, x] + b_f)
        o = sigmoid(W_o [h, x] + b_o)      g = tanh(W_c [h, x] + b_c)
        c = f * c_prev + i * g             h = o * tanh(c)
    """
    hidden = h_prev.shape[-1]
    x_cat = np.concatenate([h_prev, x_t], axis=-1)
    z = x_cat @ w.T + b
    i = sigmoid(z[:, :hidden])
    f = sigmoid(z[:, hidden : 2 * hidden])
    o = sigmoid(z[:, 2 * hidden : 3 * hidden])
    g = np.tanh(z[:, 3 * hidden :])
    c = f * c_prev + i * g
    tanh_c = np.tanh(c)
    h = o * tanh_c
    return h, c, (x_cat, i, f, o, g, c_prev, tanh_c)


def lstm_cell_backward(dh: np.ndarray, dc: np.ndarray, cache, w: np.ndarray):
    """Backward through one step. dh/dc are gradients w.r.t. this step's
    outputs; returns (dx, dh_prev, dc_prev, dw, db)."""
    x_cat, i, f, o, g, c_prev, tanh_c = cache
    hidden = i.shape[-1]
    do = dh * tanh_c
    dc_total = dc + dh * o * (1.0 - tanh_c * tanh_c)
    di = dc_total * g
    dg = dc_total * i
    df = dc_total * c_prev
    dc_prev = dc_total * f
    dz = np.concatenate(
        [
            di * i * (1.0 - i),
            df * f * (1.0 - f),
            do * o * (1.0 - o),
            dg * (1.0 - g * g),
        ],
        axis=-1,
    )
    dw = dz.T @ x_cat
    db = dz.sum(axis=0)
    dx_cat = dz @ w
    return dx_cat[:, hidden:], dx_cat[:, :hidden], dc_prev, dw, db


# ---------------------------------------------------------------- loss

PROB_FLOOR = 1e-12


def cross_entropy(probs: np.ndarray, labels: np.ndarray) -> float:
    """Mean negative log probability of the true class, probabilities clamped
    to [1e-12, 1] before the log."""
    picked = probs[np.arange(len(labels)), labels]
    return float(-np.log(np.clip(picked, PROB_FLOOR, 1.0)).mean())


def softmax_cross_entropy_grad(probs: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Gradient of mean cross-entropy w.r.t. the pre-softmax logits:
    (probs - onehot) / N."""
    grad = probs.copy()
    grad[np.arange(len(labels)), labels] -= 1.0
    return grad / len(labels)
