"""Layer objects composing the functional ops into trainable models.

Each layer keeps its own forward cache, assigns parameter gradients on
backward, and reports a one-line description for architecture checks.
"""

from __future__ import annotations

import numpy as np

from dialectid.nn import ops
from dialectid.nn.core import ShapeError, Tensor, glorot_uniform


class Layer:
    def params(self) -> list[Tensor]:
        return []

    def buffers(self) -> list[np.ndarray]:
        """Non-trainable state that training mutates (batchnorm running stats)."""
        return []

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dy: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def describe(self) -> dict:
        return {"layer": type(self).__name__.lower()}


class Flatten(Layer):
    def forward(self, x, train=False):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dy):
        return dy.reshape(self._shape)


class AddChannel(Layer):
    """(N, H, W) -> (N, H, W, 1) so 2-D feature maps enter the conv stack."""

    def forward(self, x, train=False):
        return x[..., None]

    def backward(self, dy):
        return dy[..., 0]


class Dense(Layer):
    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator):
        self.w = Tensor(glorot_uniform(rng, (out_dim, in_dim), in_dim, out_dim))
        self.b = Tensor(np.zeros(out_dim))

    def params(self):
        return [self.w, self.b]

    def forward(self, x, train=False):
        y, self._cache = ops.dense_forward(x, self.w.values, self.b.values)
        return y

    def backward(self, dy):
        dx, dw, db = ops.dense_backward(dy, self._cache, self.w.values)
        self.w.grad = dw
        self.b.grad = db
        return dx

    def describe(self):
        out_dim, in_dim = self.w.shape
        return {"layer": "dense", "in": in_dim, "out": out_dim}


class ReLU(Layer):
    def forward(self, x, train=False):
        y, self._cache = ops.relu_forward(x)
        return y

    def backward(self, dy):
        return ops.relu_backward(dy, self._cache)


class Tanh(Layer):
    def forward(self, x, train=False):
        y, self._cache = ops.tanh_forward(x)
        return y

    def backward(self, dy):
        return ops.tanh_backward(dy, self._cache)


class Sigmoid(Layer):
    def forward(self, x, train=False):
        y, self._cache = ops.sigmoid_forward(x)
        return y

    def backward(self, dy):
        return ops.sigmoid_backward(dy, self._cache)


class Softmax(Layer):
    def forward(self, x, train=False):
        y, self._cache = ops.softmax_forward(x)
        return y

    def backward(self, dy):
        return ops.softmax_backward(dy, self._cache)


class Conv2D(Layer):
    def __init__(self, n_filters: int, kernel_h: int, kernel_w: int,
                 in_channels: int, rng: np.random.Generator):
        receptive = kernel_h * kernel_w
        self.kernels = Tensor(
            glorot_uniform(
                rng,
                (n_filters, kernel_h, kernel_w, in_channels),
                receptive * in_channels,
                receptive * n_filters,
            )
        )
        self.b = Tensor(np.zeros(n_filters))

    def params(self):
        return [self.kernels, self.b]

    def forward(self, x, train=False):
        y, self._cache = ops.conv2d_forward(x, self.kernels.values, self.b.values)
        return y

    def backward(self, dy):
        dx, dk, db = ops.conv2d_backward(dy, self._cache, self.kernels.values)
        self.kernels.grad = dk
        self.b.grad = db
        return dx

    def describe(self):
        n_filters, k_h, k_w, in_c = self.kernels.shape
        return {"layer": "conv2d", "filters": n_filters, "kernel": [k_h, k_w], "in_channels": in_c}


class MaxPool2D(Layer):
    def __init__(self, pool_h: int, pool_w: int, stride_h: int, stride_w: int):
        self.pool = (pool_h, pool_w)
        self.stride = (stride_h, stride_w)

    def forward(self, x, train=False):
        y, self._cache = ops.maxpool2d_forward(x, self.pool, self.stride)
        return y

    def backward(self, dy):
        return ops.maxpool2d_backward(dy, self._cache)

    def describe(self):
        return {"layer": "maxpool2d", "pool": list(self.pool), "stride": list(self.stride)}


class BatchNorm(Layer):
    def __init__(self, n_channels: int, momentum: float = 0.9, eps: float = 1e-5):
        self.gamma = Tensor(np.ones(n_channels))
        self.beta = Tensor(np.zeros(n_channels))
        self.running_mean = np.zeros(n_channels)
        self.running_var = np.ones(n_channels)
        self.momentum = momentum
        self.eps = eps

    def params(self):
        return [self.gamma, self.beta]

    def buffers(self):
        return [self.running_mean, self.running_var]

    def forward(self, x, train=False):
        y, self._cache = ops.batchnorm_forward(
            x, self.gamma.values, self.beta.values,
            self.running_mean, self.running_var,
            self.momentum, self.eps, train,
        )
        return y

    def backward(self, dy):
        dx, dgamma, dbeta = ops.batchnorm_backward(dy, self._cache)
        self.gamma.grad = dgamma
        self.beta.grad = dbeta
        return dx

    def describe(self):
        return {"layer": "batchnorm", "channels": int(self.gamma.size)}


class Dropout(Layer):
    def __init__(self, rate: float):
        if not 0.0 <= rate < 1.0:
            raise ValueError(f"dropout rate must lie in [0, 1), got {rate}")
        self.rate = rate
        self.rng = np.random.default_rng(0)

    def forward(self, x, train=False):
        y, self._cache = ops.dropout_forward(x, self.rate, train, self.rng)
        return y

    def backward(self, dy):
        return ops.dropout_backward(dy, self._cache)

    def describe(self):
        return {"layer": "dropout", "rate": self.rate}


class LstmCellParams:
    """Gate weights over the concatenation [h_prev, x_t].

    One packed (4H, H + X) matrix holds the four gates as row blocks in the
    order input, forget, output, candidate; the per-gate views below are
    windows into it. Biases start at zero except the forget gate at 1.
    """

    def __init__(self, input_size: int, hidden_size: int, rng: np.random.Generator):
        self.input_size = input_size
        self.hidden_size = hidden_size
        fan_in = hidden_size + input_size
        blocks = [
            glorot_uniform(rng, (hidden_size, fan_in), fan_in, hidden_size)
            for _ in range(4)
        ]
        self.w = Tensor(np.concatenate(blocks, axis=0))
        bias = np.zeros(4 * hidden_size)
        bias[hidden_size : 2 * hidden_size] = 1.0
        self.b = Tensor(bias)

    def _row_block(self, k: int) -> slice:
        h = self.hidden_size
        return slice(k * h, (k + 1) * h)

    @property
    def w_i(self) -> np.ndarray:
        return self.w.values[self._row_block(0)]

    @property
    def w_f(self) -> np.ndarray:
        return self.w.values[self._row_block(1)]

    @property
    def w_o(self) -> np.ndarray:
        return self.w.values[self._row_block(2)]

    @property
    def w_c(self) -> np.ndarray:
        return self.w.values[self._row_block(3)]

    @property
    def b_i(self) -> np.ndarray:
        return self.b.values[self._row_block(0)]

    @property
    def b_f(self) -> np.ndarray:
        return self.b.values[self._row_block(1)]

    @property
    def b_o(self) -> np.ndarray:
        return self.b.values[self._row_block(2)]

    @property
    def b_c(self) -> np.ndarray:
        return self.b.values[self._row_block(3)]


class LSTM(Layer):
    """Unidirectional LSTM over (N, T, X), zero initial state.

    return_sequences=True emits every hidden state (N, T, H); otherwise only
    the final one (N, H). Backward is full truncation-free BPTT.
    """

    def __init__(self, input_size: int, hidden_size: int,
                 return_sequences: bool, rng: np.random.Generator):
        self.cell = LstmCellParams(input_size, hidden_size, rng)
        self.return_sequences = return_sequences

    def params(self):
        return [self.cell.w, self.cell.b]

    def forward(self, x, train=False):
        n, steps, _ = x.shape
        hidden = self.cell.hidden_size
        h = np.zeros((n, hidden))
        c = np.zeros((n, hidden))
        self._caches = []
        outputs = np.empty((n, steps, hidden)) if self.return_sequences else None
        for t in range(steps):
            h, c, cache = ops.lstm_cell_step(
                x[:, t, :], h, c, self.cell.w.values, self.cell.b.values
            )
            self._caches.append(cache)
            if self.return_sequences:
                outputs[:, t, :] = h
        self._steps = steps
        self._input_size = x.shape[2]
        return outputs if self.return_sequences else h

    def backward(self, dy):
        steps = self._steps
        n = dy.shape[0]
        hidden = self.cell.hidden_size
        dw = np.zeros_like(self.cell.w.values)
        db = np.zeros_like(self.cell.b.values)
        dx = np.empty((n, steps, self._input_size))
        dh_next = np.zeros((n, hidden))
        dc_next = np.zeros((n, hidden))
        for t in range(steps - 1, -1, -1):
            dh = dh_next.copy()
            if self.return_sequences:
                dh += dy[:, t, :]
            elif t == steps - 1:
                dh += dy
            dx_t, dh_next, dc_next, dw_t, db_t = ops.lstm_cell_backward(
                dh, dc_next, self._caches[t], self.cell.w.values
            )
            dw += dw_t
            db += db_t
            dx[:, t, :] = dx_t
        self.cell.w.grad = dw
        self.cell.b.grad = db
        return dx

    def describe(self):
        return {
            "layer": "lstm",
            "units": self.cell.hidden_size,
            "return_sequences": self.return_sequences,
        }


class Sequential:
    """An ordered stack of layers ending in Softmax.

    forward returns class probabilities. backward takes the gradient at the
    pre-softmax logits (the joint softmax cross-entropy form) and so skips the
    final Softmax layer.
    """

    def __init__(self, layers: list[Layer], kind: str,
                 input_shape: tuple[int, ...], n_classes: int,
                 grad_clip_norm: float | None = None):
        if not isinstance(layers[-1], Softmax):
            raise ValueError("model must end with a Softmax layer")
        self.layers = layers
        self.kind = kind
        self.input_shape = tuple(input_shape)
        self.n_classes = n_classes
        self.grad_clip_norm = grad_clip_norm

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != len(self.input_shape) + 1 or x.shape[1:] != self.input_shape:
            raise ShapeError(
                f"{self.kind}: input shape {x.shape[1:]} does not match the "
                f"model input {self.input_shape}"
            )
        for layer in self.layers:
            x = layer.forward(x, train=train)
        return x

    def backward(self, dlogits: np.ndarray) -> np.ndarray:
        g = dlogits
        for layer in reversed(self.layers[:-1]):
            g = layer.backward(g)
        return g

    def parameters(self) -> list[Tensor]:
        found = []
        for layer in self.layers:
            found.extend(layer.params())
        return found

    def buffers(self) -> list[np.ndarray]:
        found = []
        for layer in self.layers:
            found.extend(layer.buffers())
        return found

    def parameter_count(self) -> int:
        return sum(p.size for p in self.parameters())

    def snapshot(self) -> list[np.ndarray]:
        """Copies of every parameter and buffer, for best-epoch restoration."""
        return [a.copy() for a in
                [p.values for p in self.parameters()] + self.buffers()]

    def restore(self, snap: list[np.ndarray]):
        arrays = [p.values for p in self.parameters()] + self.buffers()
        if len(snap) != len(arrays):
            raise ValueError("snapshot does not match model structure")
        for target, saved in zip(arrays, snap):
            target[...] = saved

    def reseed_dropout(self, seed):
        if not isinstance(seed, np.random.SeedSequence):
            seed = np.random.SeedSequence(seed)
        streams = seed.spawn(
            max(1, sum(isinstance(l, Dropout) for l in self.layers))
        )
        k = 0
        for layer in self.layers:
            if isinstance(layer, Dropout):
                layer.rng = np.random.default_rng(streams[k])
                k += 1

    def describe(self) -> dict:
        return {
            "kind": self.kind,
            "input_shape": list(self.input_shape),
            "n_classes": self.n_classes,
            "parameter_count": self.parameter_count(),
            "layers": [layer.describe() for layer in self.layers],
        }
