"""The three classifier architectures, built from the engine's layers.

All builders take input_shape = (frames, coeffs) and produce a Sequential
ending in a 6-way (configurable) softmax. Weights are Glorot-uniform from the
given seed, biases zero except LSTM forget gates at 1.
"""

from __future__ import annotations

import json

import numpy as np

from dialectid.nn import (
    LSTM,
    AddChannel,
    ShapeError,
    BatchNorm,
    Conv2D,
    Dense,
    Dropout,
    Flatten,
    MaxPool2D,
    ReLU,
    Sequential,
    Softmax,
)

MODEL_KINDS = ("ann", "cnn", "lstm")

ANN_HIDDEN_WIDTHS = (512, 256, 64)
LSTM_UNITS = (64, 64)
LSTM_DENSE_WIDTH = 64
CNN_DENSE_WIDTH = 64
HEAD_DROPOUT_RATE = 0.3
LSTM_GRAD_CLIP_NORM = 5.0

# (filters, kernel, pool, pool stride, batchnorm) per conv stage
CNN_STAGES = (
    (32, (3, 3), (3, 3), (2, 2), True),
    (32, (3, 3), (3, 3), (2, 2), True),
    (32, (2, 2), (2, 2), (2, 2), False),
)


def _check_input_shape(input_shape) -> tuple[int, int]:
    if len(input_shape) != 2 or any(int(s) < 1 for s in input_shape):
        raise ShapeError(f"input_shape must be two positive ints, got {input_shape}")
    return int(input_shape[0]), int(input_shape[1])


def build_ann(input_shape, n_classes: int = 6, seed: int = 0) -> Sequential:
    """Flatten, then dense 512 / 256 / 64 with ReLU, then softmax output."""
    frames, coeffs = _check_input_shape(input_shape)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    layers = [Flatten()]
    width = frames * coeffs
    for hidden in ANN_HIDDEN_WIDTHS:
        layers += [Dense(width, hidden, rng), ReLU()]
        width = hidden
    layers += [Dense(width, n_classes, rng), Softmax()]
    return Sequential(layers, "ann", (frames, coeffs), n_classes)


def cnn_stage_shapes(input_shape) -> list[tuple[str, int, int, int]]:
    """Feature-map size after every conv/pool stage, or ShapeError naming the
    first stage where the map no longer fits the kernel or pool."""
    h, w = _check_input_shape(input_shape)
    c = 1
    shapes = []
    for idx, (filters, kernel, pool, stride, _bn) in enumerate(CNN_STAGES, start=1):
        k_h, k_w = kernel
        if h < k_h or w < k_w:
            raise ShapeError(
                f"stage conv{idx}: feature map {h}x{w}x{c} is smaller than "
                f"the {k_h}x{k_w} kernel"
            )
        h, w, c = h - k_h + 1, w - k_w + 1, filters
        shapes.append((f"conv{idx}", h, w, c))
        p_h, p_w = pool
        if h < p_h or w < p_w:
            raise ShapeError(
                f"stage pool{idx}: feature map {h}x{w}x{c} is smaller than "
                f"the {p_h}x{p_w} pool"
            )
        s_h, s_w = stride
        h, w = (h - p_h) // s_h + 1, (w - p_w) // s_w + 1
        shapes.append((f"pool{idx}", h, w, c))
    return shapes


def build_cnn(input_shape, n_classes: int = 6, seed: int = 0,
              dropout_rate: float = HEAD_DROPOUT_RATE) -> Sequential:
    """Three conv stages (32 filters each; batchnorm on the first two), then
    dense 64, dropout, softmax output."""
    frames, coeffs = _check_input_shape(input_shape)
    shapes = cnn_stage_shapes(input_shape)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    layers: list = [AddChannel()]
    in_channels = 1
    for (filters, kernel, pool, stride, bn) in CNN_STAGES:
        layers.append(Conv2D(filters, kernel[0], kernel[1], in_channels, rng))
        if bn:
            layers.append(BatchNorm(filters))
        layers.append(ReLU())
        layers.append(MaxPool2D(pool[0], pool[1], stride[0], stride[1]))
        in_channels = filters
    final_h, final_w, final_c = shapes[-1][1:]
    layers += [
        Flatten(),
        Dense(final_h * final_w * final_c, CNN_DENSE_WIDTH, rng),
        ReLU(),
        Dropout(dropout_rate),
        Dense(CNN_DENSE_WIDTH, n_classes, rng),
        Softmax(),
    ]
    return Sequential(layers, "cnn", (frames, coeffs), n_classes)


def build_lstm(input_shape, n_classes: int = 6, seed: int = 0,
               dropout_rate: float = HEAD_DROPOUT_RATE) -> Sequential:
    """Two stacked 64-unit LSTMs (first returns the full sequence), dense 64,
    dropout, softmax output. Gradients are clipped at global norm 5."""
    frames, coeffs = _check_input_shape(input_shape)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    layers = [
        LSTM(coeffs, LSTM_UNITS[0], return_sequences=True, rng=rng),
        LSTM(LSTM_UNITS[0], LSTM_UNITS[1], return_sequences=False, rng=rng),
        Dense(LSTM_UNITS[1], LSTM_DENSE_WIDTH, rng),
        ReLU(),
        Dropout(dropout_rate),
        Dense(LSTM_DENSE_WIDTH, n_classes, rng),
        Softmax(),
    ]
    return Sequential(layers, "lstm", (frames, coeffs), n_classes,
                      grad_clip_norm=LSTM_GRAD_CLIP_NORM)


def build_model(kind: str, input_shape, n_classes: int = 6, seed: int = 0) -> Sequential:
    if kind == "ann":
        return build_ann(input_shape, n_classes, seed)
    if kind == "cnn":
        return build_cnn(input_shape, n_classes, seed)
    if kind == "lstm":
        return build_lstm(input_shape, n_classes, seed)
    raise ValueError(f"unknown model kind {kind!r}, want one of {MODEL_KINDS}")


def cnn_neuron_accounting(n_classes: int = 6) -> list[int]:
    """Per-stage neuron counts: filters times kernel elements for each conv
    stage, then the dense widths. Sums to 774 for six classes."""
    stages = [filters * k_h * k_w for (filters, (k_h, k_w), _, _, _) in CNN_STAGES]
    return stages + [CNN_DENSE_WIDTH, n_classes]


def ann_parameter_count(input_shape, n_classes: int = 6) -> int:
    frames, coeffs = _check_input_shape(input_shape)
    widths = [frames * coeffs, *ANN_HIDDEN_WIDTHS, n_classes]
    return sum(w_in * w_out + w_out for w_in, w_out in zip(widths, widths[1:]))


def cnn_parameter_count(input_shape, n_classes: int = 6) -> int:
    shapes = cnn_stage_shapes(input_shape)
    total = 0
    in_channels = 1
    for (filters, (k_h, k_w), _, _, bn) in CNN_STAGES:
        total += filters * k_h * k_w * in_channels + filters
        if bn:
            total += 2 * filters
        in_channels = filters
    final_h, final_w, final_c = shapes[-1][1:]
    flat = final_h * final_w * final_c
    total += flat * CNN_DENSE_WIDTH + CNN_DENSE_WIDTH
    total += CNN_DENSE_WIDTH * n_classes + n_classes
    return total


def lstm_parameter_count(input_shape, n_classes: int = 6) -> int:
    _, coeffs = _check_input_shape(input_shape)
    total = 0
    in_size = coeffs
    for units in LSTM_UNITS:
        total += 4 * units * (units + in_size) + 4 * units
        in_size = units
    total += LSTM_UNITS[-1] * LSTM_DENSE_WIDTH + LSTM_DENSE_WIDTH
    total += LSTM_DENSE_WIDTH * n_classes + n_classes
    return total


def parameter_count(kind: str, input_shape, n_classes: int = 6) -> int:
    if kind == "ann":
        return ann_parameter_count(input_shape, n_classes)
    if kind == "cnn":
        return cnn_parameter_count(input_shape, n_classes)
    if kind == "lstm":
        return lstm_parameter_count(input_shape, n_classes)
    raise ValueError(f"unknown model kind {kind!r}")


def save_checkpoint(model: Sequential, optimizer_state: dict | None = None,
                    rng_state: dict | None = None) -> bytes:
    """Serialize architecture, parameters, buffers, optimizer and RNG state to
    JSON bytes. Floats are written in shortest round-trip form."""
    dropout_rates = [l.rate for l in model.layers if isinstance(l, Dropout)]
    doc = {
        "architecture": {
            "kind": model.kind,
            "input_shape": list(model.input_shape),
            "n_classes": model.n_classes,
            "dropout_rate": dropout_rates[0] if dropout_rates else None,
        },
        "params": [
            {"shape": list(p.shape), "values": p.values.ravel().tolist()}
            for p in model.parameters()
        ],
        "buffers": [
            {"shape": list(b.shape), "values": b.ravel().tolist()}
            for b in model.buffers()
        ],
        "optimizer": None,
        "rng": rng_state,
    }
    if optimizer_state is not None:
        doc["optimizer"] = {
            "step": optimizer_state["step"],
            "m": [a.ravel().tolist() for a in optimizer_state["m"]],
            "v": [a.ravel().tolist() for a in optimizer_state["v"]],
        }
    return json.dumps(doc, separators=(",", ":")).encode("utf-8")


def load_checkpoint(data: bytes) -> tuple[Sequential, dict | None, dict | None]:
    """Rebuild a model from save_checkpoint output. Returns
    (model, optimizer_state, rng_state)."""
    doc = json.loads(data.decode("utf-8"))
    arch = doc["architecture"]
    kind = arch["kind"]
    shape = tuple(arch["input_shape"])
    rate = arch.get("dropout_rate")
    if kind == "ann" or rate is None:
        model = build_model(kind, shape, arch["n_classes"])
    elif kind == "cnn":
        model = build_cnn(shape, arch["n_classes"], dropout_rate=rate)
    else:
        model = build_lstm(shape, arch["n_classes"], dropout_rate=rate)
    params = model.parameters()
    if len(doc["params"]) != len(params):
        raise ValueError(
            f"checkpoint has {len(doc['params'])} parameter tensors, "
            f"model expects {len(params)}"
        )
    for p, saved in zip(params, doc["params"]):
        if list(p.shape) != saved["shape"]:
            raise ValueError(
                f"checkpoint tensor shape {saved['shape']} does not match "
                f"model shape {list(p.shape)}"
            )
        p.values[...] = np.array(saved["values"]).reshape(saved["shape"])
    buffers = model.buffers()
    if len(doc["buffers"]) != len(buffers):
        raise ValueError("checkpoint buffer count does not match model")
    for b, saved in zip(buffers, doc["buffers"]):
        b[...] = np.array(saved["values"]).reshape(saved["shape"])
    optimizer_state = None
    if doc.get("optimizer") is not None:
        opt = doc["optimizer"]
        optimizer_state = {
            "step": opt["step"],
            "m": [np.array(vals).reshape(p.shape) for vals, p in zip(opt["m"], params)],
            "v": [np.array(vals).reshape(p.shape) for vals, p in zip(opt["v"], params)],
        }
    return model, optimizer_state, doc.get("rng")
