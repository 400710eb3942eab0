"""From-scratch differentiable network engine: tensor container, primitive
forward/backward ops, layer objects, and the Adam optimizer."""

from dialectid.nn.core import ShapeError, Tensor, glorot_uniform
from dialectid.nn.layers import (
    LSTM,
    AddChannel,
    BatchNorm,
    Conv2D,
    Dense,
    Dropout,
    Flatten,
    Layer,
    LstmCellParams,
    MaxPool2D,
    ReLU,
    Sequential,
    Sigmoid,
    Softmax,
    Tanh,
)
from dialectid.nn.optim import Adam, adam_init, adam_step, clip_global_norm

__all__ = [
    "Adam",
    "AddChannel",
    "BatchNorm",
    "Conv2D",
    "Dense",
    "Dropout",
    "Flatten",
    "LSTM",
    "Layer",
    "LstmCellParams",
    "MaxPool2D",
    "ReLU",
    "Sequential",
    "ShapeError",
    "Sigmoid",
    "Softmax",
    "Tanh",
    "Tensor",
    "adam_init",
    "adam_step",
    "clip_global_norm",
    "glorot_uniform",
]
