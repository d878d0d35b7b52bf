"""Composite building blocks shared by the encoder and the mask heads.

Everything here is a thin composition of tensor ops, so gradients come
for free from the tape.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .tensor import Tensor


def standardize(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Per-channel standardization over the batch and spatial extent.

    x: (B, C, H, W); gamma, beta: (1, C, 1, 1) learned scale/shift.
    Statistics always come from the current batch.
    """
    return T.standardize(x, gamma, beta, axes=(0, 2, 3), eps=eps)


def conv_block(x: Tensor, p: dict, prefix: str) -> Tensor:
    """conv3x3 -> standardize -> relu. Params: {prefix}.w/.gamma/.beta."""
    y = T.conv2d(x, p[prefix + ".w"])
    y = standardize(y, p[prefix + ".gamma"], p[prefix + ".beta"])
    return T.relu(y)


def halve_hw(x: Tensor) -> Tensor:
    """2x2 mean pooling, stride 2, on the trailing two axes."""
    a = x[:, :, 0::2, 0::2]
    b = x[:, :, 0::2, 1::2]
    c = x[:, :, 1::2, 0::2]
    d = x[:, :, 1::2, 1::2]
    return T.mul(T.add(T.add(a, b), T.add(c, d)), 0.25)


def halve_h(x: Tensor) -> Tensor:
    """2x1 mean pooling along height only."""
    return T.mul(T.add(x[:, :, 0::2, :], x[:, :, 1::2, :]), 0.5)


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """x (B, Din) @ w (Din, Dout) + b."""
    y = T.matmul(x, w)
    return T.add(y, b) if b is not None else y


def he_normal(gen: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    return gen.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)


def xavier_normal(gen: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    return gen.normal(0.0, np.sqrt(2.0 / (fan_in + fan_out)), size=shape)
