#!/usr/bin/env python3
# -*- coding: utf-8 -*-
# layers.py

"""
Transformer building blocks and the parameter-efficient decorations that
plug into them.

All functions take and return |Tensor| objects and record on the active tape.
"""

import numpy as np

from . import autodiff as ad
from . import exceptions


def linear(x, w, b):
    """Affine map ``x @ w + b``."""
    return ad.add(ad.matmul(x, w), b)


def split_heads(x, n_heads):
    """Reshape ``[B, S, d]`` to ``[B, n_heads, S, d / n_heads]``."""
    batch, seq, d = x.shape
    x = ad.reshape(x, (batch, seq, n_heads, d // n_heads))
    return ad.transpose(x, (0, 2, 1, 3))


def merge_heads(x):
    """Inverse of ``split_heads``."""
    batch, n_heads, seq, d_head = x.shape
    x = ad.transpose(x, (0, 2, 1, 3))
    return ad.reshape(x, (batch, seq, n_heads * d_head))


def prefix_to_heads(prefix, n_heads):
    """Reshape a ``[length, d]`` prefix to ``[n_heads, length, d / n_heads]``."""
    length, d = prefix.shape
    prefix = ad.reshape(prefix, (length, n_heads, d // n_heads))
    return ad.transpose(prefix, (1, 0, 2))


def prefix_attention(q, k, v, prefix_k=None, prefix_v=None, key_bias=None):
    """Scaled dot-product attention with optional prefix vectors.

    Attention is computed over ``[prefix_k; k]`` and ``[prefix_v; v]``. Prefix
    positions are never masked.

    Args:
        q (Tensor): Queries, ``[B, h, S, d_head]``.
        k (Tensor): Keys, ``[B, h, S, d_head]``.
        v (Tensor): Values, ``[B, h, S, d_head]``.

    Keyword Args:
        prefix_k (Tensor): Prefix keys, ``[h, P, d_head]``; ``None`` or
            ``P = 0`` gives vanilla attention.
        prefix_v (Tensor): Prefix values, same shape as ``prefix_k``.
        key_bias (np.ndarray): Additive bias over the ``S`` input key
            positions, broadcastable to ``[B, 1, 1, S]``.

    Returns:
        Tensor: The attention output, ``[B, h, S, d_head]``.
    """
    batch, n_heads, seq, d_head = q.shape
    if k.shape != q.shape or v.shape != q.shape:
        raise exceptions.DimensionError(
            "q {}, k {} and v {} must have the same shape.".format(
                q.shape, k.shape, v.shape
            )
        )
    if key_bias is not None:
        key_bias = np.broadcast_to(key_bias, (batch, 1, 1, seq))

    if (prefix_k is None) != (prefix_v is None):
        raise exceptions.DimensionError("Prefix keys and values come in pairs.")
    if prefix_k is not None and prefix_k.shape[1] > 0:
        length = prefix_k.shape[1]
        expected = (n_heads, length, d_head)
        if prefix_k.shape != expected or prefix_v.shape != expected:
            raise exceptions.DimensionError(
                "Prefixes {} and {} must have shape {}.".format(
                    prefix_k.shape, prefix_v.shape, expected
                )
            )
        target = (batch, n_heads, length, d_head)
        pk = ad.broadcast_to(ad.reshape(prefix_k, (1,) + expected), target)
        pv = ad.broadcast_to(ad.reshape(prefix_v, (1,) + expected), target)
        k = ad.concat([pk, k], axis=2)
        v = ad.concat([pv, v], axis=2)
        if key_bias is not None:
            key_bias = np.concatenate(
                [np.zeros((batch, 1, 1, length)), key_bias], axis=-1
            )

    scores = ad.mul(ad.matmul(q, ad.transpose(k, (0, 1, 3, 2))), 1.0 / np.sqrt(d_head))
    if key_bias is not None:
        scores = ad.add(scores, ad.Tensor.wrap(key_bias))
    return ad.matmul(ad.softmax_rows(scores), v)


def adapter_forward(h, w_down, w_up, b_down, b_up):
    """Bottleneck adapter with a residual connection.

    Computes ``h + relu(h @ w_down + b_down) @ w_up + b_up``.

    Example:
        >>> from fedpet.autodiff import Tensor
        >>> out = adapter_forward(
        ...     Tensor([[1.0, 0.0]]), Tensor([[1.0], [0.0]]),
        ...     Tensor([[2.0, 0.0]]), Tensor([0.0]), Tensor([0.0, 0.0]))
        >>> out.value
        array([[3., 0.]])
    """
    d = h.shape[-1]
    bottleneck = w_down.shape[-1] if w_down.ndim == 2 else None
    if (
        bottleneck is None
        or w_down.shape != (d, bottleneck)
        or w_up.shape != (bottleneck, d)
        or b_down.shape != (bottleneck,)
        or b_up.shape != (d,)
    ):
        raise exceptions.DimensionError(
            "Adapter shapes do not chain {} -> bottleneck -> {}: down {} {}, "
            "up {} {}.".format(d, d, w_down.shape, b_down.shape, w_up.shape, b_up.shape)
        )
    return ad.add(h, linear(ad.relu(linear(h, w_down, b_down)), w_up, b_up))


def lora_effective_weight(w, a, b, scaling):
    """Low-rank adapted weight ``w + (scaling / r) * b @ a``.

    Args:
        w (Tensor): Frozen weight, ``[d, k]``.
        a (Tensor): Down factor, ``[r, k]``.
        b (Tensor): Up factor, ``[d, r]``.
        scaling (float): LoRA scaling; divided by the rank ``r``.

    Raises:
        DimensionError: If the shapes do not chain or ``r`` is not below
            both extents of ``w``.
    """
    if a.ndim != 2 or b.ndim != 2 or w.ndim != 2:
        raise exceptions.DimensionError("LoRA factors and weight must be matrices.")
    rank = a.shape[0]
    if b.shape[1] != rank or w.shape != (b.shape[0], a.shape[1]):
        raise exceptions.DimensionError(
            "LoRA shapes do not chain: w {}, a {}, b {}.".format(w.shape, a.shape, b.shape)
        )
    if rank >= min(w.shape):
        raise exceptions.DimensionError(
            "LoRA rank {} must be below min{} of the weight.".format(rank, w.shape)
        )
    return ad.add(w, ad.mul(ad.matmul(b, a), scaling / rank))


def mean_pool(x, pad_mask):
    """Average ``[B, S, d]`` hidden states over non-pad positions."""
    keep = (~np.asarray(pad_mask, dtype=bool)).astype(np.float64)
    counts = np.maximum(keep.sum(axis=1, keepdims=True), 1.0)
    total = ad.sum(ad.mul(x, ad.Tensor.wrap(keep[:, :, None])), axis=1)
    return ad.mul(total, ad.Tensor.wrap(1.0 / counts))
