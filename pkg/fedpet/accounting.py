#!/usr/bin/env python3
# -*- coding: utf-8 -*-
# accounting.py

"""
Closed-form parameter, communication and storage costs.

Counts are computed from an |ArchShape| without building a model, so they
scale to RoBERTa-base. One megabyte is 10**6 bytes.

The parameter conventions are those of the simulated encoder: the backbone
includes a pooler-style dense layer (``head.dense``) and, when
``include_head`` is set, the task output layer (``head.out``). Every tuning
method other than FullFT trains the whole classification head (dense and
output layers) unless its spec freezes it.
"""

import csv
import logging
from dataclasses import asdict, dataclass

import numpy as np

from . import checkpoint, config, constants, jsonify, model, utils, validate
from .delta import Adapter, DeltaSpec, backbone_trainable, delta_shapes
from .exceptions import ConfigError
from .models import CostReport

log = logging.getLogger(__name__)

ACCOUNT_CSV_HEADER = [
    "method",
    "trainable_scalars",
    "payload_mb",
    "ratio_vs_full",
    "per_round_mb",
    "total_gb",
]


@dataclass(frozen=True)
class ArchShape:
    """Shape of an encoder classifier for accounting purposes.

    Attributes:
        type_vocab (int): 1 if the encoder has a token-type embedding.
        include_head (bool): Whether ``backbone_param_count`` includes the
            task output layer.
        bytes_per_scalar (int): Scalar width used for byte costs.
    """

    vocab_size: int
    max_positions: int
    type_vocab: int
    d_model: int
    n_layers: int
    d_ff: int
    n_labels: int
    include_head: bool = True
    bytes_per_scalar: int = 4

    def __post_init__(self):
        validate.arch_shape(self)

    @classmethod
    def roberta_base(cls):
        """The bundled RoBERTa-base shape."""
        return cls.from_json(utils.load_json_data("roberta_base.json"))

    @classmethod
    def from_model_config(cls, model_config, include_head=True, bytes_per_scalar=4):
        """The shape of a simulated encoder."""
        return cls(
            vocab_size=model_config.vocab_size,
            max_positions=model_config.max_positions,
            type_vocab=0,
            d_model=model_config.d_model,
            n_layers=model_config.n_layers,
            d_ff=model_config.d_ff,
            n_labels=model_config.n_labels,
            include_head=include_head,
            bytes_per_scalar=bytes_per_scalar,
        )

    def to_json(self):
        return asdict(self)

    @classmethod
    def from_json(cls, dct):
        return jsonify.build_dataclass(cls, dct)


# Parameter counts
# =============================================================================


def embedding_param_count(shape):
    """Word, position and token-type tables plus the embedding layer norm."""
    d = shape.d_model
    return (shape.vocab_size + shape.max_positions + shape.type_vocab) * d + 2 * d


def layer_param_count(shape):
    """One encoder layer.

    Four attention projections with biases, the attention layer norm, the
    feed-forward input and output projections with biases and the
    feed-forward layer norm.
    """
    d, f = shape.d_model, shape.d_ff
    attention = 4 * (d * d + d) + 2 * d
    feed_forward = (d * f + f) + (f * d + d) + 2 * d
    return attention + feed_forward


def dense_param_count(shape):
    """The pooler-style dense layer of the head."""
    return shape.d_model * shape.d_model + shape.d_model


def output_param_count(shape):
    """The task output layer of the head."""
    return shape.d_model * shape.n_labels + shape.n_labels


def head_param_count(shape):
    """The classification head: ``d*d + d + d*L + L``."""
    return dense_param_count(shape) + output_param_count(shape)


def backbone_param_count(shape):
    """Scalars in the backbone.

    Example:
        >>> backbone_param_count(ArchShape.roberta_base())
        124645632
    """
    total = (
        embedding_param_count(shape)
        + shape.n_layers * layer_param_count(shape)
        + dense_param_count(shape)
    )
    if shape.include_head:
        total += output_param_count(shape)
    return total


def model_param_count(shape):
    """Scalars of the whole classifier, head included."""
    return (
        embedding_param_count(shape)
        + shape.n_layers * layer_param_count(shape)
        + head_param_count(shape)
    )


def _bias_param_count(shape):
    # Every `.b` outside the head: the embedding layer-norm shift, then per
    # layer 4 projection biases, a layer-norm shift, 2 feed-forward biases
    # and another layer-norm shift.
    d, f = shape.d_model, shape.d_ff
    return d + shape.n_layers * (4 * d + d + f + d + d)


def trainable_param_count(shape, spec):
    """Scalars trained and exchanged by ``spec``.

    Example:
        >>> trainable_param_count(ArchShape.roberta_base(), DeltaSpec.bitfit())
        694274
    """
    if spec.method == "fullft":
        return model_param_count(shape)
    d, n_layers = shape.d_model, shape.n_layers
    head = head_param_count(shape) if spec.head_trainable else 0
    if spec.method == "bitfit":
        return _bias_param_count(shape) + head
    if spec.method == "adapter":
        m = Adapter.bottleneck(d, spec)
        return 2 * n_layers * (2 * d * m + d + m) + head
    if spec.method == "lora":
        return len(spec.targets) * n_layers * 2 * d * spec.rank + head
    if spec.method == "prefix":
        return n_layers * 2 * spec.prefix_length * d + head
    # Registered methods without a closed form are counted from their layout.
    return int(sum(np.prod(s, dtype=np.int64) for _, s in trainable_layout(shape, spec)))


def trainable_layout(shape, spec):
    """``(name, shape)`` of the trainable set, in lexicographic order.

    Nothing is allocated, so this works at RoBERTa-base scale.
    """
    backbone = model.parameter_shapes(
        shape.vocab_size,
        shape.max_positions,
        shape.d_model,
        shape.n_layers,
        shape.d_ff,
        shape.n_labels,
        type_vocab=shape.type_vocab,
    )
    layout = {name: backbone[name] for name in backbone_trainable(backbone, spec)}
    layout.update(delta_shapes(shape.d_model, shape.n_layers, spec))
    return sorted(layout.items())


def header_overhead(shape, spec, width=None):
    """Fraction of the payload wire encoding that is not scalar data."""
    width = shape.bytes_per_scalar if width is None else width
    layout = trainable_layout(shape, spec)
    encoded = checkpoint.encoded_length(layout, width)
    data = trainable_param_count(shape, spec) * width
    return (encoded - data) / encoded


# Communication and storage
# =============================================================================


def comm_budget(spec, shape, k, t, bytes_per_scalar=None):
    """Communication cost of ``t`` rounds with ``k`` sampled clients.

    Args:
        spec (DeltaSpec): Tuning method.
        shape (ArchShape): Architecture.
        k (int): Clients per round; each downloads and uploads one payload.
        t (int): Rounds.

    Keyword Args:
        bytes_per_scalar (int): Defaults to ``shape.bytes_per_scalar``.

    Returns:
        CostReport: Payload, per-round and total bytes and the ratio of the
        FullFT payload to this one.
    """
    if k < 1 or t < 1:
        raise ConfigError("K and T must be at least 1; got K={}, T={}".format(k, t))
    width = shape.bytes_per_scalar if bytes_per_scalar is None else bytes_per_scalar
    scalars = trainable_param_count(shape, spec)
    payload = scalars * width
    full = trainable_param_count(shape, DeltaSpec.full()) * width
    per_round = 2 * k * payload
    return CostReport(
        method=spec.label,
        trainable_scalars=scalars,
        payload_bytes=payload,
        per_round_bytes=per_round,
        total_bytes=t * per_round,
        ratio_vs_full=full / payload,
    )


def storage_cost(shape, spec, n_tasks=1):
    """Bytes a client stores to serve ``n_tasks`` downstream tasks.

    FullFT keeps one full model per task; other methods keep one shared
    backbone and one trainable set per task.
    """
    width = shape.bytes_per_scalar
    per_task = trainable_param_count(shape, spec) * width
    if spec.method == "fullft":
        return n_tasks * per_task
    return model_param_count(shape) * width + n_tasks * per_task


def storage_ratio(shape, spec, n_tasks=1):
    """FullFT storage over the storage of ``spec`` for ``n_tasks`` tasks."""
    return storage_cost(shape, DeltaSpec.full(), n_tasks) / storage_cost(
        shape, spec, n_tasks
    )


def account_rows(shape, specs, k, t):
    """One |CostReport| per spec."""
    reports = [comm_budget(spec, shape, k, t) for spec in specs]
    for report in reports:
        log.info(
            "%s: %s scalars, %.2fx vs FullFT",
            report.method,
            report.trainable_scalars,
            report.ratio_vs_full,
        )
    return reports


def account_row(report):
    """A row of the account CSV, rounded to ``config.PRECISION``."""
    return [
        report.method,
        report.trainable_scalars,
        round(report.payload_bytes / constants.MB, config.PRECISION),
        round(report.ratio_vs_full, config.PRECISION),
        round(report.per_round_bytes / constants.MB, config.PRECISION),
        round(report.total_bytes / constants.GB, config.PRECISION),
    ]


def write_account_csv(path, reports):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(ACCOUNT_CSV_HEADER)
        for report in reports:
            writer.writerow(account_row(report))


def default_specs():
    """The specs of the standard cost table: FullFT, BitFit, Adapter at
    reduction factors 64 and 16, LoRA ``r=8`` on ``q, v`` and Prefix.
    """
    return [
        DeltaSpec.full(),
        DeltaSpec.bitfit(),
        DeltaSpec.adapter(64),
        DeltaSpec.adapter(16),
        DeltaSpec.lora(8),
        DeltaSpec.prefix(8),
    ]
