#!/usr/bin/env python3
# -*- coding: utf-8 -*-
# validate.py

"""
Methods for validating configs and arguments.

Every function returns ``True`` or raises ``ConfigError``, except ``batch``,
which raises ``InputError`` or ``DimensionError``.
"""

import numpy as np

from .exceptions import ConfigError, DimensionError, InputError

# pylint: disable=redefined-outer-name

SCENARIOS = ("standard", "cross-silo", "large-scale")
METHODS = ("fullft", "adapter", "lora", "bitfit", "prefix")
LORA_TARGETS = ("q", "k", "v", "o")
OPTIMIZERS = ("sgd", "adam")
ATTACK_MODES = ("delta", "gradient")


def _positive_ints(obj, names):
    for name in names:
        value = getattr(obj, name)
        if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
            raise ConfigError("`{}` must be an integer; got {!r}".format(name, value))
        if value < 1:
            raise ConfigError("`{}` must be at least 1; got {}".format(name, value))


def _in_range(name, value, low, high, closed_high=False):
    ok = low <= value <= high if closed_high else low <= value < high
    if not ok:
        raise ConfigError(
            "`{}` must be in [{}, {}{}; got {}".format(
                name, low, high, "]" if closed_high else ")", value
            )
        )


def model_config(cfg):
    """Validate a |ModelConfig|."""
    _positive_ints(
        cfg,
        ["vocab_size", "max_positions", "d_model", "n_layers", "n_heads", "d_ff", "n_labels"],
    )
    if cfg.d_model % cfg.n_heads:
        raise ConfigError(
            "d_model ({}) must be divisible by n_heads ({})".format(
                cfg.d_model, cfg.n_heads
            )
        )
    _in_range("dropout", cfg.dropout, 0.0, 1.0)
    return True


def batch(batch, cfg):
    """Validate a |Batch| against a |ModelConfig|.

    Raises:
        DimensionError: If the arrays have inconsistent shapes or the
            sequence is longer than ``max_positions``.
        InputError: If a token id or label is out of range.
    """
    token_ids = np.asarray(batch.token_ids)
    if token_ids.ndim != 2 or token_ids.shape[0] < 1:
        raise DimensionError(
            "token_ids must be a nonempty [batch, seq] matrix; got {}".format(
                token_ids.shape
            )
        )
    n, seq = token_ids.shape
    if seq > cfg.max_positions:
        raise DimensionError(
            "Sequence length {} exceeds max_positions {}".format(seq, cfg.max_positions)
        )
    if np.shape(batch.pad_mask) != (n, seq):
        raise DimensionError(
            "pad_mask {} must match token_ids {}".format(np.shape(batch.pad_mask), (n, seq))
        )
    if np.shape(batch.labels) != (n,):
        raise DimensionError("Expected {} labels; got {}".format(n, np.shape(batch.labels)))
    bad = token_ids[(token_ids < 0) | (token_ids >= cfg.vocab_size)]
    if bad.size:
        raise InputError("token id", int(bad[0]), cfg.vocab_size)
    labels = np.asarray(batch.labels)
    bad = labels[(labels < 0) | (labels >= cfg.n_labels)]
    if bad.size:
        raise InputError("label", int(bad[0]), cfg.n_labels)
    return True


def delta_spec(spec, model_config=None):
    """Validate a |DeltaSpec|, optionally against a model shape."""
    if spec.method not in METHODS:
        raise ConfigError(
            "Unknown tuning method {!r}; must be one of {}".format(spec.method, METHODS)
        )
    _positive_ints(spec, ["reduction_factor", "rank", "prefix_length"])
    if spec.scaling <= 0:
        raise ConfigError("LoRA `scaling` must be positive; got {}".format(spec.scaling))
    if not spec.targets or set(spec.targets) - set(LORA_TARGETS):
        raise ConfigError(
            "LoRA `targets` must be a nonempty subset of {}; got {}".format(
                LORA_TARGETS, spec.targets
            )
        )
    if len(set(spec.targets)) != len(spec.targets):
        raise ConfigError("LoRA `targets` repeat a projection: {}".format(spec.targets))
    if model_config is not None:
        if spec.method == "lora" and spec.rank >= model_config.d_model:
            raise ConfigError(
                "LoRA rank {} must be below d_model {}".format(
                    spec.rank, model_config.d_model
                )
            )
        if spec.method == "prefix" and 2 * spec.prefix_length > model_config.max_positions:
            raise ConfigError(
                "Prefix length {} exceeds max_positions / 2 = {}".format(
                    spec.prefix_length, model_config.max_positions / 2
                )
            )
    return True


def synthetic_spec(spec):
    """Validate a |SyntheticSpec|."""
    _positive_ints(
        spec, ["n_examples", "n_labels", "vocab_size", "seq_len", "signal_tokens_per_label"]
    )
    if spec.n_labels < 2:
        raise ConfigError("`n_labels` must be at least 2; got {}".format(spec.n_labels))
    if spec.seq_len < 2:
        raise ConfigError("`seq_len` must be at least 2; got {}".format(spec.seq_len))
    needed = 1 + spec.n_labels * spec.signal_tokens_per_label
    if needed > spec.vocab_size:
        raise ConfigError(
            "vocab_size {} cannot hold padding and {} disjoint signal tokens".format(
                spec.vocab_size, needed - 1
            )
        )
    _in_range("noise_rate", spec.noise_rate, 0.0, 1.0)
    if spec.seed < 0:
        raise ConfigError("`seed` must be non-negative; got {}".format(spec.seed))
    return True


def partition_config(cfg):
    """Validate a |PartitionConfig|."""
    if not cfg.alpha > 0:
        raise ConfigError("`alpha` must be positive; got {}".format(cfg.alpha))
    _positive_ints(cfg, ["n_clients"])
    if cfg.n_clients < 2:
        raise ConfigError("`n_clients` must be at least 2; got {}".format(cfg.n_clients))
    if cfg.min_per_client < 0:
        raise ConfigError(
            "`min_per_client` must be non-negative; got {}".format(cfg.min_per_client)
        )
    if cfg.seed < 0:
        raise ConfigError("`seed` must be non-negative; got {}".format(cfg.seed))
    return True


def optimizer_config(cfg):
    """Validate an |OptimizerConfig|."""
    if cfg.name not in OPTIMIZERS:
        raise ConfigError(
            "Unknown optimizer {!r}; must be one of {}".format(cfg.name, OPTIMIZERS)
        )
    if cfg.lr < 0:
        raise ConfigError("`lr` must be non-negative; got {}".format(cfg.lr))
    _in_range("momentum", cfg.momentum, 0.0, 1.0)
    _in_range("beta1", cfg.beta1, 0.0, 1.0)
    _in_range("beta2", cfg.beta2, 0.0, 1.0)
    if not cfg.eps > 0:
        raise ConfigError("`eps` must be positive; got {}".format(cfg.eps))
    return True


def federation_config(cfg):
    """Validate a |FederationConfig|."""
    _positive_ints(
        cfg, ["total_clients", "sample_size", "rounds", "local_epochs", "batch_size"]
    )
    sample_size(cfg.total_clients, cfg.sample_size)
    if cfg.scenario not in SCENARIOS:
        raise ConfigError(
            "Unknown scenario {!r}; must be one of {}".format(cfg.scenario, SCENARIOS)
        )
    optimizer_config(cfg.optimizer)
    return True


def sample_size(total, k):
    if not 1 <= k <= total:
        raise ConfigError(
            "Cannot sample {} clients from {}; need 1 <= K <= C".format(k, total)
        )
    return True


def attack_config(cfg):
    """Validate an |AttackConfig|."""
    _positive_ints(cfg, ["max_iters", "restarts"])
    for name in ["attack_lr", "fd_step"]:
        if not getattr(cfg, name) > 0:
            raise ConfigError("`{}` must be positive".format(name))
    if cfg.mode not in ATTACK_MODES:
        raise ConfigError(
            "Unknown attack mode {!r}; must be one of {}".format(cfg.mode, ATTACK_MODES)
        )
    if not isinstance(cfg.leak_prior, bool):
        raise ConfigError("`leak_prior` must be a boolean")
    return True


def arch_shape(shape):
    """Validate an |ArchShape|."""
    _positive_ints(
        shape,
        ["vocab_size", "max_positions", "d_model", "n_layers", "d_ff", "n_labels"],
    )
    if shape.type_vocab not in (0, 1):
        raise ConfigError("`type_vocab` must be 0 or 1; got {}".format(shape.type_vocab))
    if shape.bytes_per_scalar not in (2, 4, 8):
        raise ConfigError(
            "`bytes_per_scalar` must be 2, 4 or 8; got {}".format(shape.bytes_per_scalar)
        )
    return True
