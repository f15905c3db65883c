#!/usr/bin/env python3
# -*- coding: utf-8 -*-
# data.py

"""
Synthetic token-classification data.

Each label owns a disjoint block of *signal* tokens; the remaining ids are
noise. An example of label ``c`` holds a few signal tokens of ``c`` at
random positions among noise tokens, padded with ``PAD_ID`` to a fixed
length. Counting signal tokens recovers the label, so clean examples are
perfectly separable. Training labels are flipped to a different class with
probability ``noise_rate``; validation and test labels stay clean.
"""

import logging
from dataclasses import asdict, dataclass

import numpy as np

from . import constants, jsonify, utils, validate

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SyntheticSpec:
    """Shape and seed of a synthetic dataset."""

    n_examples: int = 10000
    n_labels: int = 3
    vocab_size: int = 64
    seq_len: int = 16
    signal_tokens_per_label: int = 4
    noise_rate: float = 0.05
    seed: int = 0

    def __post_init__(self):
        validate.synthetic_spec(self)

    def signal_tokens(self, label):
        """Token ids owned by ``label``."""
        start = 1 + label * self.signal_tokens_per_label
        return np.arange(start, start + self.signal_tokens_per_label)

    def noise_tokens(self):
        return np.arange(1 + self.n_labels * self.signal_tokens_per_label, self.vocab_size)

    def to_json(self):
        return asdict(self)

    @classmethod
    def from_json(cls, dct):
        return jsonify.build_dataclass(cls, dct)


@dataclass(frozen=True)
class Batch:
    """Token ids ``[B, S]``, labels ``[B]`` and a pad mask ``[B, S]`` that is
    ``True`` at padding.
    """

    token_ids: np.ndarray
    labels: np.ndarray
    pad_mask: np.ndarray

    def __len__(self):
        return len(self.labels)


class Split:
    """An indexed collection of examples.

    Args:
        token_ids (np.ndarray): ``[n, seq_len]`` token ids.
        labels (np.ndarray): ``[n]`` labels.
    """

    def __init__(self, token_ids, labels):
        self.token_ids = utils.freeze(np.asarray(token_ids, dtype=np.int64))
        self.labels = utils.freeze(np.asarray(labels, dtype=np.int64))
        self.pad_mask = utils.freeze(self.token_ids == constants.PAD_ID)

    def __len__(self):
        return len(self.labels)

    def __eq__(self, other):
        return (
            isinstance(other, Split)
            and np.array_equal(self.token_ids, other.token_ids)
            and np.array_equal(self.labels, other.labels)
        )

    def __hash__(self):
        return hash((utils.np_hash(self.token_ids), utils.np_hash(self.labels)))

    def __repr__(self):
        return "Split(n={}, seq_len={})".format(len(self), self.token_ids.shape[1])

    def batch(self, indices):
        indices = np.asarray(indices, dtype=np.int64)
        return Batch(
            self.token_ids[indices], self.labels[indices], self.pad_mask[indices]
        )

    def batches(self, batch_size):
        """Consecutive batches in index order; the last may be short."""
        for start in range(0, len(self), batch_size):
            yield self.batch(np.arange(start, min(start + batch_size, len(self))))

    def subset(self, indices):
        indices = np.asarray(indices, dtype=np.int64)
        return Split(self.token_ids[indices], self.labels[indices])


class Dataset:
    """Train, validation and test splits of one synthetic task."""

    def __init__(self, spec, train, val, test):
        self.spec = spec
        self.train = train
        self.val = val
        self.test = test

    def __eq__(self, other):
        return isinstance(other, Dataset) and all(
            getattr(self, name) == getattr(other, name)
            for name in ("spec", "train", "val", "test")
        )

    def __hash__(self):
        return hash((self.spec, self.train, self.val, self.test))

    def __repr__(self):
        return "Dataset(train={}, val={}, test={})".format(
            len(self.train), len(self.val), len(self.test)
        )


def _sample_examples(spec, labels, rng):
    """Draw token sequences for the given clean labels."""
    n = len(labels)
    noise = spec.noise_tokens()
    token_ids = np.full((n, spec.seq_len), constants.PAD_ID, dtype=np.int64)
    lengths = rng.integers(max(1, spec.seq_len // 2), spec.seq_len + 1, size=n)
    for i, (label, length) in enumerate(zip(labels, lengths)):
        n_signal = max(1, length // 4)
        row = rng.choice(spec.signal_tokens(label), size=length)
        if noise.size:
            row[n_signal:] = rng.choice(noise, size=length - n_signal)
        token_ids[i, :length] = rng.permutation(row)
    return token_ids


def _split_indices(n, rng):
    order = rng.permutation(n)
    n_train = int(round(constants.TRAIN_FRACTION * n))
    n_val = int(round(constants.VAL_FRACTION * n))
    return order[:n_train], order[n_train : n_train + n_val], order[n_train + n_val :]


def flip_labels(labels, n_labels, rate, rng):
    """Replace each label, with probability ``rate``, by a different label
    drawn uniformly.
    """
    labels = np.array(labels)
    flip = rng.random(len(labels)) < rate
    shift = rng.integers(1, n_labels, size=len(labels))
    labels[flip] = (labels[flip] + shift[flip]) % n_labels
    return labels


def _generate(spec, purpose, label_map=None):
    rng = utils.rng_for(spec.seed, purpose)
    labels = rng.permutation(np.arange(spec.n_examples) % spec.n_labels)
    token_ids = _sample_examples(spec, labels, rng)
    if label_map is not None:
        labels = label_map[labels]

    split_rng = utils.rng_for(spec.seed, purpose, "split")
    train, val, test = _split_indices(spec.n_examples, split_rng)
    train_labels = flip_labels(
        labels[train],
        spec.n_labels,
        spec.noise_rate,
        utils.rng_for(spec.seed, purpose, "noise"),
    )
    return Dataset(
        spec,
        Split(token_ids[train], train_labels),
        Split(token_ids[val], labels[val]),
        Split(token_ids[test], labels[test]),
    )


def generate(spec):
    """Generate a dataset, split 80/10/10.

    The result is a deterministic function of ``spec`` (including its seed).

    Example:
        >>> ds = generate(SyntheticSpec(n_examples=100, seed=3))
        >>> len(ds.train), len(ds.val), len(ds.test)
        (80, 10, 10)
        >>> ds == generate(SyntheticSpec(n_examples=100, seed=3))
        True
    """
    validate.synthetic_spec(spec)
    dataset = _generate(spec, "generate")
    log.debug("Generated %r from %s", dataset, spec)
    return dataset


def sample_batch(spec, batch_size, seed):
    """Draw ``batch_size`` clean examples of ``spec``'s distribution from a
    stream keyed by ``seed``.
    """
    validate.synthetic_spec(spec)
    rng = utils.rng_for(spec.seed, "batch", seed)
    labels = rng.integers(0, spec.n_labels, size=batch_size)
    return Split(_sample_examples(spec, labels, rng), labels).batch(np.arange(batch_size))


def derangement(n, rng):
    """A random permutation of ``range(n)`` without fixed points."""
    while True:
        perm = rng.permutation(n)
        if not np.any(perm == np.arange(n)):
            return perm


def pretext(spec):
    """Generate a pretext dataset for backbone pretraining.

    Inputs come from the same distribution as ``generate(spec)`` but from an
    independent stream, and labels are permuted by a fixed derangement, so
    pretrained features transfer while the head must be relearned.
    """
    validate.synthetic_spec(spec)
    label_map = derangement(spec.n_labels, utils.rng_for(spec.seed, "pretext", "labels"))
    return _generate(spec, "pretext", label_map=label_map)


def count_oracle(spec, token_ids):
    """Classify by counting each label's signal tokens; ties go to the
    lowest label.
    """
    token_ids = np.asarray(token_ids)
    counts = np.stack(
        [np.isin(token_ids, spec.signal_tokens(c)).sum(axis=1) for c in range(spec.n_labels)],
        axis=1,
    )
    return np.argmax(counts, axis=1)
