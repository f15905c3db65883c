#!/usr/bin/env python3
# -*- coding: utf-8 -*-
# partition.py

"""
Label-skewed (non-IID) partitioning of training data across clients.

For each class independently, proportions over clients are drawn from a
symmetric Dirichlet distribution with concentration ``alpha`` and the
class's examples are dealt out accordingly. Small ``alpha`` concentrates
each class on few clients; large ``alpha`` approaches a uniform split.
"""

import logging
from dataclasses import asdict, dataclass

import numpy as np

from . import jsonify, utils, validate
from .exceptions import ConfigError
from .models import PartitionPlan

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PartitionConfig:
    """Dirichlet concentration, client count, minimum client size and seed."""

    alpha: float = 1.0
    n_clients: int = 10
    min_per_client: int = 10
    seed: int = 0

    def __post_init__(self):
        validate.partition_config(self)

    def to_json(self):
        return asdict(self)

    @classmethod
    def from_json(cls, dct):
        return jsonify.build_dataclass(cls, dct)


def largest_remainder(proportions, total):
    """Round ``proportions * total`` to integers summing to ``total``.

    Leftover units go to the largest fractional parts; ties go to the lower
    index.

    Example:
        >>> largest_remainder(np.array([0.5, 0.25, 0.25]), 3).tolist()
        [1, 1, 0]
    """
    exact = np.asarray(proportions, dtype=np.float64) * total
    counts = np.floor(exact).astype(np.int64)
    leftover = int(total - counts.sum())
    if leftover > 0:
        order = np.argsort(-(exact - counts), kind="stable")
        counts[order[:leftover]] += 1
    return counts


def _rebalance(assigned, min_per_client):
    """Move examples from the largest clients to clients below the minimum.

    Each move takes the last-assigned example of the largest client (lowest
    id on ties) and gives it to the smallest client (lowest id on ties).
    """
    moves = 0
    while True:
        sizes = np.array([len(ix) for ix in assigned])
        recipient = int(np.argmin(sizes))
        if sizes[recipient] >= min_per_client:
            return moves
        donor = int(np.argmax(sizes))
        assigned[recipient].append(assigned[donor].pop())
        moves += 1


def partition_dirichlet(labels, cfg, n_labels=None):
    """Partition example indices across clients with Dirichlet label skew.

    Args:
        labels (np.ndarray[int]): Label of every training example.
        cfg (PartitionConfig): Partition parameters.

    Keyword Args:
        n_labels (int): Number of classes; defaults to ``max(labels) + 1``.

    Returns:
        PartitionPlan: A set partition of ``range(len(labels))``.

    Raises:
        ConfigError: If the data cannot give every client
            ``cfg.min_per_client`` examples.
    """
    validate.partition_config(cfg)
    labels = np.asarray(labels, dtype=np.int64)
    n_labels = int(labels.max()) + 1 if n_labels is None else n_labels
    n, n_clients = len(labels), cfg.n_clients
    if n < n_clients * cfg.min_per_client:
        raise ConfigError(
            "Cannot give {} clients {} examples each from {} examples".format(
                n_clients, cfg.min_per_client, n
            )
        )

    assigned = [[] for _ in range(n_clients)]
    for c in range(n_labels):
        rng = utils.rng_for(cfg.seed, "partition", c)
        members = rng.permutation(np.flatnonzero(labels == c))
        proportions = rng.dirichlet(np.full(n_clients, cfg.alpha))
        bounds = np.cumsum(largest_remainder(proportions, len(members)))[:-1]
        for client, chunk in enumerate(np.split(members, bounds)):
            assigned[client].extend(chunk.tolist())

    moves = _rebalance(assigned, cfg.min_per_client)
    plan = PartitionPlan(assigned, labels, n_labels, cfg.alpha, cfg.seed)
    log.info(
        "Partitioned %s examples over %s clients (alpha=%s, seed=%s, %s moves); "
        "sizes %s..%s",
        n,
        n_clients,
        cfg.alpha,
        cfg.seed,
        moves,
        plan.sizes.min(),
        plan.sizes.max(),
    )
    return plan
