#!/usr/bin/env python3
# -*- coding: utf-8 -*-
# models/records.py

"""Per-round, cost and attack records."""

from .. import utils
from . import fmt

# Keys of one metrics JSONL line, in output order.
ROUND_RECORD_KEYS = [
    "round",
    "clients",
    "val",
    "test",
    "bytes_up",
    "bytes_down",
    "trainable_scalars",
    "train_loss",
]


class RoundRecord:
    """Metrics of one communication round (or one centralized epoch).

    Attributes:
        round (int): 1-based round index.
        clients (tuple[int]): Ids of the sampled clients, ascending.
        val (float): Accuracy of the global model on the validation split.
        test (float): Accuracy of the global model on the test split.
        bytes_up (int): Bytes uploaded by all sampled clients.
        bytes_down (int): Bytes downloaded by all sampled clients.
        trainable_scalars (int): Size of the exchanged payload, in scalars.
        train_loss (float): Size-weighted mean local training loss.
        wall_time (float): Seconds spent in the round; not part of equality
            or of the metrics file.
    """

    def __init__(
        self,
        round,  # pylint: disable=redefined-builtin
        clients,
        val,
        test,
        bytes_up,
        bytes_down,
        trainable_scalars,
        train_loss,
        wall_time=None,
    ):
        self.round = int(round)
        self.clients = tuple(int(c) for c in clients)
        self.val = float(val)
        self.test = float(test)
        self.bytes_up = int(bytes_up)
        self.bytes_down = int(bytes_down)
        self.trainable_scalars = int(trainable_scalars)
        self.train_loss = float(train_loss)
        self.wall_time = wall_time

    def __eq__(self, other):
        return isinstance(other, RoundRecord) and self.to_json() == other.to_json()

    def __hash__(self):
        return hash(utils.canonical_json(self.to_json()))

    def __repr__(self):
        return fmt.make_repr(self, ROUND_RECORD_KEYS)

    def __str__(self):
        return fmt.fmt_round_record(self)

    def to_json(self):
        return {
            "round": self.round,
            "clients": list(self.clients),
            "val": self.val,
            "test": self.test,
            "bytes_up": self.bytes_up,
            "bytes_down": self.bytes_down,
            "trainable_scalars": self.trainable_scalars,
            "train_loss": self.train_loss,
        }

    @classmethod
    def from_json(cls, dct):
        return cls(**{key: dct[key] for key in ROUND_RECORD_KEYS})


class CostReport:
    """Communication cost of one tuning method on one architecture.

    Attributes:
        method (str): Label of the delta spec.
        trainable_scalars (int): Scalars in one payload.
        payload_bytes (int): Bytes in one payload.
        per_round_bytes (int): Upload plus download bytes of one round.
        total_bytes (int): Bytes over all rounds.
        ratio_vs_full (float): FullFT payload bytes over this method's.
    """

    _attrs = [
        "method",
        "trainable_scalars",
        "payload_bytes",
        "per_round_bytes",
        "total_bytes",
        "ratio_vs_full",
    ]

    def __init__(
        self,
        method,
        trainable_scalars,
        payload_bytes,
        per_round_bytes,
        total_bytes,
        ratio_vs_full,
    ):
        self.method = method
        self.trainable_scalars = int(trainable_scalars)
        self.payload_bytes = int(payload_bytes)
        self.per_round_bytes = int(per_round_bytes)
        self.total_bytes = int(total_bytes)
        self.ratio_vs_full = float(ratio_vs_full)

    def __eq__(self, other):
        return isinstance(other, CostReport) and self.to_json() == other.to_json()

    def __hash__(self):
        return hash(tuple(self.to_json().values()))

    def __repr__(self):
        return fmt.make_repr(self, self._attrs)

    def __str__(self):
        return fmt.fmt_cost_report(self)

    def to_json(self):
        return {attr: getattr(self, attr) for attr in self._attrs}

    @classmethod
    def from_json(cls, dct):
        return cls(**{attr: dct[attr] for attr in cls._attrs})


class AttackResult:
    """Outcome of a gradient-inversion attack on one captured update.

    Attributes:
        recovered (tuple[tuple[int]]): Recovered token ids per example.
        precision (float): Mean per-example precision of recovered tokens.
        recall (float): Mean per-example recall.
        f1 (float): Harmonic mean of ``precision`` and ``recall``.
        final_loss (float): Best gradient-matching loss reached.
        iterations (int): Optimizer iterations per restart.
        restart (int): Index of the restart that produced the result.
    """

    _attrs = ["recovered", "precision", "recall", "f1", "final_loss", "iterations"]

    def __init__(
        self, recovered, precision, recall, f1, final_loss, iterations, restart=0
    ):
        self.recovered = tuple(tuple(int(t) for t in row) for row in recovered)
        self.precision = float(precision)
        self.recall = float(recall)
        self.f1 = float(f1)
        self.final_loss = float(final_loss)
        self.iterations = int(iterations)
        self.restart = int(restart)

    def __eq__(self, other):
        return isinstance(other, AttackResult) and self.to_json() == other.to_json()

    def __hash__(self):
        return hash(utils.canonical_json(self.to_json()))

    def __repr__(self):
        return fmt.make_repr(self, self._attrs)

    def __str__(self):
        return fmt.fmt_attack_result(self)

    def to_json(self):
        return {
            "recovered": [list(row) for row in self.recovered],
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "final_loss": self.final_loss,
            "iterations": self.iterations,
            "restart": self.restart,
        }

    @classmethod
    def from_json(cls, dct):
        return cls(**dct)
