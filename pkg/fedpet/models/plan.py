#!/usr/bin/env python3
# -*- coding: utf-8 -*-
# models/plan.py

"""Assignments of training examples to clients."""

import numpy as np

from .. import exceptions, utils
from . import fmt


class PartitionPlan:
    """A client to example-index assignment.

    Args:
        client_indices (Iterable[Iterable[int]]): Sorted training-example
            indices of each client.
        labels (np.ndarray[int]): Labels of the whole training split.
        n_labels (int): Number of classes.
        alpha (float): Dirichlet concentration the plan was drawn with.
        seed (int): Seed the plan was drawn with.

    Attributes:
        histograms (np.ndarray): ``[n_clients, n_labels]`` label counts.
    """

    def __init__(self, client_indices, labels, n_labels, alpha, seed):
        self.client_indices = tuple(
            utils.freeze(np.asarray(sorted(ix), dtype=np.int64)) for ix in client_indices
        )
        labels = np.asarray(labels)
        self.n_labels = int(n_labels)
        self.alpha = float(alpha)
        self.seed = int(seed)
        self.histograms = utils.freeze(
            np.array(
                [np.bincount(labels[ix], minlength=n_labels) for ix in self.client_indices],
                dtype=np.int64,
            ).reshape(len(self.client_indices), n_labels)
        )

    @classmethod
    def single_client(cls, labels, n_labels, seed=0):
        """The plan that gives every example to one client."""
        return cls([np.arange(len(labels))], labels, n_labels, alpha=np.inf, seed=seed)

    @property
    def n_clients(self):
        return len(self.client_indices)

    @property
    def sizes(self):
        """np.ndarray[int]: Number of examples held by each client."""
        return np.array([len(ix) for ix in self.client_indices], dtype=np.int64)

    def label_distributions(self):
        """Row-normalized label histograms; an empty client gets all zeros."""
        totals = self.histograms.sum(axis=1, keepdims=True)
        return self.histograms / np.maximum(totals, 1)

    def __len__(self):
        return self.n_clients

    def __getitem__(self, client_id):
        return self.client_indices[client_id]

    def __eq__(self, other):
        return (
            isinstance(other, PartitionPlan)
            and self.n_clients == other.n_clients
            and self.alpha == other.alpha
            and self.seed == other.seed
            and all(
                np.array_equal(a, b)
                for a, b in zip(self.client_indices, other.client_indices)
            )
        )

    def __hash__(self):
        return hash((self.alpha, self.seed) + tuple(map(utils.np_hash, self.client_indices)))

    def __repr__(self):
        return fmt.make_repr(self, ["alpha", "seed", "n_clients"])

    def __str__(self):
        rows = [
            "client {:>3}: n={:<5} {}".format(i, len(ix), list(h))
            for i, (ix, h) in enumerate(zip(self.client_indices, self.histograms))
        ]
        head = "Partition plan (alpha={}, seed={})".format(self.alpha, self.seed)
        return fmt.box(fmt.header(head, "\n".join(rows)))

    # Plan files
    # -------------------------------------------------------------------------

    def header_line(self):
        return "# alpha={}\tseed={}\tn_clients={}".format(
            repr(self.alpha), self.seed, self.n_clients
        )

    def to_tsv(self):
        """Render the plan file: a header line, then one
        ``client_id<TAB>i1,i2,...`` line per client.
        """
        lines = [self.header_line()]
        lines += [
            "{}\t{}".format(i, ",".join(str(x) for x in ix))
            for i, ix in enumerate(self.client_indices)
        ]
        return "\n".join(lines) + "\n"

    def write(self, path):
        with open(path, "w", newline="\n") as f:
            f.write(self.to_tsv())

    @classmethod
    def from_tsv(cls, text, labels, n_labels):
        """Parse a plan file.

        Raises:
            ConfigError: If the file is malformed.
        """
        lines = text.rstrip("\n").split("\n")
        if not lines or not lines[0].startswith("# "):
            raise exceptions.ConfigError("Plan file is missing its header line.")
        try:
            meta = dict(field.split("=", 1) for field in lines[0][2:].split("\t"))
            alpha, seed = float(meta["alpha"]), int(meta["seed"])
            n_clients = int(meta["n_clients"])
        except (KeyError, ValueError) as e:
            raise exceptions.ConfigError("Bad plan header: {!r}".format(lines[0])) from e

        indices = []
        for expected, line in enumerate(lines[1:]):
            client, _, body = line.partition("\t")
            if client != str(expected):
                raise exceptions.ConfigError(
                    "Plan line {} names client {!r}.".format(expected + 1, client)
                )
            try:
                indices.append([int(x) for x in body.split(",")] if body else [])
            except ValueError as e:
                raise exceptions.ConfigError(
                    "Bad index list for client {}.".format(client)
                ) from e
        if len(indices) != n_clients:
            raise exceptions.ConfigError(
                "Plan header declares {} clients; found {}.".format(
                    n_clients, len(indices)
                )
            )
        return cls(indices, labels, n_labels, alpha, seed)

    @classmethod
    def read(cls, path, labels, n_labels):
        with open(path) as f:
            return cls.from_tsv(f.read(), labels, n_labels)
