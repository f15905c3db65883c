#!/usr/bin/env python3
# -*- coding: utf-8 -*-
# __init__.py

"""
======
fedpet
======

fedpet simulates federated parameter-efficient tuning of transformer
classifiers on a single machine.

Clients hold label-skewed shards of a synthetic classification task and
share a frozen pretrained backbone. Each round they tune a small set of
parameters (adapters, low-rank updates, bias terms or attention prefixes)
and a server averages them. fedpet measures what that costs and what it
gives away: accuracy relative to full fine-tuning, bytes exchanged, and how
much of a client's data an honest-but-curious server can reconstruct from a
single upload.


Usage
~~~~~

Build and pretrain a backbone, partition the data and run a federation::

    >>> import fedpet
    >>> from fedpet import data, delta, federation, model, partition
    >>> spec = data.SyntheticSpec(n_examples=200)
    >>> dataset = data.generate(spec)
    >>> backbone = model.prepare_downstream(
    ...     model.build(model.ModelConfig(), seed=0), seed=0)
    >>> plan = partition.partition_dirichlet(
    ...     dataset.train.labels, partition.PartitionConfig(n_clients=4, min_per_client=5))
    >>> cfg = federation.FederationConfig(total_clients=4, sample_size=2, rounds=1)
    >>> state, history = federation.run_federated(
    ...     dataset, plan, backbone, delta.DeltaSpec.bitfit(), cfg)
    >>> len(history)
    1

Resource costs at RoBERTa-base scale come from the |accounting| module, and
gradient inversion from |attack|. Whole experiments are driven by
|harness| and the ``fedpet`` command line.


Configuration (optional)
~~~~~~~~~~~~~~~~~~~~~~~~

Runtime options (precision, parallelism, caching, logging) are loaded from a
YAML file, ``fedpet_config.yml``, in the directory where fedpet is run. If
there is no such file the defaults are used. See |conf| for the options.
"""

from .__about__ import *  # pylint: disable=wildcard-import

# Initialize config object
from .conf import config

from . import (
    accounting,
    attack,
    autodiff,
    constants,
    data,
    delta,
    distance,
    federation,
    harness,
    jsonify,
    model,
    models,
    partition,
    presets,
    report,
    utils,
    validate,
)
from .delta import DeltaSpec
from .federation import FederationConfig
from .harness import ExperimentConfig
from .model import ModelConfig

__all__ = [
    "DeltaSpec",
    "ExperimentConfig",
    "FederationConfig",
    "ModelConfig",
    "accounting",
    "attack",
    "autodiff",
    "config",
    "constants",
    "data",
    "delta",
    "distance",
    "federation",
    "harness",
    "jsonify",
    "model",
    "models",
    "partition",
    "presets",
    "report",
    "utils",
    "validate",
]
