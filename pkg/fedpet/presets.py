#!/usr/bin/env python3
# -*- coding: utf-8 -*-
# presets.py

"""
Named experiments.

Each preset studies one question at toy scale:

- ``main``: every method, federated and centralized.
- ``heterogeneity``: Dirichlet concentrations 0.1, 1 and 10.
- ``epochs``: 1, 3 and 5 local epochs.
- ``cross-silo``: 10 clients, all sampled every round.
- ``large-scale``: 1000 clients, 10 sampled every round.
- ``privacy``: gradient inversion of single SGD steps against each method
  at batch sizes 1 and 4 on the pretrained one-layer attack model.

    >>> preset('cross-silo').federation.sample_size
    10
"""

from .attack import AttackConfig
from .data import SyntheticSpec
from .delta import DeltaSpec
from .exceptions import ConfigError
from .federation import FederationConfig
from .harness import ExperimentConfig
from .model import ModelConfig
from .optim import OptimizerConfig
from .partition import PartitionConfig
from .registry import Registry


class PresetRegistry(Registry):
    """Storage for experiment presets.

    Presets are functions of no arguments returning an |ExperimentConfig|:

    Examples:
        >>> @presets.register('tiny')  # doctest: +SKIP
        ... def tiny():
        ...     return ExperimentConfig(repeat=1)
    """

    desc = "presets"


presets = PresetRegistry()


def preset(name):
    """Return the experiment config of a named preset.

    Raises:
        ConfigError: If no preset has that name.
    """
    try:
        factory = presets[name]
    except KeyError as e:
        raise ConfigError(str(e)) from e
    return factory()


@presets.register("main")
def main():
    return ExperimentConfig(name="main", output_dir="results/main")


@presets.register("heterogeneity")
def heterogeneity():
    return ExperimentConfig(
        name="heterogeneity",
        alphas=(0.1, 1.0, 10.0),
        centralized=False,
        output_dir="results/heterogeneity",
    )


@presets.register("epochs")
def epochs():
    return ExperimentConfig(
        name="epochs",
        local_epochs=(1, 3, 5),
        centralized=False,
        output_dir="results/epochs",
    )


@presets.register("cross-silo")
def cross_silo():
    return ExperimentConfig(
        name="cross-silo",
        partition=PartitionConfig(n_clients=10),
        federation=FederationConfig(total_clients=10, sample_size=10, scenario="cross-silo"),
        centralized=False,
        output_dir="results/cross-silo",
    )


@presets.register("large-scale")
def large_scale():
    # 8000 training examples leave 8 per client on average.
    return ExperimentConfig(
        name="large-scale",
        data=SyntheticSpec(n_examples=10000),
        partition=PartitionConfig(n_clients=1000, min_per_client=4),
        federation=FederationConfig(
            total_clients=1000, sample_size=10, scenario="large-scale"
        ),
        centralized=False,
        output_dir="results/large-scale",
    )


@presets.register("privacy")
def privacy():
    model = ModelConfig.attack()
    return ExperimentConfig(
        name="privacy",
        model=model,
        data=SyntheticSpec(
            n_examples=100,
            n_labels=model.n_labels,
            vocab_size=model.vocab_size,
            seq_len=4,
            signal_tokens_per_label=2,
            noise_rate=0.0,
        ),
        methods=(
            DeltaSpec.full(),
            DeltaSpec.adapter(4),
            DeltaSpec.lora(rank=4),
            DeltaSpec.bitfit(),
            DeltaSpec.prefix(4),
        ),
        federation=FederationConfig(optimizer=OptimizerConfig.sgd(lr=0.1)),
        centralized=False,
        pretrain_steps=200,
        pretrain_lr=1e-2,
        attack=AttackConfig(max_iters=20, attack_lr=0.1, restarts=1, mode="gradient"),
        attack_batch_sizes=(1, 4),
        repeat=10,
        output_dir="results/privacy",
    )
