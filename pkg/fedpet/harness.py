#!/usr/bin/env python3
# -*- coding: utf-8 -*-
# harness.py

"""
Experiments: configuration, execution and persistence.

An |ExperimentConfig| expands into *cells*, one per setting (federated or
centralized), tuning method, Dirichlet concentration, local-epoch count and
repetition. Every cell writes its round history to
``<output>/cells/<cell id>/metrics.jsonl``; the experiment writes one
summary row per cell to ``<output>/summary.csv`` and a manifest listing
every artifact.

All outputs except the manifest's timestamps are a deterministic function
of the configuration.
"""

import csv
import datetime
import logging
import os
import re
from dataclasses import dataclass, field, replace

from . import (
    __about__,
    attack,
    checkpoint,
    config,
    data,
    distance,
    jsonify,
    model,
    partition,
    utils,
    validate,
)
from .attack import AttackConfig
from .compute.parallel import KeyedMapReduce
from .data import SyntheticSpec
from .delta import DeltaSpec, attach
from .exceptions import ConfigError
from .federation import FederationConfig, run_centralized, run_federated
from .log import stage
from .model import ModelConfig
from .models import PartitionPlan, RoundRecord
from .partition import PartitionConfig

log = logging.getLogger(__name__)

SUMMARY_CSV_HEADER = [
    "method",
    "setting",
    "scenario",
    "alpha",
    "local_epochs",
    "seed",
    "best_round",
    "val",
    "test",
    "trainable_scalars",
    "payload_bytes",
    "total_bytes",
]

FEDERATED = "federated"
CENTRALIZED = "centralized"

# Adam learning rates per method; parameter-efficient methods move few
# parameters and tolerate larger steps.
DEFAULT_LEARNING_RATES = {
    "fullft": 1e-3,
    "adapter": 5e-3,
    "lora": 5e-3,
    "bitfit": 1e-2,
    "prefix": 1e-2,
}

# Examples of the default task; the 80/10/10 split leaves 40 training
# examples per client at C=10, one local batch.
DEFAULT_EXAMPLES = 500


def default_methods():
    return (
        DeltaSpec.full(),
        DeltaSpec.adapter(16),
        DeltaSpec.lora(8),
        DeltaSpec.bitfit(),
        DeltaSpec.prefix(8),
    )


@dataclass(frozen=True)
class ExperimentConfig:
    """A complete experiment.

    Attributes:
        name (str): Label of the experiment.
        model (ModelConfig): Encoder shape.
        data (SyntheticSpec): Synthetic task.
        partition (PartitionConfig): Client partition; ``alpha`` and
            ``seed`` are overridden per cell.
        alphas (tuple[float]): Dirichlet concentrations to sweep.
        federation (FederationConfig): Schedule; ``local_epochs``, ``seed``
            and the optimizer's learning rate are overridden per cell.
        local_epochs (tuple[int]): Local-epoch counts to sweep.
        methods (tuple[DeltaSpec]): Tuning methods.
        learning_rates (dict[str, float]): Learning rate per method name.
        centralized (bool): Also run the centralized baseline of every
            method.
        pretrain_steps (int): Backbone pretraining steps.
        pretrain_lr (float): Backbone pretraining learning rate.
        attack (AttackConfig): Attacker settings; ``None`` for no attacks.
        attack_batch_sizes (tuple[int]): Batch sizes attacked.
        output_dir (str): Where results are written.
        seed (int): Base seed; repetition ``r`` uses ``seed + r``.
        repeat (int): Repetitions.
    """

    name: str = "custom"
    model: ModelConfig = field(default_factory=ModelConfig)
    data: SyntheticSpec = field(
        default_factory=lambda: SyntheticSpec(n_examples=DEFAULT_EXAMPLES)
    )
    partition: PartitionConfig = field(default_factory=PartitionConfig)
    alphas: tuple = (1.0,)
    federation: FederationConfig = field(default_factory=FederationConfig)
    local_epochs: tuple = (1,)
    methods: tuple = field(default_factory=default_methods)
    learning_rates: dict = field(default_factory=lambda: dict(DEFAULT_LEARNING_RATES))
    centralized: bool = True
    pretrain_steps: int = 200
    pretrain_lr: float = 1e-3
    attack: AttackConfig = None
    attack_batch_sizes: tuple = (1, 4)
    output_dir: str = "results"
    seed: int = 0
    repeat: int = 3

    _nested = {
        "model": ModelConfig,
        "data": SyntheticSpec,
        "partition": PartitionConfig,
        "federation": FederationConfig,
        "attack": AttackConfig,
    }

    def __post_init__(self):
        for name, cls in self._nested.items():
            value = getattr(self, name)
            if isinstance(value, dict):
                object.__setattr__(self, name, cls.from_json(value))
        methods = tuple(
            DeltaSpec.from_json(m) if isinstance(m, dict) else m for m in self.methods
        )
        object.__setattr__(self, "methods", methods)
        object.__setattr__(self, "alphas", tuple(float(a) for a in self.alphas))
        for name in ("local_epochs", "attack_batch_sizes"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        validate_experiment(self)

    @property
    def seeds(self):
        return [self.seed + r for r in range(self.repeat)]

    def learning_rate(self, spec):
        return self.learning_rates.get(spec.method, self.federation.optimizer.lr)

    def to_json(self):
        return {
            "name": self.name,
            "model": self.model.to_json(),
            "data": self.data.to_json(),
            "partition": self.partition.to_json(),
            "alphas": list(self.alphas),
            "federation": self.federation.to_json(),
            "local_epochs": list(self.local_epochs),
            "methods": [m.to_json() for m in self.methods],
            "learning_rates": dict(self.learning_rates),
            "centralized": self.centralized,
            "pretrain_steps": self.pretrain_steps,
            "pretrain_lr": self.pretrain_lr,
            "attack": None if self.attack is None else self.attack.to_json(),
            "attack_batch_sizes": list(self.attack_batch_sizes),
            "output_dir": self.output_dir,
            "seed": self.seed,
            "repeat": self.repeat,
        }

    @classmethod
    def from_json(cls, dct):
        return jsonify.build_dataclass(cls, dct)

    def config_hash(self):
        """Hash of the configuration, stable under key reordering."""
        return utils.config_hash(self.to_json())


def validate_experiment(cfg):
    """Validate an |ExperimentConfig|."""
    if cfg.repeat < 1:
        raise ConfigError("`repeat` must be at least 1; got {}".format(cfg.repeat))
    if not cfg.methods:
        raise ConfigError("An experiment needs at least one method.")
    if not cfg.alphas or any(not a > 0 for a in cfg.alphas):
        raise ConfigError("`alphas` must be nonempty and positive; got {}".format(cfg.alphas))
    if not cfg.local_epochs or any(e < 1 for e in cfg.local_epochs):
        raise ConfigError(
            "`local_epochs` must be nonempty and positive; got {}".format(cfg.local_epochs)
        )
    if cfg.pretrain_steps < 0:
        raise ConfigError("`pretrain_steps` must be non-negative")
    if cfg.partition.n_clients != cfg.federation.total_clients:
        raise ConfigError(
            "Partition has {} clients but the federation {}".format(
                cfg.partition.n_clients, cfg.federation.total_clients
            )
        )
    if cfg.data.vocab_size > cfg.model.vocab_size:
        raise ConfigError("The data vocabulary exceeds the model's.")
    if cfg.data.seq_len > cfg.model.max_positions:
        raise ConfigError("The data sequence length exceeds the model's positions.")
    if cfg.data.n_labels != cfg.model.n_labels:
        raise ConfigError("The data and the model disagree on the number of labels.")
    for spec in cfg.methods:
        validate.delta_spec(spec, cfg.model)
    return True


def load_experiment(path):
    """Load an experiment config from a schema-versioned JSON file."""
    cfg = ExperimentConfig.from_json(jsonify.load_document(path))
    log.info("Loaded experiment %r from %s (hash %s)", cfg.name, path, cfg.config_hash())
    return cfg


def save_experiment(cfg, path):
    jsonify.write_document(cfg.to_json(), path)


# Cells
# =============================================================================


@dataclass(frozen=True)
class Cell:
    """One run of an experiment."""

    setting: str
    spec: DeltaSpec
    alpha: float
    local_epochs: int
    seed: int

    @property
    def cell_id(self):
        return cell_id(self.setting, self.spec.label, self.alpha, self.local_epochs, self.seed)


def _slug(text):
    return re.sub(r"[^A-Za-z0-9.]+", "_", str(text)).strip("_")


def cell_id(setting, method, alpha, local_epochs, seed):
    """Directory name of a cell, e.g. ``'federated-BitFit-a1.0-e1-s0'``."""
    parts = [setting, _slug(method)]
    if setting == FEDERATED:
        parts += ["a{}".format(alpha), "e{}".format(local_epochs)]
    parts.append("s{}".format(seed))
    return "-".join(parts)


def cells(cfg):
    """Expand an experiment into its cells, in a fixed order.

    Centralized baselines are independent of the partition and of local
    epochs, so there is one per method and seed.
    """
    out = []
    for seed in cfg.seeds:
        for spec in cfg.methods:
            if cfg.centralized:
                out.append(Cell(CENTRALIZED, spec, None, 1, seed))
            for alpha in cfg.alphas:
                for epochs in cfg.local_epochs:
                    out.append(Cell(FEDERATED, spec, alpha, epochs, seed))
    return out


def prepare_backbone(cfg):
    """Build and pretrain the experiment's backbone."""
    store = model.build(cfg.model, cfg.seed)
    pretext = data.pretext(cfg.data).train
    return model.pretrain_backbone(
        store, pretext, cfg.pretrain_steps, cfg.pretrain_lr, cfg.seed
    )


def partition_configs(cfg):
    """One partition config per Dirichlet concentration of ``cfg``."""
    return [replace(cfg.partition, alpha=alpha) for alpha in cfg.alphas]


def make_plan(cfg, alpha, seed, dataset):
    pcfg = replace(cfg.partition, alpha=alpha, seed=seed)
    return partition.partition_dirichlet(dataset.train.labels, pcfg, cfg.data.n_labels)


def train_cell(cell, cfg, backbone, dataset):
    """Tune a fresh downstream model as ``cell`` prescribes.

    Returns:
        tuple[GlobalState, list[RoundRecord]]: Final state and history.
    """
    store = model.prepare_downstream(backbone, cell.seed)
    optimizer = replace(cfg.federation.optimizer, lr=cfg.learning_rate(cell.spec))
    if cell.setting == CENTRALIZED:
        state, history = run_centralized(
            dataset,
            store,
            cell.spec,
            cfg.federation.rounds,
            optimizer,
            cell.seed,
            batch_size=cfg.federation.batch_size,
        )
    else:
        fed = replace(
            cfg.federation,
            local_epochs=cell.local_epochs,
            seed=cell.seed,
            optimizer=optimizer,
        )
        plan = make_plan(cfg, cell.alpha, cell.seed, dataset)
        state, history = run_federated(dataset, plan, store, cell.spec, fed)
    return state, history


def run_cell(cell, cfg, backbone, dataset):
    """Run one cell.

    Returns:
        tuple[dict, list[RoundRecord]]: The summary row and round history.
    """
    with stage(log, "cell %s", cell.cell_id):
        state, history = train_cell(cell, cfg, backbone, dataset)
    row = {
        "method": cell.spec.label,
        "setting": cell.setting,
        "scenario": cfg.federation.scenario,
        "alpha": "" if cell.alpha is None else cell.alpha,
        "local_epochs": cell.local_epochs,
        "seed": cell.seed,
        "best_round": state.best_round,
        "val": state.best_val,
        "test": state.best_test,
        "trainable_scalars": state.payload.scalars(),
        "payload_bytes": state.payload.byte_length(),
        "total_bytes": sum(r.bytes_up + r.bytes_down for r in history),
    }
    log.info(
        "Cell %s: best round %s, val %.4f, test %.4f",
        cell.cell_id,
        state.best_round,
        state.best_val,
        state.best_test,
    )
    return row, history


class CellEvaluation(KeyedMapReduce):
    """Run the cells of an experiment, keyed by position."""

    description = "Cells"

    @staticmethod
    def compute(indexed_cell, cfg, backbone, dataset):  # pylint: disable=arguments-differ
        index, cell = indexed_cell
        return index, (cell, run_cell(cell, cfg, backbone, dataset))


# Persistence
# =============================================================================


def write_metrics(path, history):
    """Write one JSON object per round."""
    with open(path, "w") as f:
        for record in history:
            f.write(jsonify.dumps(record.to_json()))
            f.write("\n")


def read_metrics(path):
    with open(path) as f:
        return [RoundRecord.from_json(jsonify.loads(line)) for line in f if line.strip()]


def _csv_value(value):
    if isinstance(value, float):
        return repr(round(value, config.PRECISION))
    return value


def write_summary(path, rows):
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=SUMMARY_CSV_HEADER, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _csv_value(row[k]) for k in SUMMARY_CSV_HEADER})


def read_summary(path):
    """Read a summary CSV, converting numeric columns."""
    ints = ["local_epochs", "seed", "best_round", "trainable_scalars", "payload_bytes", "total_bytes"]
    rows = []
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames != SUMMARY_CSV_HEADER:
            raise ConfigError("{} does not have the summary header".format(path))
        for row in reader:
            for key in ints:
                row[key] = int(row[key])
            for key in ("val", "test"):
                row[key] = float(row[key])
            row["alpha"] = float(row["alpha"]) if row["alpha"] else None
            rows.append(row)
    return rows


def _timestamp():
    return datetime.datetime.now(datetime.timezone.utc).isoformat()


def write_manifest(cfg, out_dir, artifacts, started):
    """Write ``manifest.json``: config hash, version, artifacts and times."""
    path = os.path.join(out_dir, "manifest.json")
    jsonify.write_document(
        {
            "config_hash": cfg.config_hash(),
            "version": __about__.__version__,
            "artifacts": sorted(os.path.relpath(a, out_dir) for a in artifacts),
            "started": started,
            "finished": _timestamp(),
        },
        path,
    )
    return path


def _output_dir(cfg, out_dir):
    out_dir = cfg.output_dir if out_dir is None else out_dir
    os.makedirs(out_dir, exist_ok=True)
    return out_dir


# Subcommand drivers
# =============================================================================


def pretrain(cfg, out_dir=None):
    """Pretrain the backbone and write ``backbone.ckpt``."""
    out_dir = _output_dir(cfg, out_dir)
    started = _timestamp()
    path = os.path.join(out_dir, "backbone.ckpt")
    checkpoint.save_store(prepare_backbone(cfg), path)
    write_manifest(cfg, out_dir, [path], started)
    return path


def write_partitions(cfg, out_dir=None):
    """Write the plan and JS distance matrix of every alpha and seed.

    Returns:
        dict[tuple[float, int], float]: Mean pairwise JS distance per
        ``(alpha, seed)``.
    """
    out_dir = _output_dir(cfg, out_dir)
    started = _timestamp()
    part_dir = os.path.join(out_dir, "partitions")
    os.makedirs(part_dir, exist_ok=True)
    dataset = data.generate(cfg.data)
    artifacts, means = [], {}
    for alpha in cfg.alphas:
        for seed in cfg.seeds:
            plan = make_plan(cfg, alpha, seed, dataset)
            stem = os.path.join(part_dir, "a{}-s{}".format(alpha, seed))
            plan.write(stem + ".plan.tsv")
            matrix = distance.js_distance_matrix(plan)
            with open(stem + ".js.tsv", "w") as f:
                f.write(distance.matrix_to_tsv(matrix))
            means[(alpha, seed)] = distance.mean_pairwise_distance(matrix)
            log.info(
                "alpha=%s seed=%s: mean pairwise JS distance %.4f",
                alpha,
                seed,
                means[(alpha, seed)],
            )
            artifacts += [stem + ".plan.tsv", stem + ".js.tsv"]
    write_manifest(cfg, out_dir, artifacts, started)
    return means


def load_plan(path, cfg):
    """Read a plan TSV written for ``cfg``'s training data."""
    dataset = data.generate(cfg.data)
    return PartitionPlan.read(path, dataset.train.labels, cfg.data.n_labels)


def run_experiment(cfg, out_dir=None, backbone=None):
    """Run every cell of ``cfg`` and write metrics, summary and manifest.

    Keyword Args:
        out_dir (str): Overrides ``cfg.output_dir``.
        backbone (ParameterStore): A pretrained backbone; pretrained from
            ``cfg`` when omitted.

    Returns:
        list[dict]: The summary rows, in cell order.
    """
    out_dir = _output_dir(cfg, out_dir)
    started = _timestamp()
    log.info("Running experiment %r (hash %s)", cfg.name, cfg.config_hash())
    log.debug("Configuration: %s", cfg.to_json())
    dataset = data.generate(cfg.data)
    if backbone is None:
        backbone = prepare_backbone(cfg)
    elif backbone.config != cfg.model:
        raise ConfigError("The backbone checkpoint does not match the model config.")

    todo = cells(cfg)
    results = CellEvaluation(list(enumerate(todo)), cfg, backbone, dataset).run(
        config.PARALLEL_CELL_EVALUATION
    )

    artifacts, rows = [], []
    for cell, (row, history) in results:
        cell_dir = os.path.join(out_dir, "cells", cell.cell_id)
        os.makedirs(cell_dir, exist_ok=True)
        path = os.path.join(cell_dir, "metrics.jsonl")
        write_metrics(path, history)
        artifacts.append(path)
        rows.append(row)

    summary = os.path.join(out_dir, "summary.csv")
    write_summary(summary, rows)
    config_path = os.path.join(out_dir, "config.json")
    save_experiment(cfg, config_path)
    write_manifest(cfg, out_dir, artifacts + [summary, config_path], started)
    return rows


def attack_cell(cfg, spec, batch_size, seed, backbone=None):
    """Capture one client step on the attack model and invert it.

    The target is the pretrained backbone with its pretext head kept; a
    fresh downstream head has a zero output layer and would send no gradient
    below it. Gradient mode falls back to delta mode for optimizers other
    than plain SGD.

    Keyword Args:
        backbone (ParameterStore): Pretrained backbone; built and pretrained
            from ``cfg`` when omitted.

    Returns:
        dict: The attack report of the target.
    """
    store = (backbone if backbone is not None else prepare_backbone(cfg)).copy()
    delta = attach(store, spec, seed)
    batch = data.sample_batch(cfg.data, batch_size, seed)
    optimizer = cfg.federation.optimizer
    mode = cfg.attack.mode
    if mode == "gradient" and (optimizer.name != "sgd" or optimizer.momentum):
        mode = "delta"
    target = attack.capture_update(store, delta, batch, optimizer, mode=mode, seed=seed)
    with stage(log, "attack on %s (batch %s, seed %s)", spec.label, batch_size, seed):
        result = attack.dlg_reconstruct(target, replace(cfg.attack, seed=seed))
    return attack.attack_record(spec.label, target, result, seed)


def run_attacks(cfg, out_dir=None):
    """Attack every method, batch size and seed; write one JSON per target.

    Returns:
        list[dict]: The attack reports.
    """
    if cfg.attack is None:
        raise ConfigError("The experiment has no attack configuration.")
    out_dir = _output_dir(cfg, out_dir)
    started = _timestamp()
    attack_dir = os.path.join(out_dir, "attacks")
    os.makedirs(attack_dir, exist_ok=True)
    backbone = prepare_backbone(cfg)
    reports, artifacts = [], []
    for spec in cfg.methods:
        for batch_size in cfg.attack_batch_sizes:
            for seed in cfg.seeds:
                report = attack_cell(cfg, spec, batch_size, seed, backbone=backbone)
                path = os.path.join(
                    attack_dir, "{}-b{}-s{}.json".format(_slug(spec.label), batch_size, seed)
                )
                jsonify.write_document(report, path)
                reports.append(report)
                artifacts.append(path)
    write_manifest(cfg, out_dir, artifacts, started)
    return reports