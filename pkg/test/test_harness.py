#!/usr/bin/env python3
# -*- coding: utf-8 -*-
# test/test_harness.py

import os
from collections import defaultdict

import example_models
import numpy as np
import pytest

from fedpet import checkpoint, config, harness, jsonify
from fedpet.delta import DeltaSpec
from fedpet.exceptions import ConfigError, SchemaVersionError
from fedpet.harness import Cell, ExperimentConfig
from fedpet.model import ModelConfig
from fedpet.models import RoundRecord
from fedpet.partition import PartitionConfig


@pytest.fixture(scope="module")
def finished_run(tmp_path_factory):
    out = str(tmp_path_factory.mktemp("run"))
    cfg = example_models.tiny_experiment(output_dir=out)
    rows = harness.run_experiment(cfg)
    return cfg, out, rows


# Cells
# =============================================================================


def test_cell_id():
    cell = Cell(harness.FEDERATED, DeltaSpec.bitfit(), 1.0, 1, 0)
    assert cell.cell_id == "federated-BitFit-a1.0-e1-s0"
    cell = Cell(harness.CENTRALIZED, DeltaSpec.lora(2), None, 1, 3)
    assert cell.cell_id == "centralized-LoRA_r_2_q_v-s3"


def test_cells():
    cfg = example_models.tiny_experiment(alphas=(0.1, 1.0), local_epochs=(1, 3), repeat=2)
    todo = harness.cells(cfg)
    # Per seed and method: one centralized cell and one per (alpha, epochs).
    assert len(todo) == 2 * 3 * (1 + 2 * 2)
    assert len({c.cell_id for c in todo}) == len(todo)
    assert [c.seed for c in todo[:5]] == [0] * 5
    assert todo[0].setting == harness.CENTRALIZED
    assert todo[1].alpha == 0.1


def test_cells_without_centralized():
    cfg = example_models.tiny_experiment(centralized=False)
    assert all(c.setting == harness.FEDERATED for c in harness.cells(cfg))


# Configuration
# =============================================================================


def test_experiment_json_round_trip(tmp_path):
    cfg = example_models.tiny_experiment()
    path = str(tmp_path / "experiment.json")
    harness.save_experiment(cfg, path)
    loaded = harness.load_experiment(path)
    assert loaded == cfg
    assert loaded.config_hash() == cfg.config_hash()


def test_config_hash_changes_with_config():
    cfg = example_models.tiny_experiment()
    assert cfg.config_hash() != example_models.tiny_experiment(repeat=2).config_hash()


def test_load_experiment_checks_the_schema(tmp_path):
    path = str(tmp_path / "old.json")
    with open(path, "w") as f:
        jsonify.dump({"schema_version": 0, "name": "old"}, f)
    with pytest.raises(SchemaVersionError):
        harness.load_experiment(path)


def test_nested_configs_from_dicts():
    cfg = ExperimentConfig(
        model={"n_layers": 1},
        methods=[{"method": "bitfit"}],
        pretrain_steps=0,
    )
    assert cfg.model == ModelConfig(n_layers=1)
    assert cfg.methods == (DeltaSpec.bitfit(),)


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(repeat=0),
        dict(methods=()),
        dict(alphas=()),
        dict(alphas=(1.0, 0.0)),
        dict(local_epochs=(0,)),
        dict(pretrain_steps=-1),
        dict(partition=PartitionConfig(n_clients=5)),
        dict(model=ModelConfig(vocab_size=8)),
        dict(methods=(DeltaSpec.lora(8),)),
    ],
)
def test_invalid_experiment(kwargs):
    with pytest.raises(ConfigError):
        example_models.tiny_experiment(**kwargs)


def test_learning_rate_per_method():
    cfg = example_models.tiny_experiment(learning_rates={"bitfit": 0.5})
    assert cfg.learning_rate(DeltaSpec.bitfit()) == 0.5
    assert cfg.learning_rate(DeltaSpec.full()) == cfg.federation.optimizer.lr


# Runs
# =============================================================================


def test_run_experiment_writes_every_artifact(finished_run):
    cfg, out, rows = finished_run
    assert len(rows) == len(harness.cells(cfg))
    for cell in harness.cells(cfg):
        assert os.path.exists(os.path.join(out, "cells", cell.cell_id, "metrics.jsonl"))
    manifest = jsonify.load_document(os.path.join(out, "manifest.json"))
    assert manifest["config_hash"] == cfg.config_hash()
    assert "summary.csv" in manifest["artifacts"]
    assert "config.json" in manifest["artifacts"]
    assert harness.load_experiment(os.path.join(out, "config.json")) == cfg


def test_summary_rows(finished_run):
    cfg, out, rows = finished_run
    by_id = {
        harness.cell_id(r["setting"], r["method"], r["alpha"], r["local_epochs"], r["seed"]): r
        for r in rows
    }
    federated = by_id["federated-BitFit-a1.0-e1-s0"]
    assert federated["best_round"] in (1, 2)
    assert federated["total_bytes"] == 2 * 2 * 2 * federated["payload_bytes"]
    centralized = by_id["centralized-BitFit-s0"]
    assert centralized["total_bytes"] == 0
    assert centralized["alpha"] == ""
    assert centralized["trainable_scalars"] == federated["trainable_scalars"]
    full = by_id["federated-FullFT-a1.0-e1-s0"]
    assert full["trainable_scalars"] > federated["trainable_scalars"]


def test_metrics_file(finished_run):
    cfg, out, _ = finished_run
    path = os.path.join(out, "cells", "federated-FullFT-a1.0-e1-s0", "metrics.jsonl")
    history = harness.read_metrics(path)
    assert [r.round for r in history] == [1, 2]
    assert all(isinstance(r, RoundRecord) for r in history)
    assert all(len(r.clients) == cfg.federation.sample_size for r in history)


def test_summary_file_round_trip(finished_run):
    _, out, rows = finished_run
    read = harness.read_summary(os.path.join(out, "summary.csv"))
    assert [r["method"] for r in read] == [r["method"] for r in rows]
    for original, loaded in zip(rows, read):
        assert loaded["payload_bytes"] == original["payload_bytes"]
        assert loaded["val"] == pytest.approx(original["val"], abs=1e-6)
        assert loaded["alpha"] == (original["alpha"] or None)


def test_read_summary_rejects_other_csv(tmp_path):
    path = str(tmp_path / "other.csv")
    with open(path, "w") as f:
        f.write("a,b\n1,2\n")
    with pytest.raises(ConfigError):
        harness.read_summary(path)


def test_run_experiment_is_deterministic(tmp_path):
    cfg = example_models.tiny_experiment(
        methods=(DeltaSpec.bitfit(),), centralized=False, pretrain_steps=0
    )
    first = harness.run_experiment(cfg, out_dir=str(tmp_path / "a"))
    second = harness.run_experiment(cfg, out_dir=str(tmp_path / "b"))
    assert first == second
    with open(str(tmp_path / "a" / "summary.csv")) as a, open(
        str(tmp_path / "b" / "summary.csv")
    ) as b:
        assert a.read() == b.read()


def test_parallel_cells_match_sequential(tmp_path):
    cfg = example_models.tiny_experiment(methods=(DeltaSpec.bitfit(),), pretrain_steps=0)
    sequential = harness.run_experiment(cfg, out_dir=str(tmp_path / "seq"))
    with config.override(PARALLEL_CELL_EVALUATION=True, NUMBER_OF_CORES=2):
        parallel = harness.run_experiment(cfg, out_dir=str(tmp_path / "par"))
    assert sequential == parallel


def test_backbone_must_match(tmp_path):
    cfg = example_models.tiny_experiment()
    with pytest.raises(ConfigError):
        harness.run_experiment(
            cfg, out_dir=str(tmp_path), backbone=example_models.tiny_store()
        )


# Other drivers
# =============================================================================


def test_pretrain_writes_checkpoint(tmp_path):
    cfg = example_models.tiny_experiment()
    path = harness.pretrain(cfg, out_dir=str(tmp_path))
    store = checkpoint.load_store(path)
    assert store.equals(harness.prepare_backbone(cfg))
    assert os.path.exists(str(tmp_path / "manifest.json"))


def test_write_partitions(tmp_path):
    cfg = example_models.tiny_experiment(alphas=(0.1, 10.0))
    means = harness.write_partitions(cfg, out_dir=str(tmp_path))
    assert set(means) == {(0.1, 0), (10.0, 0)}
    assert all(0.0 <= m <= 1.0 for m in means.values())
    plan_path = str(tmp_path / "partitions" / "a0.1-s0.plan.tsv")
    plan = harness.load_plan(plan_path, cfg)
    assert plan.n_clients == 4
    assert os.path.exists(str(tmp_path / "partitions" / "a10.0-s0.js.tsv"))


def test_run_attacks(tmp_path):
    cfg = example_models.tiny_experiment(methods=(DeltaSpec.full(), DeltaSpec.bitfit()))
    reports = harness.run_attacks(cfg, out_dir=str(tmp_path))
    assert [r["method"] for r in reports] == ["FullFT", "BitFit"]
    assert all(r["batch_size"] == 1 for r in reports)
    assert all(r["mode"] == "delta" for r in reports)
    assert reports[0]["embedding_leak"]["recall"] == 1.0
    assert reports[1]["embedding_leak"] is None
    written = jsonify.load_document(str(tmp_path / "attacks" / "FullFT-b1-s0.json"))
    assert written["target"] == reports[0]["target"]


def test_run_attacks_needs_attack_config(tmp_path):
    cfg = example_models.tiny_experiment(attack=None)
    with pytest.raises(ConfigError):
        harness.run_attacks(cfg, out_dir=str(tmp_path))


# Training trends
# =============================================================================


@pytest.fixture(scope="module")
def trend_accuracy(tmp_path_factory):
    """Mean test accuracy per (setting, method, alpha) of the default task:
    T=30, C=K=10, three seeds, every method federated at alpha 0.1 and 1.0
    and centralized.
    """
    cfg = ExperimentConfig(name="trends", alphas=(0.1, 1.0), repeat=3)
    rows = harness.run_experiment(cfg, out_dir=str(tmp_path_factory.mktemp("trends")))
    accuracy = defaultdict(list)
    for row in rows:
        accuracy[row["setting"], row["method"], row["alpha"]].append(row["test"])
    return {key: np.mean(values) for key, values in accuracy.items()}


METHODS = [spec.label for spec in harness.default_methods()]
PETUNING = METHODS[1:]


def federated(accuracy, method, alpha=1.0):
    return accuracy[harness.FEDERATED, method, alpha]


def centralized(accuracy, method):
    return accuracy[harness.CENTRALIZED, method, ""]


@pytest.mark.slow
def test_centralized_full_tuning_learns_the_task(trend_accuracy):
    assert centralized(trend_accuracy, "FullFT") >= 0.95


@pytest.mark.slow
@pytest.mark.parametrize("method", PETUNING)
def test_federated_petuning_keeps_most_of_full_tuning(trend_accuracy, method):
    assert federated(trend_accuracy, method) >= 0.85 * federated(trend_accuracy, "FullFT")


@pytest.mark.slow
@pytest.mark.parametrize("method", METHODS)
def test_federation_costs_accuracy(trend_accuracy, method):
    assert centralized(trend_accuracy, method) >= federated(trend_accuracy, method) - 0.02


@pytest.mark.slow
def test_heterogeneity_costs_accuracy(trend_accuracy):
    hurt = [
        federated(trend_accuracy, m, 0.1) <= federated(trend_accuracy, m, 1.0) for m in METHODS
    ]
    assert sum(hurt) >= 4
