#!/usr/bin/env python3
# -*- coding: utf-8 -*-
# test/test_partition.py

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedpet import distance
from fedpet.exceptions import ConfigError
from fedpet.models import PartitionPlan
from fedpet.partition import PartitionConfig, largest_remainder, partition_dirichlet


def balanced_labels(n, n_labels=3, seed=0):
    return np.random.default_rng(seed).permutation(np.arange(n) % n_labels)


@settings(max_examples=60, deadline=None)
@given(
    n_clients=st.integers(2, 8),
    alpha=st.sampled_from([0.05, 0.1, 1.0, 10.0, 1e4]),
    extra=st.integers(0, 200),
    min_per_client=st.integers(0, 10),
    seed=st.integers(0, 2**16),
)
def test_plan_is_a_set_partition(n_clients, alpha, extra, min_per_client, seed):
    n = n_clients * min_per_client + extra + 1
    labels = balanced_labels(n, seed=seed)
    cfg = PartitionConfig(alpha=alpha, n_clients=n_clients, min_per_client=min_per_client, seed=seed)
    plan = partition_dirichlet(labels, cfg, n_labels=3)
    everything = np.concatenate(plan.client_indices)
    assert len(everything) == n
    assert np.array_equal(np.sort(everything), np.arange(n))
    assert plan.sizes.min() >= min_per_client
    assert np.array_equal(plan.histograms.sum(axis=0), np.bincount(labels, minlength=3))
    for indices in plan.client_indices:
        assert np.array_equal(indices, np.sort(indices))


def test_partition_is_deterministic():
    labels = balanced_labels(1000)
    cfg = PartitionConfig(alpha=0.5, seed=7)
    assert partition_dirichlet(labels, cfg) == partition_dirichlet(labels, cfg)
    assert partition_dirichlet(labels, cfg) != partition_dirichlet(
        labels, PartitionConfig(alpha=0.5, seed=8)
    )


def test_minimum_cannot_be_met():
    with pytest.raises(ConfigError):
        partition_dirichlet(balanced_labels(99), PartitionConfig(n_clients=10, min_per_client=10))
    partition_dirichlet(balanced_labels(100), PartitionConfig(n_clients=10, min_per_client=10))


@pytest.mark.parametrize(
    "kwargs",
    [dict(alpha=0.0), dict(alpha=-1.0), dict(n_clients=1), dict(min_per_client=-1)],
)
def test_invalid_config(kwargs):
    with pytest.raises(ConfigError):
        PartitionConfig(**kwargs)


def test_rebalancing_fills_small_clients():
    labels = balanced_labels(300)
    cfg = PartitionConfig(alpha=0.05, n_clients=10, min_per_client=20, seed=1)
    plan = partition_dirichlet(labels, cfg)
    assert plan.sizes.min() == 20


def test_large_alpha_is_nearly_uniform():
    labels = balanced_labels(3000)
    plan = partition_dirichlet(labels, PartitionConfig(alpha=1e6, n_clients=10))
    assert plan.sizes.min() >= 295 and plan.sizes.max() <= 305
    dists = plan.label_distributions()
    assert np.all(np.abs(dists - 1 / 3) < 0.02)


def test_small_alpha_gives_a_dominant_class():
    labels = balanced_labels(3000)
    dominated = 0
    for seed in range(20):
        plan = partition_dirichlet(labels, PartitionConfig(alpha=0.1, n_clients=10, seed=seed))
        dists = plan.label_distributions()
        dominated += int(np.any(dists.max(axis=1) >= 0.8))
    assert dominated >= 15


@pytest.mark.parametrize("seed", range(20))
def test_large_alpha_splits_two_clients_evenly(seed):
    labels = balanced_labels(1000, seed=seed)
    plan = partition_dirichlet(labels, PartitionConfig(alpha=1e6, n_clients=2, seed=seed))
    assert plan.sizes.sum() == 1000
    assert np.all((plan.sizes >= 450) & (plan.sizes <= 550))


def mean_js(alpha, seed):
    labels = balanced_labels(3000)
    plan = partition_dirichlet(labels, PartitionConfig(alpha=alpha, n_clients=10, seed=seed))
    return distance.mean_pairwise_distance(distance.js_distance_matrix(plan))


def test_heterogeneity_decreases_with_alpha():
    seeds = range(10)
    for seed in seeds:
        assert mean_js(0.1, seed) > mean_js(1.0, seed)
    assert np.mean([mean_js(1.0, s) for s in seeds]) > np.mean([mean_js(10.0, s) for s in seeds])


@settings(max_examples=100, deadline=None)
@given(
    weights=st.lists(st.floats(0.0, 1.0), min_size=1, max_size=12).filter(lambda w: sum(w) > 0),
    total=st.integers(0, 10000),
)
def test_largest_remainder(weights, total):
    proportions = np.array(weights) / np.sum(weights)
    counts = largest_remainder(proportions, total)
    assert counts.sum() == total
    assert np.all(np.abs(counts - proportions * total) < 1 + 1e-9)
    assert np.all(counts >= 0)


# Plan files
# =============================================================================


def test_plan_file_round_trip(tmp_path):
    labels = balanced_labels(200)
    plan = partition_dirichlet(labels, PartitionConfig(alpha=0.3, n_clients=4, seed=2))
    text = plan.to_tsv()
    lines = text.splitlines()
    assert lines[0] == "# alpha=0.3\tseed=2\tn_clients=4"
    assert len(lines) == 5
    assert lines[1].startswith("0\t")
    assert lines[1][2:] == ",".join(map(str, plan[0]))

    assert PartitionPlan.from_tsv(text, labels, 3) == plan
    path = str(tmp_path / "plan.tsv")
    plan.write(path)
    read = PartitionPlan.read(path, labels, 3)
    assert read == plan
    assert np.array_equal(read.histograms, plan.histograms)


def test_empty_client_in_plan_file():
    labels = np.array([0, 1, 2])
    plan = PartitionPlan([[0, 1, 2], []], labels, 3, alpha=0.1, seed=0)
    assert plan.to_tsv().splitlines()[2] == "1\t"
    assert PartitionPlan.from_tsv(plan.to_tsv(), labels, 3) == plan
    assert plan.label_distributions()[1].tolist() == [0.0, 0.0, 0.0]


@pytest.mark.parametrize(
    "text",
    [
        "",
        "0\t1,2\n",
        "# alpha=1.0\tseed=0\n0\t0,1,2\n",
        "# alpha=1.0\tseed=0\tn_clients=2\n0\t0,1,2\n",
        "# alpha=1.0\tseed=0\tn_clients=1\n3\t0,1,2\n",
        "# alpha=1.0\tseed=0\tn_clients=1\n0\t0,x,2\n",
    ],
)
def test_malformed_plan_files(text):
    with pytest.raises(ConfigError):
        PartitionPlan.from_tsv(text, np.array([0, 1, 2]), 3)


def test_single_client():
    labels = balanced_labels(30)
    plan = PartitionPlan.single_client(labels, 3)
    assert plan.n_clients == 1
    assert np.array_equal(plan[0], np.arange(30))
    assert plan.alpha == np.inf
    assert PartitionPlan.from_tsv(plan.to_tsv(), labels, 3) == plan
