#!/usr/bin/env python3
# -*- coding: utf-8 -*-
# test/test_distance.py

import numpy as np
import pytest

from fedpet import config, distance
from fedpet.models import PartitionPlan


def test_js_distance():
    assert distance.js_distance([1, 0], [0, 1]) == 1.0
    assert distance.js_distance([0.2, 0.8], [0.2, 0.8]) == 0.0
    # Unnormalized inputs are normalized.
    assert distance.js_distance([2, 8], [0.2, 0.8]) == pytest.approx(0.0, abs=1e-8)
    d = distance.js_distance([0.5, 0.5, 0.0], [0.0, 0.5, 0.5])
    assert d == pytest.approx(np.sqrt(0.5))
    assert d == distance.js_distance([0.0, 0.5, 0.5], [0.5, 0.5, 0.0])


def test_empty_distributions():
    assert distance.js_distance([0, 0], [0, 0]) == 0.0
    assert distance.js_distance([0, 0], [1, 0]) == 1.0
    assert distance.total_variation([1, 0], [0, 0]) == 1.0


def test_total_variation():
    assert distance.total_variation([1, 0], [0, 1]) == 1.0
    assert distance.total_variation([3, 1], [1, 1]) == pytest.approx(0.25)


def test_measure_registry():
    assert set(distance.measures) >= {"JSD", "TVD"}
    assert distance.measures["TVD"] is distance.total_variation
    with pytest.raises(KeyError):
        distance.distance_matrix([[1, 0]], measure="EMD")


def test_distance_matrix():
    dists = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.5, 0.5, 0.0]])
    m = distance.distance_matrix(dists)
    assert np.array_equal(m, m.T)
    assert np.all(np.diag(m) == 0)
    assert m[0, 1] == 1.0
    assert 0 < m[0, 2] < 1
    tvd = distance.distance_matrix(dists, measure="TVD")
    assert tvd[0, 2] == pytest.approx(0.5)


def test_js_distance_matrix_of_plan():
    labels = np.array([0, 0, 1, 1, 2, 2])
    plan = PartitionPlan([[0, 1], [2, 3], [4, 5]], labels, 3, alpha=0.1, seed=0)
    m = distance.js_distance_matrix(plan)
    assert np.array_equal(m, np.ones((3, 3)) - np.eye(3))
    assert distance.mean_pairwise_distance(m) == 1.0

    same = PartitionPlan([[0, 2, 4], [1, 3, 5]], labels, 3, alpha=100.0, seed=0)
    assert distance.mean_pairwise_distance(distance.js_distance_matrix(same)) == 0.0


def test_mean_pairwise_distance():
    assert distance.mean_pairwise_distance(np.zeros((1, 1))) == 0.0
    m = np.array([[0.0, 0.2, 0.4], [0.2, 0.0, 0.6], [0.4, 0.6, 0.0]])
    assert distance.mean_pairwise_distance(m) == pytest.approx(0.4)


@config.override(PRECISION=3)
def test_matrix_to_tsv():
    m = np.array([[0.0, 0.12345], [0.12345, 0.0]])
    assert distance.matrix_to_tsv(m) == "0.000\t0.123\n0.123\t0.000\n"
