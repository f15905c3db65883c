#!/usr/bin/env python3
# -*- coding: utf-8 -*-
# conftest.py

import example_models
import pytest

# Test fixtures from example models
# =============================================================================


# Model shapes and parameters
# ~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~


@pytest.fixture()
def toy_config():
    return example_models.toy_config()


@pytest.fixture()
def tiny_config():
    return example_models.tiny_config()


@pytest.fixture()
def toy_store():
    return example_models.toy_store()


@pytest.fixture()
def tiny_store():
    return example_models.tiny_store()


@pytest.fixture()
def attack_store():
    return example_models.attack_store()


# Data
# ~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~


@pytest.fixture()
def tiny_batch():
    return example_models.tiny_batch()


@pytest.fixture(scope="module")
def small_dataset():
    return example_models.small_dataset()


@pytest.fixture(scope="module")
def toy_dataset():
    return example_models.toy_dataset()


# Experiments
# ~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~


@pytest.fixture()
def tiny_experiment(tmp_path):
    return example_models.tiny_experiment(output_dir=str(tmp_path / "results"))
