#!/usr/bin/env python3
# -*- coding: utf-8 -*-
# test/test_utils.py

import numpy as np
import pytest

from fedpet import config, utils


def test_rng_for_is_keyed():
    a = utils.rng_for(0, "local", 3, 7).normal(size=5)
    assert np.array_equal(a, utils.rng_for(0, "local", 3, 7).normal(size=5))
    assert not np.array_equal(a, utils.rng_for(0, "local", 3, 8).normal(size=5))
    assert not np.array_equal(a, utils.rng_for(1, "local", 3, 7).normal(size=5))
    assert not np.array_equal(a, utils.rng_for(0, "sample", 3, 7).normal(size=5))


def test_rng_for_rejects_negative_keys():
    with pytest.raises(ValueError):
        utils.rng_for(-1)
    with pytest.raises(ValueError):
        utils.rng_for(0, -3)


def test_config_hash():
    assert utils.config_hash({"a": 1, "b": [1, 2]}) == utils.config_hash({"b": [1, 2], "a": 1})
    assert utils.config_hash({"a": 1}) != utils.config_hash({"a": 2})
    assert len(utils.config_hash({})) == 40


def test_bitwise_equal():
    a = np.array([1.0, 0.0])
    assert utils.bitwise_equal(a, a.copy())
    assert not utils.bitwise_equal(a, np.array([1.0, -0.0]))
    assert not utils.bitwise_equal(a, a.astype(np.float32))
    assert not utils.bitwise_equal(a, a.reshape(2, 1))
    assert utils.bitwise_equal(np.asfortranarray(np.eye(2)), np.eye(2))


def test_freeze():
    a = np.arange(3.0)
    frozen = utils.freeze(a)
    assert frozen is not a
    assert not frozen.flags.writeable
    assert a.flags.writeable
    assert utils.freeze(frozen) is frozen
    with pytest.raises(ValueError):
        frozen[0] = 1.0


def test_np_hash():
    a = np.arange(6.0).reshape(2, 3)
    assert utils.np_hash(a) == utils.np_hash(np.asfortranarray(a))
    assert utils.np_hash(a) != utils.np_hash(a + 1)
    assert utils.np_hash(None) == hash(None)


def test_float_dtype():
    assert utils.float_dtype() == np.float64
    with config.override(FLOAT_DTYPE="float32"):
        assert utils.float_dtype() == np.float32


def test_load_json_data():
    shape = utils.load_json_data("roberta_base.json")
    assert shape["d_model"] == 768


class Timed:
    pass


@utils.time_annotated
def make_timed(x):
    t = Timed()
    t.x = x
    return t


def test_time_annotated():
    result = make_timed(3)
    assert result.x == 3
    assert result.wall_time >= 0
