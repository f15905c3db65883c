#!/usr/bin/env python3
# -*- coding: utf-8 -*-
# utils.py

"""
Functions used by more than one fedpet module, or that might be of external
use.
"""

import hashlib
import json
import os
from time import perf_counter

import decorator
import numpy as np

from . import config

_ROOT = os.path.abspath(os.path.dirname(__file__))


def np_immutable(a):
    """Mark ``a`` read-only in place and return it."""
    a.flags.writeable = False
    return a


def freeze(a):
    """Return an immutable version of array ``a``, copying it only if it is
    writable.
    """
    a = np.asarray(a)
    if a.flags.writeable:
        a = a.copy()
    return np_immutable(a)


def np_hash(a):
    """Hash the contents of array ``a``, independent of its memory layout."""
    if a is None:
        return hash(None)
    digest = hashlib.sha1(np.ascontiguousarray(a).tobytes()).hexdigest()
    return int(digest, 16)


def float_dtype():
    """Return the NumPy dtype of tensors for the current run."""
    return np.dtype(config.FLOAT_DTYPE)


def bitwise_equal(a, b):
    """Return whether two arrays have the same dtype, shape and bytes."""
    a, b = np.asarray(a), np.asarray(b)
    return (
        a.dtype == b.dtype
        and a.shape == b.shape
        and np.ascontiguousarray(a).tobytes() == np.ascontiguousarray(b).tobytes()
    )


def _key_int(key):
    if isinstance(key, (int, np.integer)) and not isinstance(key, bool):
        if key < 0:
            raise ValueError("RNG keys must be non-negative; got {}".format(key))
        return int(key)
    digest = hashlib.sha1(str(key).encode("utf-8")).hexdigest()
    return int(digest[:8], 16)


def rng_for(seed, *keys):
    """Return a NumPy ``Generator`` keyed by ``seed`` and any number of
    further keys.

    Every stochastic choice in fedpet draws from a stream keyed this way, so
    results do not depend on the order in which streams are created or on
    which worker creates them.

    Args:
        seed (int): The run seed.
        *keys (int or str): Further keys, e.g. a purpose tag, round number
            and client id.

    Returns:
        np.random.Generator: A fresh generator.

    Example:
        >>> a = rng_for(0, 'local', 3, 7).integers(1000)
        >>> b = rng_for(0, 'local', 3, 7).integers(1000)
        >>> a == b
        True
    """
    entropy = [_key_int(seed)] + [_key_int(k) for k in keys]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def canonical_json(obj):
    """Serialize ``obj`` as compact JSON with sorted keys."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_hash(obj):
    """Return the SHA-1 hex digest of the canonical JSON of ``obj``.

    The hash is stable under reordering of dictionary keys.

    Example:
        >>> config_hash({'a': 1, 'b': 2}) == config_hash({'b': 2, 'a': 1})
        True
    """
    return hashlib.sha1(canonical_json(obj).encode("utf-8")).hexdigest()


def load_json_data(filename):
    """Load a JSON file bundled in the package's ``resources`` directory."""
    with open(os.path.join(_ROOT, "resources", filename)) as f:
        return json.load(f)


@decorator.decorator
def time_annotated(func, *args, **kwargs):
    """Annotate the result of ``func`` with the wall time of the call.

    The result must accept a ``wall_time`` attribute.
    """
    start = perf_counter()
    result = func(*args, **kwargs)
    end = perf_counter()
    result.wall_time = round(end - start, config.PRECISION)
    return result
