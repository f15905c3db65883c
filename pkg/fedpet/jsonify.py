#!/usr/bin/env python3
# -*- coding: utf-8 -*-
# jsonify.py

"""
NumPy-aware JSON serialization of fedpet configs and records.

fedpet objects that are written to disk implement a ``to_json`` method which
returns a dictionary of attribute names and attribute values, and a
``from_json`` classmethod that rebuilds the object from such a dictionary::

    class Budget:
        def __init__(self, rounds):
            self.rounds = rounds

        def to_json(self):
            return {'rounds': self.rounds}

        @classmethod
        def from_json(cls, dct):
            return cls(dct['rounds'])

Top-level documents (experiment configs, attack reports, manifests) carry a
``schema_version`` key; loading a document written with a different schema
raises ``SchemaVersionError``.
"""

import dataclasses
import json
from functools import singledispatch
from pathlib import PurePath

import numpy as np

from . import constants, exceptions


@singledispatch
def jsonify(obj):
    """Convert ``obj`` to plain lists, dicts and scalars that ``json`` can
    write.

    Objects with a ``to_json`` method are replaced by its result; NumPy
    arrays and scalars become lists and native numbers. Anything else is
    returned unchanged.

    >>> jsonify({'acc': np.float64(0.5), 'clients': (np.int64(3), 4)})
    {'acc': 0.5, 'clients': [3, 4]}
    """
    to_json = getattr(obj, "to_json", None)
    if to_json is None:
        return obj
    return jsonify(to_json())


@jsonify.register(dict)
def _(obj):
    return {key: jsonify(value) for key, value in obj.items()}


@jsonify.register(list)
@jsonify.register(tuple)
def _(obj):
    return [jsonify(item) for item in obj]


@jsonify.register(np.ndarray)
def _(obj):
    return obj.tolist()


@jsonify.register(np.generic)
def _(obj):
    return obj.item()


@jsonify.register(PurePath)
def _(obj):
    return str(obj)


def dumps(obj, **kwargs):
    """Return ``obj`` as a compact JSON string."""
    kwargs.setdefault("separators", (",", ":"))
    return json.dumps(jsonify(obj), **kwargs)


def dump(obj, fp, **kwargs):
    """Write ``obj`` as compact JSON to the file object ``fp``."""
    kwargs.setdefault("separators", (",", ":"))
    json.dump(jsonify(obj), fp, **kwargs)


def with_schema(dct):
    """Return a copy of ``dct`` stamped with the current schema version."""
    out = {constants.SCHEMA_KEY: constants.SCHEMA_VERSION}
    out.update(jsonify(dct))
    return out


def check_schema(dct):
    """Check a document's schema version and return it without the version
    key.

    Raises:
        SchemaVersionError: If the version is missing or differs from
            ``constants.SCHEMA_VERSION``.
    """
    if not isinstance(dct, dict):
        raise exceptions.SchemaVersionError(
            "Expected a JSON object at the top level; got {}.".format(
                type(dct).__name__
            )
        )
    version = dct.get(constants.SCHEMA_KEY)
    if version != constants.SCHEMA_VERSION:
        raise exceptions.SchemaVersionError(
            "Cannot load JSON written with a different schema. "
            "JSON version = {0}, current version = {1}.".format(
                version, constants.SCHEMA_VERSION
            )
        )
    return {k: v for k, v in dct.items() if k != constants.SCHEMA_KEY}


def build_dataclass(cls, dct):
    """Build dataclass ``cls`` from a dictionary of field values.

    Raises:
        ConfigError: If ``dct`` names a field that ``cls`` does not have.
    """
    if not isinstance(dct, dict):
        raise exceptions.ConfigError(
            "{} must be given as a JSON object.".format(cls.__name__)
        )
    fields = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(dct) - fields)
    if unknown:
        raise exceptions.ConfigError(
            "Unknown {} fields: {}.".format(cls.__name__, unknown)
        )
    try:
        return cls(**dct)
    except TypeError as e:
        raise exceptions.ConfigError(str(e)) from e


def loads(string):
    """Deserialize a JSON string to a Python object."""
    return json.loads(string)


def load(fp):
    """Deserialize a JSON stream to a Python object."""
    return json.load(fp)


def load_document(path):
    """Load a schema-versioned JSON document from ``path``."""
    with open(path) as f:
        return check_schema(load(f))


def write_document(dct, path, **user_kwargs):
    """Write ``dct`` to ``path`` as a schema-versioned JSON document."""
    user_kwargs.setdefault("indent", 2)
    user_kwargs.setdefault("sort_keys", True)
    user_kwargs.setdefault("separators", (",", ": "))
    with open(path, "w") as f:
        dump(with_schema(dct), f, **user_kwargs)
        f.write("\n")
