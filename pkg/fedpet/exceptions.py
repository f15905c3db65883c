#!/usr/bin/env python3
# -*- coding: utf-8 -*-
# exceptions.py

"""fedpet exceptions."""


class ConfigError(ValueError):
    """A configuration object is invalid or cannot be satisfied."""


class DimensionError(ValueError):
    """Tensor shapes are incompatible for the requested operation."""


class InputError(ValueError):
    """A token id or label is outside its valid range."""

    def __init__(self, what, value, limit):
        self.what = what
        self.value = value
        self.limit = limit
        msg = "{} {} is out of range; must be in [0, {})."
        super().__init__(msg.format(what, value, limit))


class ContractError(RuntimeError):
    """An operation was called in violation of its calling contract."""


class PayloadError(ValueError):
    """A payload does not match the trainable parameter set."""


class NonFiniteError(FloatingPointError):
    """An operation produced NaN or infinite values."""

    def __init__(self, op):
        self.op = op
        super().__init__("Operation `{}` produced non-finite values.".format(op))


class CaptureError(ValueError):
    """A captured update cannot be converted to a gradient."""


class LeakUnavailableError(ValueError):
    """The attack target carries no word-embedding gradient."""


class CheckpointFormatError(ValueError):
    """A binary checkpoint or payload file is malformed."""


class SchemaVersionError(ValueError):
    """JSON was written with a different schema version."""
