#!/usr/bin/env python3
# -*- coding: utf-8 -*-
# constants.py

"""
Package-wide constants.
"""

#: Difference below which two reported metrics are considered equal.
EPSILON = None
# NOTE: This is set dynamically by `conf.py` when PRECISION is changed; see
# `conf.py` for default value.

#: The joblib ``Memory`` object used to cache pretrained backbones.
joblib_memory = None
# NOTE: This is set dynamically by `conf.py` when FS_CACHE_DIRECTORY or
# FS_CACHE_VERBOSITY is changed.

#: One megabyte (decimal).
MB = 10 ** 6

#: One gigabyte (decimal).
GB = 10 ** 9

#: Token id used for padding; never a signal or noise token.
PAD_ID = 0

#: Additive attention bias for masked key positions.
MASK_BIAS = -1e9

#: Gradient rows with a norm at or below this are treated as zero.
GRAD_ZERO_TOL = 1e-12

#: Layer-norm epsilon.
LAYER_NORM_EPS = 1e-5

#: Standard deviation of truncated-normal weight initialization.
INIT_STD = 0.02

#: Magic bytes opening every checkpoint and payload file.
CHECKPOINT_MAGIC = b"FPET"

#: Binary format version.
CHECKPOINT_VERSION = 1

#: Kinds of binary record files.
KIND_CHECKPOINT = 0
KIND_PAYLOAD = 1

#: Version of the JSON schemas for experiment configs and reports.
SCHEMA_VERSION = 1

#: Key holding the schema version in JSON documents.
SCHEMA_KEY = "schema_version"

#: Fraction of centralized FullFT accuracy counted as acceptable.
ACCEPTABLE_FRACTION = 0.95

#: Split fractions of generated datasets.
TRAIN_FRACTION = 0.8
VAL_FRACTION = 0.1
