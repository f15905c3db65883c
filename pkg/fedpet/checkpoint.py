#!/usr/bin/env python3
# -*- coding: utf-8 -*-
# checkpoint.py

"""
Binary files of named tensors.

Checkpoints (a whole |ParameterStore|) and payloads (the trainable set sent
between clients and the server) share one record format. All integers are
little-endian::

    magic          4 bytes   b"FPET"
    version        uint16
    kind           uint8     0 = checkpoint, 1 = payload
    width          uint8     bytes per scalar, 4 or 8
    config length  uint32
    config         UTF-8 JSON (empty for payloads)
    count          uint32
    count records of:
        name length  uint16
        name         UTF-8
        ndim         uint8
        extents      ndim x uint32
        values       little-endian IEEE floats, row-major

Writing a store at its native width and reading it back is bitwise exact.
"""

import json
import logging
import struct

import numpy as np

from . import constants, utils
from .exceptions import CheckpointFormatError
from .model import ModelConfig, ParameterStore

log = logging.getLogger(__name__)

_HEADER = struct.Struct("<4sHBBI")
_U32 = struct.Struct("<I")
_U16 = struct.Struct("<H")
_U8 = struct.Struct("<B")

_DTYPES = {4: np.dtype("<f4"), 8: np.dtype("<f8")}


def _wire_dtype(width):
    try:
        return _DTYPES[width]
    except KeyError:
        raise ValueError("Scalar width must be 4 or 8 bytes; got {}".format(width))


def record_length(name, shape, width):
    """Bytes taken by one tensor record."""
    return (
        _U16.size
        + len(name.encode("utf-8"))
        + _U8.size
        + _U32.size * len(shape)
        + width * int(np.prod(shape, dtype=np.int64))
    )


def header_length(config_bytes=0):
    """Bytes before the first record."""
    return _HEADER.size + config_bytes + _U32.size


def encoded_length(layout, width, config_bytes=0):
    """Length of the file holding tensors of the given ``(name, shape)``
    layout, computed without allocating them.
    """
    return header_length(config_bytes) + sum(
        record_length(name, shape, width) for name, shape in layout
    )


def encode(records, kind, width, config_record=None):
    """Serialize ``(name, array)`` records.

    Args:
        records (Iterable[tuple[str, np.ndarray]]): Tensors, written in the
            given order.
        kind (int): ``KIND_CHECKPOINT`` or ``KIND_PAYLOAD``.
        width (int): Bytes per scalar.

    Keyword Args:
        config_record (dict): JSON-encodable model configuration.

    Returns:
        bytes: The file contents.
    """
    dtype = _wire_dtype(width)
    config_bytes = (
        b"" if config_record is None else utils.canonical_json(config_record).encode("utf-8")
    )
    records = list(records)
    parts = [
        _HEADER.pack(
            constants.CHECKPOINT_MAGIC,
            constants.CHECKPOINT_VERSION,
            kind,
            width,
            len(config_bytes),
        ),
        config_bytes,
        _U32.pack(len(records)),
    ]
    for name, array in records:
        array = np.asarray(array)
        name_bytes = name.encode("utf-8")
        parts.append(_U16.pack(len(name_bytes)))
        parts.append(name_bytes)
        parts.append(_U8.pack(array.ndim))
        parts.extend(_U32.pack(n) for n in array.shape)
        parts.append(np.ascontiguousarray(array, dtype=dtype).tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, data):
        self.data = memoryview(data)
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.data):
            raise CheckpointFormatError(
                "File is truncated: needed {} bytes at offset {}, {} remain".format(
                    n, self.pos, len(self.data) - self.pos
                )
            )
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt):
        return fmt.unpack(self.take(fmt.size))


def decode(data, dtype=None):
    """Parse file contents produced by ``encode``.

    Keyword Args:
        dtype (np.dtype): Dtype of the returned arrays; defaults to the
            run's float dtype.

    Returns:
        tuple: ``(kind, width, config_record, records)`` where
        ``config_record`` is ``None`` when absent and ``records`` is a list
        of ``(name, array)`` pairs.

    Raises:
        CheckpointFormatError: On a bad magic number, unknown version or
            scalar width, truncation or trailing bytes.
    """
    dtype = utils.float_dtype() if dtype is None else np.dtype(dtype)
    reader = _Reader(data)
    magic, version, kind, width, config_len = reader.unpack(_HEADER)
    if magic != constants.CHECKPOINT_MAGIC:
        raise CheckpointFormatError("Bad magic number {!r}".format(magic))
    if version != constants.CHECKPOINT_VERSION:
        raise CheckpointFormatError(
            "Unsupported format version {} (expected {})".format(
                version, constants.CHECKPOINT_VERSION
            )
        )
    if width not in _DTYPES:
        raise CheckpointFormatError("Unsupported scalar width {}".format(width))
    config_record = None
    if config_len:
        config_record = json.loads(bytes(reader.take(config_len)).decode("utf-8"))
    (count,) = reader.unpack(_U32)

    records = []
    for _ in range(count):
        (name_len,) = reader.unpack(_U16)
        name = bytes(reader.take(name_len)).decode("utf-8")
        (ndim,) = reader.unpack(_U8)
        shape = tuple(reader.unpack(_U32)[0] for _ in range(ndim))
        n = int(np.prod(shape, dtype=np.int64))
        values = np.frombuffer(reader.take(n * width), dtype=_DTYPES[width])
        records.append((name, values.reshape(shape).astype(dtype)))
    if reader.pos != len(reader.data):
        raise CheckpointFormatError(
            "{} trailing bytes after the last record".format(len(reader.data) - reader.pos)
        )
    return kind, width, config_record, records


def save_store(store, path, width=None):
    """Write a |ParameterStore| checkpoint; ``width`` defaults to the widest
    itemsize among the stored arrays, so saving never narrows them.
    """
    if width is None:
        width = max(
            (value.dtype.itemsize for _, value in store.items()),
            default=utils.float_dtype().itemsize,
        )
    data = encode(
        store.items(),
        constants.KIND_CHECKPOINT,
        width,
        config_record=store.config.to_json(),
    )
    with open(path, "wb") as f:
        f.write(data)
    log.info("Wrote checkpoint %s (%s tensors, %s bytes)", path, len(store), len(data))
    return len(data)


def load_store(path):
    """Read a checkpoint written by ``save_store``.

    Raises:
        CheckpointFormatError: If the file is not a checkpoint.
    """
    with open(path, "rb") as f:
        kind, _, config_record, records = decode(f.read())
    if kind != constants.KIND_CHECKPOINT or config_record is None:
        raise CheckpointFormatError("{} is not a model checkpoint".format(path))
    return ParameterStore(ModelConfig.from_json(config_record), dict(records))
