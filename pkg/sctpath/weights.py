#!/usr/bin/env python
# pylint: disable=C0103,R0913,R0914
#
# A library that implements the sparse convolutional transformer for
# tissue-block classification on grids of tile embeddings.
# Copyright (C) 2026
# The sctpath developers
#
# This program is free software: you can redistribute it and/or modify
# it under the terms of the GNU Lesser Public License as published by
# the Free Software Foundation, either version 3 of the License, or
# (at your option) any later version.
#
# This program is distributed in the hope that it will be useful,
# but WITHOUT ANY WARRANTY; without even the implied warranty of
# MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
# GNU Lesser Public License for more details.
#
# You should have received a copy of the GNU Lesser Public License
# along with this program.  If not, see [http://www.gnu.org/licenses/].
"""This module provides the SCTW weights file format.

Layout, little-endian::

    "SCTW"  u16 version  u32 tensor count
    per tensor: u16 name length, UTF-8 name, u8 rank, u32 dims, f32 data
    u32 CRC32 of every byte between the magic and the CRC

The first tensor is ``__config__``, the architecture encoded by
model.config_to_vector(); every other tensor must have the shape that
architecture declares.
"""
import logging
import struct
import zlib

import numpy as np

from sctpath.blockdata import ByteReader
from sctpath.errors import (ConfigError, CorruptionError, FormatError,
                            SchemaError)
from sctpath.model import (config_from_vector, config_to_vector, params_class,
                           shapes_of)

logging.getLogger(__name__).addHandler(logging.NullHandler())
logger = logging.getLogger(__name__)

MAGIC = b"SCTW"
VERSION = 1
CONFIG_TENSOR = "__config__"

_HEADER = struct.Struct("<HI")
_NAME = struct.Struct("<H")
_RANK = struct.Struct("<B")
_CRC = struct.Struct("<I")


def _encode(name, array):
    bname = name.encode("utf-8")
    array = np.ascontiguousarray(array, dtype="<f4")
    dims = struct.pack("<{}I".format(array.ndim), *array.shape)
    return b"".join([_NAME.pack(len(bname)), bname, _RANK.pack(array.ndim),
                     dims, array.tobytes()])


def save_weights(params, path):
    """
    Writes ``params`` as float32 to an SCTW file.

    Args:
        params (ParamSet): SCT or ABMIL parameters.
        path (str): Output file.
    """
    tensors = [(CONFIG_TENSOR, config_to_vector(params.config))]
    tensors += list(params.tensors.items())
    payload = _HEADER.pack(VERSION, len(tensors)) + b"".join(
        _encode(name, value) for name, value in tensors)
    with open(path, "wb") as fd:
        fd.write(MAGIC + payload + _CRC.pack(zlib.crc32(payload)))
    logger.info("saved %d tensors to %s", len(tensors) - 1, path)


def _decode(reader):
    (length, ) = reader.unpack(_NAME)
    try:
        name = reader.take(length).decode("utf-8")
    except UnicodeDecodeError:
        raise CorruptionError("tensor name is not valid UTF-8")
    (rank, ) = reader.unpack(_RANK)
    shape = reader.unpack(struct.Struct("<{}I".format(rank)))
    count = int(np.prod(shape, dtype=np.int64))
    data = np.frombuffer(reader.take(4 * count), dtype="<f4")
    return name, data.reshape(shape).astype(np.float32)


def load_weights(path):
    """
    Reads an SCTW file.

    Returns:
        ParamSet: SctModelParams or AbmilParams, as the embedded config says.

    Raises:
        FormatError: Bad magic or unsupported version.
        CorruptionError: Truncated file or CRC mismatch.
        SchemaError: A tensor is missing, repeated, unexpected or has a shape
            the embedded config does not declare.
    """
    with open(path, "rb") as fd:
        data = fd.read()
    if len(data) < len(MAGIC) + _HEADER.size + _CRC.size:
        raise CorruptionError("{} is truncated ({} bytes)".format(
            path, len(data)))
    if data[:len(MAGIC)] != MAGIC:
        raise FormatError("bad magic {!r}, expected {!r}".format(
            data[:len(MAGIC)], MAGIC))
    payload, (crc, ) = data[len(MAGIC):-_CRC.size], _CRC.unpack(
        data[-_CRC.size:])
    (version, count) = _HEADER.unpack_from(payload)
    if version != VERSION:
        raise FormatError("unsupported SCTW version {} (this reader handles "
                          "{})".format(version, VERSION))
    if zlib.crc32(payload) != crc:
        raise CorruptionError("CRC mismatch in {}, the file is corrupted or "
                              "truncated".format(path))
    reader = ByteReader(payload, error=CorruptionError)
    reader.offset = _HEADER.size
    tensors = [_decode(reader) for _ in range(count)]
    if reader.offset != len(payload):
        raise CorruptionError("{} trailing bytes after tensor {}".format(
            len(payload) - reader.offset, count))
    if not tensors or tensors[0][0] != CONFIG_TENSOR:
        raise SchemaError("first tensor must be {}".format(CONFIG_TENSOR))
    try:
        config = config_from_vector(tensors[0][1])
    except ConfigError as exc:
        raise SchemaError("{}: {}".format(CONFIG_TENSOR, exc))
    expected = shapes_of(config)
    loaded = {}
    for name, value in tensors[1:]:
        if name in loaded:
            raise SchemaError("tensor {} appears twice".format(name))
        if name not in expected:
            raise SchemaError("unexpected tensor {}".format(name))
        shape = expected[name][0]
        if value.shape != tuple(shape):
            raise SchemaError("tensor {} has shape {}, the config declares "
                              "{}".format(name, value.shape, tuple(shape)))
        loaded[name] = value
    missing = [name for name in expected if name not in loaded]
    if missing:
        raise SchemaError("missing tensors: {}".format(", ".join(missing)))
    params = params_class(config)(config, [(name, loaded[name])
                                           for name in expected])
    logger.info("loaded %d tensors from %s", len(loaded), path)
    return params