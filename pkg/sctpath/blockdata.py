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
"""This module provides the data model for embedded tissue blocks and the SCTB
container format they are stored in.

A block is the unit of prediction: the tile embeddings of every slide cut from
one tissue block, with integer tile-grid coordinates and the 1-based index of
the slide each tile came from.

SCTB layout (little endian)::

    magic "SCTB" | version u16 | D u16 | block count u32
    per block:
        id length u16 | UTF-8 id
        detection u8 (0 benign, 1 carcinoma, 255 unknown)
        primary u8 | secondary u8 (0 none, 3/4/5, 255 unknown)
        slide count u16 | tile count u32
        block D u16 (version 2 only)
        per tile: slide u16 | x i32 | y i32 | D x f32

Version 1 is the default. Version 2 repeats D in every block header so a block
written with another dimension is reported by name instead of misreading the
rest of the file.
"""
import enum
import logging
import struct
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from sctpath.errors import DataError, FormatError, InputError, SchemaError

logging.getLogger(__name__).addHandler(logging.NullHandler())
logger = logging.getLogger(__name__)

MAGIC = b"SCTB"
VERSION = 1
VERSIONS = (1, 2)

_HEADER = struct.Struct("<4sHHI")
_U16 = struct.Struct("<H")
_LABELS = struct.Struct("<BBB")
_COUNTS = struct.Struct("<HI")


class DetectionLabel(enum.IntEnum):
    BENIGN = 0
    CARCINOMA = 1
    UNKNOWN = 255


class Pattern(enum.IntEnum):
    """Gleason pattern. The value is the pattern number, 0 for none."""
    NONE = 0
    P3 = 3
    P4 = 4
    P5 = 5
    UNKNOWN = 255


#: Class order of the grading heads.
PATTERN_CLASSES = (Pattern.NONE, Pattern.P3, Pattern.P4, Pattern.P5)


@dataclass(frozen=True)
class GradingLabel:
    """Primary and secondary Gleason pattern of a block."""
    primary: Pattern
    secondary: Pattern

    def __post_init__(self):
        object.__setattr__(self, "primary", Pattern(self.primary))
        object.__setattr__(self, "secondary", Pattern(self.secondary))
        if (self.primary == Pattern.NONE) != (self.secondary == Pattern.NONE):
            raise DataError(
                "primary and secondary pattern must both be none or both be "
                "set, got {}+{}".format(self.primary.name, self.secondary.name))

    @property
    def classes(self):
        """Head class indices (0 none, 1..3 for patterns 3..5)."""
        return (PATTERN_CLASSES.index(self.primary),
                PATTERN_CLASSES.index(self.secondary))


def _frozen(array, dtype):
    array = np.array(array, dtype=dtype)
    array.flags.writeable = False
    return array


@dataclass(frozen=True, eq=False)
class Block:
    """
    One tissue block.

    Attributes:
        block_id (str): Identifier, unique within a dataset.
        features (numpy.ndarray): N x D float32 tile embeddings.
        coords (numpy.ndarray): N x 2 int64 tile-grid coordinates (x, y).
        slide_idx (numpy.ndarray): N int64 slide indices, contiguous from 1.
        label (DetectionLabel): Block-level detection label.
        grading (Optional[GradingLabel]): Gleason patterns when known.
    """
    block_id: str
    features: np.ndarray
    coords: np.ndarray
    slide_idx: np.ndarray
    label: DetectionLabel = DetectionLabel.UNKNOWN
    grading: Optional[GradingLabel] = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, "features", _frozen(self.features, np.float32))
        object.__setattr__(self, "coords", _frozen(self.coords, np.int64))
        object.__setattr__(self, "slide_idx", _frozen(self.slide_idx, np.int64))
        object.__setattr__(self, "label", DetectionLabel(self.label))
        self._validate()

    def _validate(self):
        bid = self.block_id
        if self.features.ndim != 2 or self.features.shape[0] < 1:
            raise DataError("block {}: features must be a non-empty N x D "
                            "matrix".format(bid))
        n = self.features.shape[0]
        if self.coords.shape != (n, 2):
            raise DataError("block {}: coords must be {} x 2, got {}".format(
                bid, n, self.coords.shape))
        if self.slide_idx.shape != (n, ):
            raise DataError("block {}: slide_idx must have {} entries".format(
                bid, n))
        bad = np.flatnonzero(~np.isfinite(self.features).all(axis=1))
        if bad.size:
            raise DataError("block {}: non-finite feature in tile {}".format(
                bid, int(bad[0])))
        slides = np.unique(self.slide_idx)
        if slides[0] != 1 or slides[-1] != slides.size:
            raise DataError("block {}: slide indices must be contiguous from "
                            "1, got {}".format(bid, slides.tolist()))
        keys = np.column_stack([self.slide_idx, self.coords])
        if np.unique(keys, axis=0).shape[0] != n:
            raise DataError("block {}: duplicate tile coordinates within a "
                            "slide".format(bid))
        if self.grading is not None and self.label != DetectionLabel.UNKNOWN:
            benign = self.label == DetectionLabel.BENIGN
            if benign != (self.grading.primary == Pattern.NONE):
                raise DataError(
                    "block {}: grading {}+{} contradicts label {}".format(
                        bid, self.grading.primary.name,
                        self.grading.secondary.name, self.label.name))

    @property
    def n_tiles(self):
        return self.features.shape[0]

    @property
    def n_slides(self):
        return int(self.slide_idx.max())

    @property
    def dim(self):
        return self.features.shape[1]

    def permuted(self, order):
        """Returns the same block with its tiles listed in ``order``."""
        order = np.asarray(order)
        return replace(self, features=self.features[order],
                       coords=self.coords[order],
                       slide_idx=self.slide_idx[order])


def normalize_coords(block):
    """
    Shifts every slide of ``block`` so its minimum x and minimum y are 0.

    Args:
        block (Block): Block to normalise.

    Returns:
        Block: A new block; relative geometry within each slide is unchanged.
    """
    coords = np.array(block.coords)
    for s in np.unique(block.slide_idx):
        on_slide = block.slide_idx == s
        coords[on_slide] -= coords[on_slide].min(axis=0)
    return replace(block, coords=coords)


def _tile_dtype(dim):
    return np.dtype([("slide", "<u2"), ("x", "<i4"), ("y", "<i4"),
                     ("f", "<f4", (dim, ))])


def _grading_codes(block):
    if block.grading is None:
        return int(Pattern.UNKNOWN), int(Pattern.UNKNOWN)
    return int(block.grading.primary), int(block.grading.secondary)


def write_blocks(blocks, path, version=VERSION):
    """
    Writes ``blocks`` to an SCTB file.

    Args:
        blocks (list(Block)): Blocks sharing one embedding dimension.
        path (str): Output file.
        version (int): Layout version, 1 or 2.

    Raises:
        SchemaError: When the blocks do not share one embedding dimension.
    """
    if version not in VERSIONS:
        raise FormatError("cannot write SCTB version {}".format(version))
    blocks = list(blocks)
    dim = blocks[0].dim if blocks else 0
    chunks = [_HEADER.pack(MAGIC, version, dim, len(blocks))]
    for i, block in enumerate(blocks):
        if block.dim != dim:
            raise SchemaError("block {} ({}) has D={}, expected D={}".format(
                i + 1, block.block_id, block.dim, dim))
        bid = block.block_id.encode("utf-8")
        records = np.empty(block.n_tiles, dtype=_tile_dtype(dim))
        records["slide"] = block.slide_idx
        records["x"] = block.coords[:, 0]
        records["y"] = block.coords[:, 1]
        records["f"] = block.features
        chunks += [
            _U16.pack(len(bid)), bid,
            _LABELS.pack(int(block.label), *_grading_codes(block)),
            _COUNTS.pack(block.n_slides, block.n_tiles)
        ]
        if version == 2:
            chunks.append(_U16.pack(dim))
        chunks.append(records.tobytes())
    with open(path, "wb") as fd:
        fd.write(b"".join(chunks))
    logger.info("wrote %d blocks (D=%d) to %s", len(blocks), dim, path)


class ByteReader:
    """Sequential little-endian reader raising ``error`` on truncation."""

    def __init__(self, data, error=FormatError):
        self.data = data
        self.offset = 0
        self.error = error

    def unpack(self, fmt):
        if self.offset + fmt.size > len(self.data):
            raise self.error("unexpected end of file at byte {}".format(
                self.offset))
        values = fmt.unpack_from(self.data, self.offset)
        self.offset += fmt.size
        return values

    def take(self, size):
        if self.offset + size > len(self.data):
            raise self.error("unexpected end of file at byte {}".format(
                self.offset))
        chunk = self.data[self.offset:self.offset + size]
        self.offset += size
        return chunk


def _decode_block(reader, number, dim, version):
    (id_len, ) = reader.unpack(_U16)
    try:
        bid = reader.take(id_len).decode("utf-8")
    except UnicodeDecodeError:
        raise FormatError("block {}: id is not valid UTF-8".format(number))
    label, primary, secondary = reader.unpack(_LABELS)
    n_slides, n_tiles = reader.unpack(_COUNTS)
    if version == 2:
        (block_dim, ) = reader.unpack(_U16)
        if block_dim != dim:
            raise SchemaError("block {} ({}) has D={}, file declares "
                              "D={}".format(number, bid, block_dim, dim))
    tile_dtype = _tile_dtype(dim)
    records = np.frombuffer(reader.take(n_tiles * tile_dtype.itemsize),
                            dtype=tile_dtype)
    bad = np.flatnonzero(~np.isfinite(records["f"]).all(axis=1))
    if bad.size:
        raise DataError("block {}: non-finite feature in tile {}".format(
            bid, int(bad[0])))
    try:
        label = DetectionLabel(label)
        grading = None
        if (primary, secondary) != (Pattern.UNKNOWN, Pattern.UNKNOWN):
            grading = GradingLabel(Pattern(primary), Pattern(secondary))
    except ValueError as exc:
        raise DataError("block {}: {}".format(bid, exc))
    block = Block(bid, records["f"],
                  np.column_stack([records["x"], records["y"]]),
                  records["slide"], label, grading)
    if block.n_slides != n_slides:
        raise DataError("block {}: header declares {} slides, tiles use "
                        "{}".format(bid, n_slides, block.n_slides))
    return block


def load_blocks(path):
    """
    Reads every block of an SCTB file, in file order.

    Args:
        path (str): File to read.

    Returns:
        list(Block): The blocks.

    Raises:
        FormatError: Bad magic, unsupported version or truncated file.
        SchemaError: A version 2 block declares a dimension other than the
            file's.
        DataError: Non-finite features or inconsistent labels.
    """
    with open(path, "rb") as fd:
        reader = ByteReader(fd.read())
    magic, version, dim, count = reader.unpack(_HEADER)
    if magic != MAGIC:
        raise FormatError("bad magic {!r}, expected {!r}".format(magic, MAGIC))
    if version not in VERSIONS:
        raise FormatError("unsupported SCTB version {} (this reader handles "
                          "{})".format(version, VERSIONS))
    blocks = [
        _decode_block(reader, i + 1, dim, version) for i in range(count)
    ]
    if reader.offset != len(reader.data):
        raise FormatError("{} trailing bytes after block {}".format(
            len(reader.data) - reader.offset, count))
    logger.info("loaded %d blocks (D=%d) from %s", len(blocks), dim, path)
    return blocks
