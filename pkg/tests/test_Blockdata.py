#!/usr/bin/env python
# pylint: disable=C0103,R0904,W0212
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
import os
import struct
import tempfile
import unittest

import numpy as np

from sctpath import (Block, DetectionLabel, GradingLabel, Pattern, load_blocks,
                     normalize_coords, write_blocks)
from sctpath.errors import DataError, FormatError, SchemaError


def make_block(block_id="b", n=4, dim=3, label=DetectionLabel.BENIGN,
               grading=None, seed=0, slides=None):
    rng = np.random.default_rng(seed)
    coords = np.column_stack([np.arange(n), np.arange(n) % 2])
    slide_idx = np.ones(n, dtype=int) if slides is None else slides
    return Block(block_id, rng.standard_normal((n, dim)), coords, slide_idx,
                 label, grading)


class TestBlock(unittest.TestCase):
    def test_valid_block(self):
        b = make_block(n=5, dim=7)
        self.assertEqual(b.n_tiles, 5)
        self.assertEqual(b.dim, 7)
        self.assertEqual(b.n_slides, 1)
        self.assertEqual(b.features.dtype, np.float32)
        self.assertFalse(b.features.flags.writeable)

    def test_empty_block(self):
        with self.assertRaises(DataError):
            Block("e", np.zeros((0, 3)), np.zeros((0, 2)), np.zeros(0))

    def test_non_finite_names_block_and_tile(self):
        features = np.zeros((3, 2))
        features[2, 1] = np.nan
        with self.assertRaisesRegex(DataError, "bad.*tile 2"):
            Block("bad", features, [[0, 0], [1, 0], [2, 0]], [1, 1, 1])

    def test_slides_must_be_contiguous(self):
        with self.assertRaises(DataError):
            Block("s", np.zeros((2, 2)), [[0, 0], [1, 0]], [1, 3])

    def test_duplicate_coordinates_within_slide(self):
        with self.assertRaises(DataError):
            Block("d", np.zeros((2, 2)), [[0, 0], [0, 0]], [1, 1])

    def test_same_coordinates_on_different_slides(self):
        b = Block("d", np.zeros((2, 2)), [[0, 0], [0, 0]], [1, 2])
        self.assertEqual(b.n_slides, 2)

    def test_grading_must_agree_with_label(self):
        with self.assertRaises(DataError):
            make_block(label=DetectionLabel.BENIGN,
                       grading=GradingLabel(Pattern.P3, Pattern.P4))
        with self.assertRaises(DataError):
            make_block(label=DetectionLabel.CARCINOMA,
                       grading=GradingLabel(Pattern.NONE, Pattern.NONE))

    def test_mixed_grading(self):
        with self.assertRaises(DataError):
            GradingLabel(Pattern.NONE, Pattern.P4)

    def test_grading_classes(self):
        self.assertEqual(GradingLabel(Pattern.P4, Pattern.P3).classes, (2, 1))
        self.assertEqual(GradingLabel(Pattern.NONE, Pattern.NONE).classes,
                         (0, 0))


class TestNormalizeCoords(unittest.TestCase):
    def test_single_slide(self):
        b = Block("n", np.zeros((2, 1)), [[5, 7], [6, 7]], [1, 1])
        self.assertEqual(normalize_coords(b).coords.tolist(), [[0, 0], [1, 0]])

    def test_idempotent(self):
        b = Block("n", np.zeros((2, 1)), [[0, 3], [2, 0]], [1, 1])
        np.testing.assert_array_equal(normalize_coords(b).coords, b.coords)

    def test_slides_are_zeroed_independently(self):
        b = Block("n", np.zeros((4, 1)), [[100, 0], [101, 2], [3, 3], [5, 4]],
                  [1, 1, 2, 2])
        self.assertEqual(normalize_coords(b).coords.tolist(),
                         [[0, 0], [1, 2], [0, 0], [2, 1]])


class TestSctbFormat(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.path = os.path.join(self.tmp.name, "data.sctb")

    def tearDown(self):
        self.tmp.cleanup()

    def test_round_trip(self):
        blocks = [
            make_block("a", n=3, dim=4, seed=1),
            make_block("b", n=5, dim=4, seed=2,
                       label=DetectionLabel.CARCINOMA,
                       grading=GradingLabel(Pattern.P4, Pattern.P5),
                       slides=np.array([1, 1, 2, 2, 2])),
            make_block("c", n=2, dim=4, seed=3,
                       label=DetectionLabel.UNKNOWN),
        ]
        write_blocks(blocks, self.path)
        loaded = load_blocks(self.path)
        self.assertEqual([b.block_id for b in loaded], ["a", "b", "c"])
        for orig, back in zip(blocks, loaded):
            self.assertEqual(orig.features.tobytes(), back.features.tobytes())
            np.testing.assert_array_equal(orig.coords, back.coords)
            np.testing.assert_array_equal(orig.slide_idx, back.slide_idx)
            self.assertEqual(orig.label, back.label)
            self.assertEqual(orig.grading, back.grading)

    def test_bad_magic(self):
        write_blocks([make_block()], self.path)
        with open(self.path, "r+b") as fd:
            fd.write(b"XXXX")
        with self.assertRaises(FormatError):
            load_blocks(self.path)

    def test_higher_version(self):
        write_blocks([make_block()], self.path)
        with open(self.path, "r+b") as fd:
            fd.seek(4)
            fd.write(struct.pack("<H", 3))
        with self.assertRaisesRegex(FormatError, "version 3"):
            load_blocks(self.path)

    def test_truncated(self):
        write_blocks([make_block()], self.path)
        with open(self.path, "rb") as fd:
            data = fd.read()
        with open(self.path, "wb") as fd:
            fd.write(data[:-5])
        with self.assertRaises(FormatError):
            load_blocks(self.path)

    def _raw_block(self, bid, dim, version=1, label=(0, 0, 0), x=0, y=0):
        counts = struct.pack("<HI", 1, 1)
        if version == 2:
            counts += struct.pack("<H", dim)
        tile = struct.pack("<Hii", 1, x, y) + struct.pack("<{}f".format(dim),
                                                          *range(dim))
        return (struct.pack("<H", len(bid)) + bid.encode() +
                struct.pack("<BBB", *label) + counts + tile)

    def test_reads_hand_packed_version_1(self):
        data = (struct.pack("<4sHHI", b"SCTB", 1, 2, 2) +
                self._raw_block("b1", 2, x=5, y=-3) +
                self._raw_block("b2", 2, label=(1, 4, 3)))
        with open(self.path, "wb") as fd:
            fd.write(data)
        first, second = load_blocks(self.path)
        self.assertEqual(first.block_id, "b1")
        self.assertEqual(first.coords.tolist(), [[5, -3]])
        self.assertEqual(first.features.tolist(), [[0.0, 1.0]])
        self.assertEqual(second.label, DetectionLabel.CARCINOMA)
        self.assertEqual(second.grading, GradingLabel(Pattern.P4, Pattern.P3))

    def test_default_writer_matches_hand_packed_layout(self):
        block = Block("b1", [[0.0, 1.0]], [[5, -3]], [1])
        write_blocks([block], self.path)
        with open(self.path, "rb") as fd:
            data = fd.read()
        self.assertEqual(
            data, struct.pack("<4sHHI", b"SCTB", 1, 2, 1) +
            self._raw_block("b1", 2, label=(255, 255, 255), x=5, y=-3))

    def test_version_2_round_trip(self):
        blocks = [make_block("a", dim=4, seed=1), make_block("b", dim=4)]
        write_blocks(blocks, self.path, version=2)
        loaded = load_blocks(self.path)
        for orig, back in zip(blocks, loaded):
            self.assertEqual(orig.features.tobytes(), back.features.tobytes())
        self.assertEqual(os.path.getsize(self.path),
                         12 + sum(2 + 1 + 3 + 6 + 2 + 4 * (10 + 16)
                                  for _ in blocks))

    def test_inconsistent_dimension_names_block(self):
        data = (struct.pack("<4sHHI", b"SCTB", 2, 4, 2) +
                self._raw_block("first", 4, version=2) +
                self._raw_block("second", 8, version=2))
        with open(self.path, "wb") as fd:
            fd.write(data)
        with self.assertRaisesRegex(SchemaError, "block 2"):
            load_blocks(self.path)

    def test_unknown_write_version(self):
        with self.assertRaises(FormatError):
            write_blocks([make_block()], self.path, version=3)

    def test_write_rejects_mixed_dimensions(self):
        with self.assertRaises(SchemaError):
            write_blocks([make_block(dim=4), make_block(dim=8)], self.path)


if __name__ == '__main__':
    unittest.main()
