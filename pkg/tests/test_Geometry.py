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
import unittest

import numpy as np

from sctpath import build_receptive_fields, index_tiles, partition_cells
from sctpath.errors import ConfigError, InputError, UnsupportedConfigError
from sctpath.geometry import PAD


def random_layout(rng, n, side):
    cells = rng.choice(side * side, size=n, replace=False)
    return np.column_stack([cells % side, cells // side])


def brute_force_fields(coords, k):
    r = k // 2
    n = len(coords)
    fields = np.full((n, k * k), PAD)
    for i in range(n):
        for j in range(n):
            dx, dy = coords[j] - coords[i]
            if abs(dx) <= r and abs(dy) <= r:
                fields[i, (dy + r) * k + (dx + r)] = j
    return fields


class TestIndexTiles(unittest.TestCase):
    def test_single_slide_unchanged(self):
        coords = np.array([[0, 0], [3, 1], [2, 5]])
        out = index_tiles(coords, [1, 1, 1])
        np.testing.assert_array_equal(out.coords, coords)

    def test_two_slides(self):
        out = index_tiles([[0, 0], [4, 6], [1, 2]], [1, 1, 2])
        self.assertEqual(out.coords[2].tolist(), [6, 9])

    def test_cumulative_offsets(self):
        coords = [[0, 0], [10, 10], [0, 0], [2, 2], [0, 0]]
        out = index_tiles(coords, [1, 1, 2, 2, 3])
        self.assertEqual(out.per_slide_offsets.tolist(),
                         [[0, 0], [11, 11], [14, 14]])
        self.assertEqual(out.coords[4].tolist(), [14, 14])

    def test_duplicates_rejected(self):
        with self.assertRaises(InputError):
            index_tiles([[1, 1], [1, 1]], [1, 1])

    def test_no_collisions(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            n_slides = int(rng.integers(1, 7))
            coords, slides = [], []
            for s in range(1, n_slides + 1):
                n = int(rng.integers(1, 12))
                coords.append(random_layout(rng, n, 5))
                slides += [s] * n
            out = index_tiles(np.concatenate(coords), slides)
            self.assertEqual(np.unique(out.coords, axis=0).shape[0],
                             len(slides))

    def test_order_free(self):
        rng = np.random.default_rng(1)
        coords = np.concatenate([random_layout(rng, 8, 4),
                                 random_layout(rng, 6, 4)])
        slides = np.array([1] * 8 + [2] * 6)
        perm = rng.permutation(14)
        a = index_tiles(coords, slides).coords
        b = index_tiles(coords[perm], slides[perm]).coords
        np.testing.assert_array_equal(a[perm], b)


class TestReceptiveFields(unittest.TestCase):
    def test_k1(self):
        rf = build_receptive_fields([[0, 0], [1, 0], [7, 3]], 1)
        self.assertEqual(rf.fields.tolist(), [[0], [1], [2]])
        self.assertTrue(rf.mask.all())

    def test_sparse_example(self):
        rf = build_receptive_fields([[0, 0], [1, 0], [5, 5]], 3)
        self.assertEqual(sorted(rf.fields[0][rf.mask[0]].tolist()), [0, 1])
        self.assertEqual(rf.mask[0].sum(), 2)
        self.assertEqual(rf.fields[2][rf.mask[2]].tolist(), [2])
        self.assertEqual(rf.fields[0, rf.center_slot], 0)

    def test_dense_grid(self):
        coords = np.array([(x, y) for y in range(5) for x in range(5)])
        rf = build_receptive_fields(coords, 3)
        counts = rf.mask.sum(axis=1).reshape(5, 5)
        self.assertEqual(counts[2, 2], 9)
        self.assertEqual(counts[0, 0], 4)
        self.assertEqual(counts[4, 4], 4)
        self.assertEqual(counts[0, 2], 6)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(2)
        for trial in range(100):
            n = int(rng.integers(1, 120))
            k = int(rng.choice([1, 3, 5]))
            coords = random_layout(rng, n, 15)
            rf = build_receptive_fields(coords, k)
            np.testing.assert_array_equal(rf.fields,
                                          brute_force_fields(coords, k))
            np.testing.assert_array_equal(rf.mask, rf.fields != PAD)

    def test_even_kernel(self):
        with self.assertRaises(ConfigError):
            build_receptive_fields([[0, 0]], 2)


class TestPartitionCells(unittest.TestCase):
    def test_stride_one_is_identity(self):
        coords = np.array([[0, 0], [2, 1], [1, 3]])
        cells = partition_cells(coords, 1, 1)
        self.assertEqual(len(cells.cells), 3)
        self.assertEqual(sorted(m.tolist() for _, m in cells.cells),
                         [[0], [1], [2]])

    def test_diagonal_example(self):
        cells = partition_cells([[0, 0], [1, 1], [2, 2], [3, 3]], 3, 3)
        self.assertEqual(
            [(c, m.tolist()) for c, m in cells.cells],
            [((0, 0), [0, 1, 2]), ((1, 1), [3])])
        self.assertEqual(cells.cell_coords.tolist(), [[0, 0], [1, 1]])

    def test_members_sorted_by_y_then_x(self):
        cells = partition_cells([[2, 0], [0, 1], [1, 0]], 3, 3)
        self.assertEqual(cells.cells[0][1].tolist(), [2, 0, 1])

    def test_random_partition_oracle(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            n = int(rng.integers(1, 200))
            s = int(rng.integers(1, 5))
            coords = random_layout(rng, n, 20) + rng.integers(0, 9, size=2)
            cells = partition_cells(coords, s, s)
            seen = np.concatenate([m for _, m in cells.cells])
            self.assertEqual(sorted(seen.tolist()), list(range(n)))
            low = coords.min(axis=0)
            for c, (ab, members) in enumerate(cells.cells):
                expected = np.flatnonzero(
                    ((coords - low) // s == np.array(ab)).all(axis=1))
                self.assertEqual(sorted(members.tolist()), expected.tolist())
                self.assertTrue((cells.cell_of_token[members] == c).all())
            self.assertLessEqual(len(cells.cells), n)

    def test_overlapping_pools_unsupported(self):
        with self.assertRaises(UnsupportedConfigError):
            partition_cells([[0, 0]], 3, 2)


if __name__ == '__main__':
    unittest.main()
