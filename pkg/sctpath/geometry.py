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
"""This module provides the sparse-lattice machinery: unique tile indexing
across the slides of a block, k x k receptive fields and the strided cell
partition used for pooling.

All coordinates are integer tile-grid positions (x, y).
"""
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from sctpath.errors import ConfigError, InputError, UnsupportedConfigError

#: Slot value of an absent neighbour in a receptive field.
PAD = -1


@dataclass(frozen=True, eq=False)
class AdjustedCoords:
    """
    Attributes:
        coords (numpy.ndarray): N x 2 coordinates, unique over the block.
        per_slide_offsets (numpy.ndarray): N_s x 2 offset added to each slide,
            row ``j - 1`` for slide ``j``.
    """
    coords: np.ndarray
    per_slide_offsets: np.ndarray


@dataclass(frozen=True, eq=False)
class ReceptiveFieldIndex:
    """
    Attributes:
        centers (numpy.ndarray): Token index of every field centre (all tokens).
        fields (numpy.ndarray): N x k^2 neighbour indices, ``PAD`` if absent.
            Slots are row-major over the offset (dy, dx).
        mask (numpy.ndarray): N x k^2 booleans, true where the slot is filled.
        k (int): Kernel size.
    """
    centers: np.ndarray
    fields: np.ndarray
    mask: np.ndarray
    k: int

    @property
    def center_slot(self):
        return (self.k * self.k) // 2


@dataclass(frozen=True, eq=False)
class CellPartition:
    """
    Attributes:
        cell_of_token (numpy.ndarray): N cell numbers.
        cells (list((tuple(int, int), numpy.ndarray))): Cell coordinate (a, b)
            and member token indices sorted by (y, x), cells ordered by (b, a).
        stride (int): s.
        pool_size (int): p.
    """
    cell_of_token: np.ndarray
    cells: List[Tuple[Tuple[int, int], np.ndarray]]
    stride: int
    pool_size: int

    @property
    def cell_coords(self):
        """M x 2 array of cell coordinates, the next stage's lattice."""
        return np.array([c for c, _ in self.cells], dtype=np.int64).reshape(
            -1, 2)


def _as_coords(coords):
    coords = np.asarray(coords, dtype=np.int64)
    if coords.ndim != 2 or coords.shape[1] != 2:
        raise InputError("coordinates must be an N x 2 array")
    return coords


def _encode(coords, width):
    return coords[:, 1] * width + coords[:, 0]


def index_tiles(coords, slide_idx):
    """
    Makes tile coordinates unique across the slides of a block.

    Slide 1 keeps its coordinates. Slide j is shifted by the cumulative
    (sum of X_m + 1, sum of Y_m + 1) over the earlier slides m, where (X_m, Y_m)
    is the maximum corner of slide m before shifting. Every slide therefore
    starts strictly beyond the bounding box of all earlier slides.

    Args:
        coords (array-like): N x 2 non-negative tile coordinates.
        slide_idx (array-like): N slide indices starting at 1.

    Returns:
        AdjustedCoords: The globally unique coordinates and per-slide offsets.

    Raises:
        InputError: Duplicate coordinates within a slide, or negative ones.
    """
    coords = _as_coords(coords)
    slide_idx = np.asarray(slide_idx, dtype=np.int64)
    if slide_idx.shape != (coords.shape[0], ):
        raise InputError("slide_idx must have one entry per tile")
    if coords.size and coords.min() < 0:
        raise InputError("coordinates must be normalized to be non-negative")
    keys = np.column_stack([slide_idx, coords])
    if np.unique(keys, axis=0).shape[0] != coords.shape[0]:
        raise InputError("duplicate tile coordinates within a slide")
    n_slides = int(slide_idx.max()) if slide_idx.size else 0
    maxima = np.full((n_slides, 2), -1, dtype=np.int64)
    for s in np.unique(slide_idx):
        maxima[s - 1] = coords[slide_idx == s].max(axis=0)
    offsets = np.zeros((n_slides, 2), dtype=np.int64)
    offsets[1:] = np.cumsum(maxima[:-1] + 1, axis=0)
    adjusted = coords + offsets[slide_idx - 1] if n_slides else coords
    return AdjustedCoords(adjusted, offsets)


def build_receptive_fields(coords, k):
    """
    Builds the k x k receptive field of every token.

    A token j is in the field of centre i when |x_j - x_i| <= k // 2 and
    |y_j - y_i| <= k // 2.

    Args:
        coords (array-like): N x 2 unique coordinates.
        k (int): Odd kernel size.

    Returns:
        ReceptiveFieldIndex: One field per token.

    Raises:
        ConfigError: Even or non-positive k.
    """
    if k < 1 or k % 2 == 0:
        raise ConfigError("kernel size must be odd and >= 1, got {}".format(k))
    coords = _as_coords(coords)
    n = coords.shape[0]
    if n == 0:
        raise InputError("cannot build receptive fields over zero tokens")
    r = k // 2
    shifted = coords - coords.min(axis=0) + r
    width = int(shifted[:, 0].max()) + r + 1
    keys = _encode(shifted, width)
    order = np.argsort(keys, kind="stable")
    sorted_keys = keys[order]
    fields = np.full((n, k * k), PAD, dtype=np.int64)
    slot = 0
    for dy in range(-r, r + 1):
        for dx in range(-r, r + 1):
            query = _encode(shifted + np.array([dx, dy]), width)
            pos = np.searchsorted(sorted_keys, query)
            pos = np.minimum(pos, n - 1)
            hit = sorted_keys[pos] == query
            fields[hit, slot] = order[pos[hit]]
            slot += 1
    return ReceptiveFieldIndex(np.arange(n), fields, fields != PAD, k)


def partition_cells(coords, p, s):
    """
    Partitions tokens into non-overlapping s x s cells anchored at the block's
    minimum corner.

    Args:
        coords (array-like): N x 2 coordinates.
        p (int): Pool size, must equal ``s``.
        s (int): Stride.

    Returns:
        CellPartition: Non-empty cells in (b, a) order, members in (y, x) order.

    Raises:
        UnsupportedConfigError: p != s (overlapping windows).
        ConfigError: s < 1.
    """
    if p != s:
        raise UnsupportedConfigError(
            "pool size {} differs from stride {}; only p == s is "
            "supported".format(p, s))
    if s < 1:
        raise ConfigError("stride must be >= 1, got {}".format(s))
    coords = _as_coords(coords)
    if coords.shape[0] == 0:
        raise InputError("cannot partition zero tokens")
    cell_xy = (coords - coords.min(axis=0)) // s
    token_order = np.lexsort((coords[:, 0], coords[:, 1], cell_xy[:, 0],
                              cell_xy[:, 1]))
    ordered = cell_xy[token_order]
    starts = np.flatnonzero(np.r_[True, (ordered[1:] != ordered[:-1]).any(
        axis=1)])
    bounds = np.r_[starts, token_order.size]
    cell_of_token = np.empty(coords.shape[0], dtype=np.int64)
    cells = []
    for c in range(starts.size):
        members = token_order[bounds[c]:bounds[c + 1]]
        cell_of_token[members] = c
        a, b = ordered[bounds[c]]
        cells.append(((int(a), int(b)), members))
    return CellPartition(cell_of_token, cells, s, p)
