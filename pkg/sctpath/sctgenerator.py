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
"""This module contains a base class for the synthetic data generators."""
import numpy as np


class SctGenerator:
    """
    Base class for all generators. Holds the seeded random stream so that a
    generator is a pure function of its seed.

    Args:
        seed (int): 64-bit seed for :class:`numpy.random.Generator`.
    """

    def __init__(self, seed=0):
        self.seed = int(seed)
        self.rng = np.random.default_rng(self.seed)
        self.idgen = self._gen_id()

    @staticmethod
    def _gen_id():
        x = 1
        while True:
            yield x
            x += 1

    def gen_id(self, prefix="block"):
        """
        Returns the next block id, numbered from 1 in generation order.

        Args:
            prefix (optional[str]): Text put in front of the running number.

        Returns:
            str: e.g. ``block-0007``
        """
        return "{}-{:04d}".format(prefix, next(self.idgen))
