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
"""Global numeric precision.

Kernels and parameter initialisers read :data:`dtype`. Training runs in float32;
gradient checking switches to float64 with :func:`precision`.
"""
import contextlib

import numpy as np

dtype = np.float32


def set_dtype(new_dtype):
    """Sets the global floating point type and returns the previous one."""
    global dtype
    old = dtype
    dtype = np.dtype(new_dtype).type
    return old


@contextlib.contextmanager
def precision(new_dtype):
    """
    Context manager running its body with ``new_dtype`` as the global dtype.

    Example::

        with conf.precision(np.float64):
            report = gradcheck("esa", trials=5)
    """
    old = set_dtype(new_dtype)
    try:
        yield
    finally:
        set_dtype(old)
