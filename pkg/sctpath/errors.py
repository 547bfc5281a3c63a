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
"""This module provides the exceptions raised by sctpath"""


class SctError(Exception):
    """Base class. ``exit_code`` is what the command line returns for it."""
    exit_code = 2
    default = 'sctpath error'

    def __init__(self, error=None):
        super(SctError, self).__init__(error or self.default)


class UsageError(SctError):
    exit_code = 1
    default = 'Invalid command line usage'


class ConfigError(SctError):
    exit_code = 1
    default = 'Invalid configuration'


class UnsupportedConfigError(ConfigError):
    default = 'Unsupported configuration'


class FormatError(SctError):
    default = 'Invalid file format'


class SchemaError(SctError):
    default = 'File contents do not match the declared schema'


class DataError(SctError):
    default = 'Invalid data'


class InputError(SctError):
    default = 'Invalid input'


class UndefinedAucError(InputError):
    default = 'AUC is undefined when only one class is present'


class CorruptionError(SctError):
    default = 'File is corrupted or truncated'


class DivergenceError(SctError):
    exit_code = 3
    default = 'Training diverged'


class DegenerateKappaError(InputError):
    exit_code = 3
    default = 'Kappa is undefined for zero-variance marginals'
