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
"""This module provides a class to generate synthetic embedded tissue blocks.

Carcinoma is planted as spatially contiguous discs of tiles drawn from a
shifted feature distribution, so that a model using spatial context has
something to find that context-free pooling does not.

Two variants are produced:

``focal``
    Positive blocks hold one or two carcinoma foci, benign blocks none.
``context``
    Every block holds the same number of marker tiles drawn from one
    distribution. Positive blocks have the markers clustered in one disc,
    benign blocks have them scattered so no two share a 3 x 3 neighbourhood.
    The feature multiset alone carries no label information.
"""
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from sctpath.blockdata import (Block, DetectionLabel, GradingLabel, Pattern)
from sctpath.errors import ConfigError
from sctpath.sctgenerator import SctGenerator

logging.getLogger(__name__).addHandler(logging.NullHandler())
logger = logging.getLogger(__name__)

DEFAULT_PATTERN_MIX = {
    (3, 3): 0.30,
    (3, 4): 0.25,
    (4, 3): 0.20,
    (4, 4): 0.10,
    (4, 5): 0.10,
    (5, 5): 0.05,
}

VARIANTS = ("focal", "context")


@dataclass
class SynthConfig:
    """
    Settings of the synthetic block generator.

    Attributes:
        n_blocks (int): Number of blocks to generate.
        tiles_per_slide (tuple(int, int)): Inclusive range of tiles per slide.
        slides_per_block (tuple(int, int)): Inclusive range of slides per block.
        dim (int): Embedding dimension D.
        focus_radius (float): Largest focus radius in grid units.
        carcinoma_shift (float): Mean offset of carcinoma tiles.
        noise_sigma (float): Standard deviation of the feature noise.
        carcinoma_fraction (float): Probability of a block being positive.
        pattern_mix (dict): Weights over (primary, secondary) pattern pairs.
        seed (int): Seed of the random stream.
        variant (str): ``focal`` or ``context``.
        markers (int): Marker tiles per block in the ``context`` variant.
    """
    n_blocks: int = 200
    tiles_per_slide: tuple = (20, 60)
    slides_per_block: tuple = (1, 3)
    dim: int = 64
    focus_radius: float = 2.0
    carcinoma_shift: float = 1.5
    noise_sigma: float = 1.0
    carcinoma_fraction: float = 0.3
    pattern_mix: dict = field(default_factory=lambda: dict(DEFAULT_PATTERN_MIX))
    seed: int = 0
    variant: str = "focal"
    markers: int = 6

    def validate(self):
        """Raises ConfigError when a setting is out of range."""
        for name in ("tiles_per_slide", "slides_per_block"):
            lo, hi = getattr(self, name)
            if lo < 1 or hi < lo:
                raise ConfigError("{} must be a non-empty range of positive "
                                  "counts, got {}".format(
                                      name, getattr(self, name)))
        if self.n_blocks < 0 or self.dim < 1:
            raise ConfigError("n_blocks must be >= 0 and dim >= 1")
        if not 0.0 <= self.carcinoma_fraction <= 1.0:
            raise ConfigError("carcinoma_fraction must lie in [0, 1]")
        if self.noise_sigma <= 0 or self.focus_radius <= 0:
            raise ConfigError("noise_sigma and focus_radius must be > 0")
        if self.variant not in VARIANTS:
            raise ConfigError("variant must be one of {}".format(VARIANTS))
        if self.variant == "context" and self.markers < 2:
            raise ConfigError("the context variant needs at least 2 markers")
        weights = list(self.pattern_mix.values())
        if not weights or min(weights) < 0 or sum(weights) <= 0:
            raise ConfigError("pattern_mix needs non-negative weights with a "
                              "positive sum")
        for pair in self.pattern_mix:
            if any(p not in (3, 4, 5) for p in pair):
                raise ConfigError("pattern pairs must use patterns 3, 4, 5; "
                                  "got {}".format(pair))
        return self


class BlockGenerator(SctGenerator):
    """
    Block generator class. Mainly used via its get_block() and generate()
    methods.

    Args:
        config (Optional[SynthConfig]): Generator settings. Defaults to
            ``SynthConfig()``.
    """

    def __init__(self, config=None):
        self.config = (config or SynthConfig()).validate()
        SctGenerator.__init__(self, self.config.seed)
        directions = self.rng.standard_normal((4, self.config.dim))
        self.directions = directions / np.linalg.norm(directions, axis=1,
                                                      keepdims=True)
        self.pairs = sorted(self.config.pattern_mix)
        weights = np.array([self.config.pattern_mix[p] for p in self.pairs],
                           dtype=float)
        self.pair_weights = weights / weights.sum()

    def _layout(self, n_tiles):
        side = int(math.ceil(math.sqrt(n_tiles / 0.6)))
        cells = self.rng.choice(side * side, size=n_tiles, replace=False)
        origin = self.rng.integers(0, 50, size=2)
        return np.column_stack([cells % side, cells // side]) + origin

    def _tiles(self):
        lo, hi = self.config.slides_per_block
        n_slides = int(self.rng.integers(lo, hi + 1))
        lo, hi = self.config.tiles_per_slide
        coords, slides = [], []
        for s in range(1, n_slides + 1):
            n = int(self.rng.integers(lo, hi + 1))
            coords.append(self._layout(n))
            slides.append(np.full(n, s))
        return np.concatenate(coords), np.concatenate(slides)

    def _disc(self, coords, slide_idx, radius, center=None):
        if center is None:
            center = int(self.rng.integers(coords.shape[0]))
        delta = coords - coords[center]
        dist = np.hypot(delta[:, 0], delta[:, 1])
        return (slide_idx == slide_idx[center]) & (dist <= radius)

    def _pattern_direction(self, pattern):
        return self.directions[1 + int(pattern) - 3]

    def _focal(self, label, grading, coords, slide_idx):
        cfg = self.config
        n = coords.shape[0]
        means = np.zeros((n, cfg.dim))
        focus = np.zeros(n, dtype=bool)
        if label == DetectionLabel.CARCINOMA:
            r_max = cfg.focus_radius
            radius = self.rng.uniform(min(1.0, r_max), r_max)
            foci = [(grading.primary, radius)]
            if grading.secondary != grading.primary:
                foci.append((grading.secondary, max(min(1.0, r_max),
                                                    radius / 2.0)))
            for pattern, r in foci:
                disc = self._disc(coords, slide_idx, r)
                means[disc] = cfg.carcinoma_shift * (
                    self.directions[0] + 0.5 * self._pattern_direction(pattern))
                focus |= disc
        return means, focus

    def _scattered(self, coords, slide_idx, count):
        for _ in range(50):
            chosen = []
            for i in self.rng.permutation(coords.shape[0]):
                near = [j for j in chosen if slide_idx[j] == slide_idx[i]
                        and np.abs(coords[j] - coords[i]).max() < 2]
                if not near:
                    chosen.append(i)
                if len(chosen) == count:
                    return np.array(chosen)
        raise ConfigError("cannot scatter {} markers over {} tiles; lower "
                          "markers or raise tiles_per_slide".format(
                              count, coords.shape[0]))

    def _clustered(self, coords, slide_idx, count):
        sizes = np.bincount(slide_idx)
        eligible = np.flatnonzero(sizes[slide_idx] >= count)
        if not eligible.size:
            raise ConfigError("no slide holds {} tiles for a marker "
                              "cluster".format(count))
        center = int(eligible[self.rng.integers(eligible.size)])
        candidates = np.flatnonzero(slide_idx == slide_idx[center])
        delta = coords[candidates] - coords[center]
        dist = np.hypot(delta[:, 0], delta[:, 1])
        order = np.lexsort((candidates, dist))
        return candidates[order[:count]]

    def _context(self, label, coords, slide_idx):
        cfg = self.config
        n = coords.shape[0]
        if n < cfg.markers:
            raise ConfigError("blocks need at least {} tiles for the context "
                              "variant".format(cfg.markers))
        if label == DetectionLabel.CARCINOMA:
            markers = self._clustered(coords, slide_idx, cfg.markers)
        else:
            markers = self._scattered(coords, slide_idx, cfg.markers)
        focus = np.zeros(n, dtype=bool)
        focus[markers] = True
        means = np.zeros((n, cfg.dim))
        means[focus] = cfg.carcinoma_shift * self.directions[0]
        return means, focus

    def _grading(self, label):
        if label == DetectionLabel.BENIGN:
            return GradingLabel(Pattern.NONE, Pattern.NONE)
        primary, secondary = self.pairs[self.rng.choice(
            len(self.pairs), p=self.pair_weights)]
        return GradingLabel(Pattern(primary), Pattern(secondary))

    def get_block_with_truth(self, label=None, grading=None):
        """
        Returns a block together with the mask of its planted tiles.

        Args:
            label (Optional[DetectionLabel]): Forces the block label. Drawn
                with probability ``carcinoma_fraction`` when omitted.
            grading (Optional[GradingLabel]): Forces the pattern pair of a
                positive block. Drawn from ``pattern_mix`` when omitted.

        Returns:
            (Block, numpy.ndarray): The block and an N boolean mask, true for
            tiles inside a carcinoma focus (markers in the context variant).
        """
        cfg = self.config
        if label is None:
            label = (DetectionLabel.CARCINOMA
                     if self.rng.random() < cfg.carcinoma_fraction else
                     DetectionLabel.BENIGN)
        label = DetectionLabel(label)
        if grading is None:
            grading = self._grading(label)
        coords, slide_idx = self._tiles()
        if cfg.variant == "focal":
            means, focus = self._focal(label, grading, coords, slide_idx)
        else:
            means, focus = self._context(label, coords, slide_idx)
        noise = self.rng.standard_normal(means.shape) * cfg.noise_sigma
        block = Block(self.gen_id(), (means + noise).astype(np.float32),
                      coords, slide_idx, label, grading)
        return block, focus

    def get_block(self, label=None, grading=None):
        """Same as get_block_with_truth() without the focus mask."""
        return self.get_block_with_truth(label, grading)[0]

    def generate_with_truth(self):
        """Returns ``config.n_blocks`` (block, focus mask) pairs."""
        return [self.get_block_with_truth()
                for _ in range(self.config.n_blocks)]

    def generate(self):
        """Returns ``config.n_blocks`` blocks."""
        blocks = [b for b, _ in self.generate_with_truth()]
        positives = sum(b.label == DetectionLabel.CARCINOMA for b in blocks)
        logger.info("generated %d %s blocks, %d carcinoma", len(blocks),
                    self.config.variant, positives)
        return blocks


def synth_generate(config):
    """
    Generates a synthetic dataset. A pure function of ``config``, seed
    included.

    Args:
        config (SynthConfig): Generator settings.

    Returns:
        list(Block): ``config.n_blocks`` blocks.
    """
    return BlockGenerator(config).generate()
