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
"""This module provides the parser of flat ``key = value`` run configuration
files.

Example::

    # synthetic data
    synth.n_blocks = 500
    synth.variant = context
    synth.pattern_mix = 3+3:0.5, 3+4:0.3, 4+5:0.2
    train.lr = 5e-4
    model.preset = small
    screen.grid = 0.5, 0.9, 0.99
"""
import os
import re
from collections import OrderedDict
from dataclasses import replace

from sctpath.blockgenerator import DEFAULT_PATTERN_MIX, SynthConfig
from sctpath.errors import ConfigError
from sctpath.model import AbmilConfig, StageConfig, preset
from sctpath.training import TrainConfig

SEED_ENV = "SCT_SEED"

BOOLEANS = {"1": True, "true": True, "yes": True, "on": True,
            "0": False, "false": False, "no": False, "off": False}


def _bool(text):
    try:
        return BOOLEANS[text.lower()]
    except KeyError:
        raise ValueError("not a boolean: {!r}".format(text))


def _list_of(kind):

    def parse(text):
        return [kind(v) for v in re.split(r'\s*,\s*', text.strip()) if v]

    parse.__name__ = "list of {}".format(kind.__name__)
    return parse


_PAIR = re.compile(
    r'^(?P<primary>\d)\s*\+\s*(?P<secondary>\d)\s*:\s*(?P<weight>\S+)$')


def pattern_mix(text):
    """
    Parses ``3+3:0.3, 3+4:0.25`` into {(3, 3): 0.3, (3, 4): 0.25}.

    Pattern numbers and weights are checked by SynthConfig.validate().
    """
    mix = OrderedDict()
    for item in re.split(r'\s*,\s*', text.strip()):
        if not item:
            continue
        match = _PAIR.match(item)
        if not match:
            raise ValueError("expected primary+secondary:weight, got "
                             "{!r}".format(item))
        pair = (int(match.group("primary")), int(match.group("secondary")))
        if pair in mix:
            raise ValueError("pattern pair {}+{} given twice".format(*pair))
        mix[pair] = float(match.group("weight"))
    if not mix:
        raise ValueError("empty pattern mix")
    return mix


def format_pattern_mix(mix):
    return ", ".join("{}+{}:{}".format(p, s, w) for (p, s), w in mix.items())


#: key -> (parser, default, description)
KEYS = OrderedDict([
    ("seed", (int, 0, "Seed of every random stream")),
    ("synth.n_blocks", (int, 200, "Number of synthetic blocks")),
    ("synth.tiles_min", (int, 20, "Fewest tiles per slide")),
    ("synth.tiles_max", (int, 60, "Most tiles per slide")),
    ("synth.slides_min", (int, 1, "Fewest slides per block")),
    ("synth.slides_max", (int, 3, "Most slides per block")),
    ("synth.dim", (int, 64, "Tile embedding dimension D")),
    ("synth.focus_radius", (float, 2.0, "Largest focus radius in tiles")),
    ("synth.carcinoma_shift", (float, 1.5, "Mean shift of carcinoma tiles")),
    ("synth.noise_sigma", (float, 1.0, "Feature noise standard deviation")),
    ("synth.carcinoma_fraction", (float, 0.3, "Share of carcinoma blocks")),
    ("synth.variant", (str, "focal", "focal or context")),
    ("synth.markers", (int, 6, "Marker tiles per context-variant block")),
    ("synth.pattern_mix", (pattern_mix, OrderedDict(DEFAULT_PATTERN_MIX),
                           "Weights of the primary+secondary pattern pairs "
                           "of carcinoma blocks")),
    ("train.model", (str, "sct", "sct or abmil")),
    ("train.task", (str, "detection",
                    "detection, grading, sensitive or specific")),
    ("train.epochs", (int, 30, "Maximum epochs")),
    ("train.batch_size", (int, 8, "Blocks per optimiser step")),
    ("train.lr", (float, 1e-3, "Adam learning rate")),
    ("train.beta1", (float, 0.9, "Adam beta1")),
    ("train.beta2", (float, 0.999, "Adam beta2")),
    ("train.eps", (float, 1e-8, "Adam epsilon")),
    ("train.w_benign", (float, 1.0, "Benign class weight")),
    ("train.w_carcinoma", (float, 1.0, "Carcinoma class weight")),
    ("train.ratio", (float, 8.0, "Class weight ratio of sensitive/specific")),
    ("train.patience", (int, 10, "Early stopping patience in epochs")),
    ("train.val_fraction", (float, 0.2, "Held-out validation share")),
    ("model.preset", (str, "default", "tiny, small, default or large")),
    ("model.widths", (_list_of(int), [], "Stage widths Z, overrides the "
                                         "preset depth")),
    ("model.hidden", (int, 0, "MLP width H, 0 keeps the preset's")),
    ("model.esa_dim", (int, 0, "ESA width C, 0 uses the stage width")),
    ("model.kernel", (int, 3, "Receptive field size k")),
    ("model.pool", (int, 3, "Pool size p")),
    ("model.stride", (int, 3, "Pool stride s")),
    ("model.heads", (int, 4, "Attention heads n_h")),
    ("model.pool_mode", (str, "max", "max or avg")),
    ("model.aggregate", (str, "mean", "Final reduction, mean or max")),
    ("abmil.embed_dim", (int, 64, "ABMIL projector width")),
    ("abmil.attention_dim", (int, 32, "ABMIL attention width")),
    ("abmil.gated", (_bool, True, "Gated attention scorer")),
    ("screen.grid", (_list_of(float), [], "Sweep thresholds, empty for the "
                                          "199-point default")),
    ("screen.t_lo", (float, 0.05, "Rule-out threshold of the sensitive "
                                  "model")),
    ("screen.t_hi", (float, 0.95, "Rule-in threshold of the specific model")),
    ("screen.max_fnr", (float, 0.01, "FNR bound of choose_thresholds")),
    ("screen.max_fpr", (float, 0.02, "FPR bound of choose_thresholds")),
])

_LINE = re.compile(r'^(?P<key>[A-Za-z_][\w.]*)\s*=\s*(?P<value>.*)$')


class RunConfig():
    """
    Parsed run configuration. Keys absent from the file keep their defaults.

    Args:
        values (Optional[dict]): key -> already typed value.
    """

    def __init__(self, values=None):
        self.values = OrderedDict((k, spec[1]) for k, spec in KEYS.items())
        self.explicit = set()
        for key, value in (values or {}).items():
            if key not in KEYS:
                raise ConfigError("unknown config key {!r}".format(key))
            self.values[key] = value
            self.explicit.add(key)

    def __getitem__(self, key):
        return self.values[key]

    @staticmethod
    def parse(text):
        """
        Args:
            text (str): Configuration file contents.

        Returns:
            RunConfig

        Raises:
            ConfigError: Malformed line, unknown or repeated key, bad value.
        """
        values = OrderedDict()
        for number, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            match = _LINE.match(line)
            if not match:
                raise ConfigError("line {}: expected key = value, got "
                                  "{!r}".format(number, raw))
            key, value = match.group("key"), match.group("value").strip()
            if key not in KEYS:
                raise ConfigError("line {}: unknown config key {!r}".format(
                    number, key))
            if key in values:
                raise ConfigError("line {}: {} given twice".format(
                    number, key))
            kind = KEYS[key][0]
            try:
                values[key] = kind(value)
            except ValueError as exc:
                raise ConfigError("line {}: bad value for {}: {}".format(
                    number, key, exc))
        return RunConfig(values)

    @staticmethod
    def load(path):
        with open(path, encoding="utf-8") as f:
            return RunConfig.parse(f.read())

    def seed(self, override=None):
        """--seed, then the file's ``seed``, then $SCT_SEED, then 0."""
        if override is not None:
            return int(override)
        if "seed" in self.explicit:
            return self["seed"]
        env = os.environ.get(SEED_ENV)
        if env:
            try:
                return int(env)
            except ValueError:
                raise ConfigError("{} must be an integer, got {!r}".format(
                    SEED_ENV, env))
        return self["seed"]

    def synth_config(self, seed=None):
        v = self.values
        return SynthConfig(
            n_blocks=v["synth.n_blocks"],
            tiles_per_slide=(v["synth.tiles_min"], v["synth.tiles_max"]),
            slides_per_block=(v["synth.slides_min"], v["synth.slides_max"]),
            dim=v["synth.dim"], focus_radius=v["synth.focus_radius"],
            carcinoma_shift=v["synth.carcinoma_shift"],
            noise_sigma=v["synth.noise_sigma"],
            carcinoma_fraction=v["synth.carcinoma_fraction"],
            pattern_mix=dict(v["synth.pattern_mix"]), seed=self.seed(seed),
            variant=v["synth.variant"],
            markers=v["synth.markers"]).validate()

    def train_config(self, seed=None, threads=1):
        v = self.values
        return TrainConfig(
            epochs=v["train.epochs"], batch_size=v["train.batch_size"],
            lr=v["train.lr"], beta1=v["train.beta1"], beta2=v["train.beta2"],
            eps=v["train.eps"], w_benign=v["train.w_benign"],
            w_carcinoma=v["train.w_carcinoma"], task=v["train.task"],
            ratio=v["train.ratio"], seed=self.seed(seed),
            patience=v["train.patience"],
            val_fraction=v["train.val_fraction"], threads=threads).validate()

    def model_config(self, in_dim, head="detect"):
        """SCT architecture: the preset with the ``model.*`` overrides."""
        v = self.values
        config = preset(v["model.preset"], in_dim, head)
        stages = config.stages
        if v["model.widths"]:
            hidden = stages[0].hidden
            stages = [StageConfig(width=w, hidden=hidden)
                      for w in v["model.widths"]]
        stages = [
            replace(s, hidden=v["model.hidden"] or s.hidden,
                    esa_dim=v["model.esa_dim"] or None,
                    kernel=v["model.kernel"], pool=v["model.pool"],
                    stride=v["model.stride"], heads=v["model.heads"],
                    pool_mode=v["model.pool_mode"]) for s in stages
        ]
        return replace(config, stages=stages,
                       aggregate=v["model.aggregate"]).validate()

    def abmil_config(self, in_dim):
        v = self.values
        return AbmilConfig(in_dim=in_dim, embed_dim=v["abmil.embed_dim"],
                           attention_dim=v["abmil.attention_dim"],
                           gated=v["abmil.gated"]).validate()

    def grid(self):
        """Sweep grid, None for the default one."""
        return self["screen.grid"] or None

    @staticmethod
    def describe():
        """Documentation of every key, one ``key = default  # doc`` line each."""
        lines = []
        for key, (kind, default, doc) in KEYS.items():
            if isinstance(default, list):
                default = ", ".join(str(d) for d in default)
            elif isinstance(default, dict):
                default = format_pattern_mix(default)
            lines.append("{} = {}  # {}".format(key, default, doc))
        return "\n".join(lines)
