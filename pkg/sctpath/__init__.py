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

from .blockdata import Block, DetectionLabel, GradingLabel, Pattern
from .blockdata import load_blocks, write_blocks, normalize_coords
from .blockgenerator import BlockGenerator, SynthConfig, synth_generate
from .geometry import index_tiles, build_receptive_fields, partition_cells
from .model import ModelConfig, StageConfig, AbmilConfig, preset
from .model import init_sct_params, init_abmil_params, param_count
from .model import model_forward_detect, model_forward_grade, abmil_forward
from .training import TrainConfig, train, gradcheck
from .training import loss_detection, loss_grading
from .screening import dual_decide, threshold_sweep, choose_thresholds
from .metrics import roc_auc, confusion_at, quadratic_kappa
from .metrics import delong_paired, delong_unpaired, mcnemar_exact
from .metrics import isup_group, gg3plus_score
from .weights import save_weights, load_weights
from .report import emit_report
from .runconfig import RunConfig
from .errors import SctError
from .errors import ConfigError
from .errors import DataError
from .errors import InputError
from .errors import FormatError
from .errors import SchemaError
from .errors import CorruptionError
from .errors import DivergenceError

__all__ = [
    "Block", "DetectionLabel", "GradingLabel", "Pattern", "load_blocks",
    "write_blocks", "normalize_coords", "BlockGenerator", "SynthConfig",
    "synth_generate", "index_tiles", "build_receptive_fields",
    "partition_cells", "ModelConfig", "StageConfig", "AbmilConfig", "preset",
    "init_sct_params", "init_abmil_params", "param_count",
    "model_forward_detect", "model_forward_grade", "abmil_forward",
    "TrainConfig", "train", "gradcheck", "loss_detection", "loss_grading",
    "dual_decide", "threshold_sweep", "choose_thresholds", "roc_auc",
    "confusion_at", "quadratic_kappa", "delong_paired", "delong_unpaired",
    "mcnemar_exact", "isup_group", "gg3plus_score", "save_weights",
    "load_weights", "emit_report", "RunConfig", "SctError", "ConfigError",
    "DataError", "InputError", "FormatError", "SchemaError",
    "CorruptionError", "DivergenceError"
]
