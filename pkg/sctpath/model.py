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
"""This module assembles the kernels into full models: the sparse
convolutional transformer with a detection or a grading head, and the
attention-based multiple instance learning baseline.

Parameters live in an ordered ``name -> ndarray`` mapping with dotted names
such as ``stages.0.sscsa.W_c`` or ``head.W``. Gradients use the same names.
"""
import logging
from collections import OrderedDict
from dataclasses import dataclass, field, replace
from typing import List, Optional

import numpy as np

from sctpath import conf
from sctpath.blockdata import normalize_coords
from sctpath.errors import ConfigError, InputError
from sctpath.geometry import (build_receptive_fields, index_tiles,
                              partition_cells)
from sctpath.layers import (aggregate_backward, aggregate_forward,
                            attention_pool_backward, attention_pool_forward,
                            layernorm_backward, layernorm_forward,
                            linear_backward, linear_forward, masked_softmax,
                            mha_backward, mha_forward, mlp_backward,
                            mlp_forward, relu_backward, relu_forward, sigmoid,
                            ssc_sa_backward, ssc_sa_forward, ssp_backward,
                            ssp_forward)

logging.getLogger(__name__).addHandler(logging.NullHandler())
logger = logging.getLogger(__name__)

#: Scalar parameter count quoted for the reference five-block configuration.
REFERENCE_PARAM_COUNT = 1.38e6

HEADS = (None, "detect", "grade")
N_PATTERN_CLASSES = 4


@dataclass
class StageConfig:
    """
    One SCT block.

    Attributes:
        width (int): Token width Z after the block's linear projection.
        hidden (int): MLP hidden width H.
        esa_dim (Optional[int]): ESA embedding width C, Z when omitted.
        kernel (int): Receptive field size k.
        pool (int): Pool size p.
        stride (int): Pool stride s.
        heads (int): Attention heads n_h.
        pool_mode (str): ``max`` or ``avg``.
    """
    width: int = 64
    hidden: int = 128
    esa_dim: Optional[int] = None
    kernel: int = 3
    pool: int = 3
    stride: int = 3
    heads: int = 4
    pool_mode: str = "max"

    @property
    def c(self):
        return self.esa_dim or self.width


@dataclass
class ModelConfig:
    """
    Architecture of an SCT model.

    Attributes:
        in_dim (int): Tile embedding dimension D.
        stages (list(StageConfig)): SCT blocks in order.
        head (Optional[str]): ``detect``, ``grade`` or None.
        aggregate (str): Final token reduction, ``mean`` or ``max``.
    """
    in_dim: int = 64
    stages: List[StageConfig] = field(default_factory=list)
    head: Optional[str] = "detect"
    aggregate: str = "mean"

    @property
    def out_dim(self):
        return self.stages[-1].width if self.stages else self.in_dim

    def validate(self):
        if self.head not in HEADS:
            raise ConfigError("head must be one of {}".format(HEADS))
        if self.aggregate not in ("mean", "max"):
            raise ConfigError("aggregate must be mean or max")
        if self.in_dim < 1:
            raise ConfigError("in_dim must be >= 1")
        for t, s in enumerate(self.stages):
            if s.width % s.heads:
                raise ConfigError("stage {}: n_h={} does not divide Z={}".format(
                    t, s.heads, s.width))
            if s.kernel < 1 or s.kernel % 2 == 0:
                raise ConfigError("stage {}: kernel must be odd".format(t))
            if s.hidden < 1 or s.c < 1 or s.stride < 1:
                raise ConfigError("stage {}: sizes must be positive".format(t))
            if s.pool_mode not in ("max", "avg"):
                raise ConfigError("stage {}: pool_mode must be max or "
                                  "avg".format(t))
        return self


@dataclass
class AbmilConfig:
    """
    Attention-based MIL baseline.

    Attributes:
        in_dim (int): Tile embedding dimension D.
        embed_dim (int): Width of the instance projector.
        attention_dim (int): Width of the attention scorer.
        gated (bool): Gated (tanh * sigmoid) or plain tanh scorer.
    """
    in_dim: int = 64
    embed_dim: int = 64
    attention_dim: int = 32
    gated: bool = True

    def validate(self):
        if min(self.in_dim, self.embed_dim, self.attention_dim) < 1:
            raise ConfigError("ABMIL sizes must be positive")
        return self


def _stages(widths, hidden):
    return [StageConfig(width=w, hidden=hidden) for w in widths]


PRESETS = {
    "tiny": lambda: _stages([32, 64], 64),
    "small": lambda: _stages([64, 64, 128], 128),
    "default": lambda: _stages([64, 64, 128, 128, 128], 128),
    "large": lambda: _stages([64, 128, 128, 256, 256, 256], 256),
}


def preset(name, in_dim, head="detect"):
    """
    Returns the ModelConfig of a named preset.

    ``default`` is the reference five-block layout: Z = 64, 64, 128, 128, 128,
    k = 3, p = s = 3, n_h = 4 and MLP width 128.
    """
    if name not in PRESETS:
        raise ConfigError("unknown preset {!r}, choose from {}".format(
            name, sorted(PRESETS)))
    return ModelConfig(in_dim=in_dim, stages=PRESETS[name](),
                       head=head).validate()


class ParamSet:
    """
    Ordered mapping of named tensors plus the config that shaped them.

    Attributes:
        config: ModelConfig or AbmilConfig.
        tensors (collections.OrderedDict): name -> numpy.ndarray.
    """

    def __init__(self, config, tensors):
        self.config = config
        self.tensors = OrderedDict(tensors)

    def __getitem__(self, name):
        return self.tensors[name]

    def names(self):
        return list(self.tensors)

    def group(self, prefix):
        """Tensors under ``prefix.`` keyed by the rest of their name."""
        prefix = prefix + "."
        return {
            name[len(prefix):]: value
            for name, value in self.tensors.items() if name.startswith(prefix)
        }

    def copy(self):
        return type(self)(self.config,
                          [(k, v.copy()) for k, v in self.tensors.items()])

    def astype(self, dtype):
        return type(self)(self.config, [(k, v.astype(dtype))
                                        for k, v in self.tensors.items()])


class SctModelParams(ParamSet):
    def stage(self, t):
        """Nested view of stage ``t``: component -> {tensor -> array}."""
        return {c: self.group("stages.{}.{}".format(t, c))
                for c in STAGE_COMPONENTS}


class AbmilParams(ParamSet):
    pass


STAGE_COMPONENTS = ("proj", "norm1", "sscsa", "norm2", "mha", "norm3", "mlp")


def _glorot(fan_in, fan_out):
    return ("glorot", fan_in, fan_out)


def sct_shapes(config):
    """
    Ordered tensor specs of an SCT model: name -> (shape, initialiser).

    The order is the initialisation order and the weights-file order.
    """
    specs = OrderedDict()
    z_in = config.in_dim
    for t, s in enumerate(config.stages):
        z, c, kk, h = s.width, s.c, s.kernel * s.kernel, s.hidden
        pre = "stages.{}.".format(t)
        specs[pre + "proj.W"] = ((z_in, z), _glorot(z_in, z))
        specs[pre + "proj.b"] = ((z, ), ("zeros", ))
        for norm in ("norm1", "norm2", "norm3"):
            specs[pre + norm + ".g"] = ((z, ), ("ones", ))
            specs[pre + norm + ".b"] = ((z, ), ("zeros", ))
        specs[pre + "sscsa.W_r"] = ((z, c), _glorot(z, c))
        specs[pre + "sscsa.W_o"] = ((c, z), _glorot(c, z))
        specs[pre + "sscsa.W_c"] = ((z, kk, z), _glorot(kk * z, z))
        for name in ("q", "k", "v", "o"):
            specs[pre + "mha.W_" + name] = ((z, z), _glorot(z, z))
            specs[pre + "mha.b_" + name] = ((z, ), ("zeros", ))
        specs[pre + "mlp.W_1"] = ((z, h), _glorot(z, h))
        specs[pre + "mlp.b_1"] = ((h, ), ("zeros", ))
        specs[pre + "mlp.W_2"] = ((h, z), _glorot(h, z))
        specs[pre + "mlp.b_2"] = ((z, ), ("zeros", ))
        z_in = z
    zf = config.out_dim
    if config.head == "detect":
        specs["head.W"] = ((zf, 1), _glorot(zf, 1))
        specs["head.b"] = ((1, ), ("zeros", ))
    elif config.head == "grade":
        for which in ("primary", "secondary"):
            specs["head.W_" + which] = ((zf, N_PATTERN_CLASSES),
                                        _glorot(zf, N_PATTERN_CLASSES))
            specs["head.b_" + which] = ((N_PATTERN_CLASSES, ), ("zeros", ))
    return specs


def abmil_shapes(config):
    d, e, a = config.in_dim, config.embed_dim, config.attention_dim
    specs = OrderedDict()
    specs["embed.W"] = ((d, e), _glorot(d, e))
    specs["embed.b"] = ((e, ), ("zeros", ))
    specs["attn.V"] = ((e, a), _glorot(e, a))
    specs["attn.b_V"] = ((a, ), ("zeros", ))
    if config.gated:
        specs["attn.U"] = ((e, a), _glorot(e, a))
        specs["attn.b_U"] = ((a, ), ("zeros", ))
    specs["attn.w"] = ((a, 1), _glorot(a, 1))
    specs["cls.W"] = ((e, 1), _glorot(e, 1))
    specs["cls.b"] = ((1, ), ("zeros", ))
    return specs


def shapes_of(config):
    if isinstance(config, AbmilConfig):
        return abmil_shapes(config)
    return sct_shapes(config)


def _init(specs, seed):
    rng = np.random.default_rng(seed)
    tensors = OrderedDict()
    for name, (shape, init) in specs.items():
        if init[0] == "glorot":
            limit = np.sqrt(6.0 / (init[1] + init[2]))
            value = rng.uniform(-limit, limit, size=shape)
        elif init[0] == "ones":
            value = np.ones(shape)
        else:
            value = np.zeros(shape)
        tensors[name] = value.astype(conf.dtype)
    return tensors


def init_sct_params(config, seed=0):
    """Glorot-uniform initialised SCT parameters, a pure function of seed."""
    config.validate()
    return SctModelParams(config, _init(sct_shapes(config), seed))


def init_abmil_params(config, seed=0):
    """Glorot-uniform initialised ABMIL parameters."""
    config.validate()
    return AbmilParams(config, _init(abmil_shapes(config), seed))


def param_count(params):
    """
    Exact number of scalar parameters.

    Args:
        params (ParamSet or dict): Parameters, or any name -> array mapping.
    """
    tensors = params.tensors if isinstance(params, ParamSet) else params
    return int(sum(np.asarray(t).size for t in tensors.values()))


def log_param_count(params):
    """Logs the count and its ratio to the reference 1.38 M; returns both."""
    count = param_count(params)
    ratio = count / REFERENCE_PARAM_COUNT
    logger.info("parameter count %d (%.3f x reference 1.38M)", count, ratio)
    return count, ratio


# Config <-> float vector, stored as the leading tensor of weight files

def config_to_vector(config):
    if isinstance(config, AbmilConfig):
        values = [1, config.in_dim, config.embed_dim, config.attention_dim,
                  int(config.gated)]
    else:
        values = [0, config.in_dim, HEADS.index(config.head),
                  ("mean", "max").index(config.aggregate), len(config.stages)]
        for s in config.stages:
            values += [s.width, s.hidden, s.esa_dim or 0, s.kernel, s.pool,
                       s.stride, s.heads, ("max", "avg").index(s.pool_mode)]
    return np.array(values, dtype=np.float32)


def config_from_vector(vector):
    v = [int(round(float(x))) for x in vector]
    try:
        if v[0] == 1:
            return AbmilConfig(v[1], v[2], v[3], bool(v[4])).validate()
        stages = []
        for t in range(v[4]):
            w, h, c, k, p, s, nh, mode = v[5 + 8 * t:13 + 8 * t]
            stages.append(StageConfig(w, h, c or None, k, p, s, nh,
                                      ("max", "avg")[mode]))
        return ModelConfig(v[1], stages, HEADS[v[2]],
                           ("mean", "max")[v[3]]).validate()
    except (IndexError, ValueError) as exc:
        raise ConfigError("malformed model config vector: {}".format(exc))


def params_class(config):
    return AbmilParams if isinstance(config, AbmilConfig) else SctModelParams


# SCT forward / backward


def prepare_block(block):
    """
    Normalises and indexes a block, then sorts its tiles canonically by
    (slide, y, x) so every reduction sees the same order whatever the input
    order was.

    Returns:
        (numpy.ndarray, numpy.ndarray): N x D features in ``conf.dtype`` and
        N x 2 adjusted coordinates.
    """
    if block.n_tiles == 0:
        raise InputError("block {} has no tiles".format(block.block_id))
    block = normalize_coords(block)
    coords = index_tiles(block.coords, block.slide_idx).coords
    order = np.lexsort((block.coords[:, 0], block.coords[:, 1],
                        block.slide_idx))
    return block.features[order].astype(conf.dtype), coords[order]


def sct_block_forward(x, coords, p, stage):
    """
    One SCT block: projection, norm, SSC-SA, SSP, norm, MHA, norm, MLP.

    Args:
        x (numpy.ndarray): N x Z_in tokens.
        coords (numpy.ndarray): N x 2 unique coordinates.
        p (dict): component -> {tensor name -> array}, see STAGE_COMPONENTS.
        stage (StageConfig): Block settings.

    Returns:
        (numpy.ndarray, numpy.ndarray, tuple): M x Z tokens, M x 2 coordinates
        of the pooled lattice, cache.
    """
    caches = {}
    h, caches["proj"] = linear_forward(x, p["proj"])
    h, caches["norm1"] = layernorm_forward(h, p["norm1"])
    rf = build_receptive_fields(coords, stage.kernel)
    h, caches["sscsa"] = ssc_sa_forward(h, rf, p["sscsa"])
    cells = partition_cells(coords, stage.pool, stage.stride)
    h, pooled_coords, caches["ssp"] = ssp_forward(h, cells, stage.pool_mode)
    h, caches["norm2"] = layernorm_forward(h, p["norm2"])
    h, caches["mha"] = mha_forward(h, p["mha"], stage.heads)
    h, caches["norm3"] = layernorm_forward(h, p["norm3"])
    h, caches["mlp"] = mlp_forward(h, p["mlp"])
    return h, pooled_coords, caches


_BACKWARD = OrderedDict([
    ("mlp", mlp_backward),
    ("norm3", layernorm_backward),
    ("mha", mha_backward),
    ("norm2", layernorm_backward),
    ("ssp", ssp_backward),
    ("sscsa", ssc_sa_backward),
    ("norm1", layernorm_backward),
    ("proj", linear_backward),
])


def sct_block_backward(dout, caches):
    """Returns the input gradient and component -> {tensor -> gradient}."""
    grads = {}
    for name, backward in _BACKWARD.items():
        dout, g = backward(dout, caches[name])
        if g:
            grads[name] = g
    return dout, grads


def _head_forward(emb, params):
    head = params.config.head
    if head == "detect":
        logit, cache = linear_forward(emb, params.group("head"))
        return {"logit": logit}, cache
    if head == "grade":
        p = params.group("head")
        lp, cp = linear_forward(emb, {"W": p["W_primary"],
                                      "b": p["b_primary"]})
        ls, cs = linear_forward(emb, {"W": p["W_secondary"],
                                      "b": p["b_secondary"]})
        return {"logits_primary": lp, "logits_secondary": ls}, (cp, cs)
    return {}, None


def _head_backward(dhead, cache, params, grads):
    head = params.config.head
    demb = np.zeros(params.config.out_dim, dtype=conf.dtype)
    if head == "detect":
        dlogit = dhead.get("logit", np.zeros(1, dtype=conf.dtype))
        demb, g = linear_backward(dlogit, cache)
        grads["head.W"], grads["head.b"] = g["W"], g["b"]
    elif head == "grade":
        for which, c in zip(("primary", "secondary"), cache):
            dlogits = dhead.get("logits_" + which,
                                np.zeros(N_PATTERN_CLASSES, dtype=conf.dtype))
            d, g = linear_backward(dlogits, c)
            grads["head.W_" + which], grads["head.b_" + which] = g["W"], g["b"]
            demb = demb + d
    if "embedding" in dhead:
        demb = demb + dhead["embedding"]
    return demb


def sct_forward(block, params):
    """
    Full SCT pass over one block.

    Returns:
        (dict, tuple): ``embedding`` (the aggregated final-stage vector) plus
        ``logit`` for a detection head or ``logits_primary`` and
        ``logits_secondary`` for a grading head; cache for sct_backward().
    """
    x, coords = prepare_block(block)
    return sct_forward_tokens(x, coords, params)


def sct_forward_tokens(x, coords, params):
    """sct_forward() on already prepared tokens and coordinates."""
    cfg = params.config
    stage_caches = []
    for t, stage in enumerate(cfg.stages):
        x, coords, c = sct_block_forward(x, coords, params.stage(t), stage)
        stage_caches.append(c)
    emb, agg_cache = aggregate_forward(x, cfg.aggregate)
    out, head_cache = _head_forward(emb, params)
    out["embedding"] = emb
    return out, (stage_caches, agg_cache, head_cache, params)


def sct_backward(dout, cache):
    """
    Args:
        dout (dict): Gradients of the outputs of sct_forward(), any subset of
            ``logit``, ``logits_primary``, ``logits_secondary``, ``embedding``.

    Returns:
        (numpy.ndarray, dict): Gradient of the prepared input tokens and
        name -> gradient for every parameter tensor.
    """
    stage_caches, agg_cache, head_cache, params = cache
    grads = {}
    demb = _head_backward(dout, head_cache, params, grads)
    dx, _ = aggregate_backward(demb, agg_cache)
    for t in reversed(range(len(stage_caches))):
        dx, g = sct_block_backward(dx, stage_caches[t])
        for comp, tensors in g.items():
            for name, value in tensors.items():
                grads["stages.{}.{}.{}".format(t, comp, name)] = value
    return dx, grads


def _require_head(params, head):
    if not isinstance(params, SctModelParams) or params.config.head != head:
        raise ConfigError("model needs a {} head".format(head))


def model_forward_detect(block, params):
    """Carcinoma probability of ``block`` under an SCT detection model."""
    _require_head(params, "detect")
    out, _ = sct_forward(block, params)
    return float(sigmoid(out["logit"][0]))


def model_forward_grade(block, params):
    """
    Primary and secondary pattern distributions over (none, 3, 4, 5) under
    an SCT grading model.
    """
    _require_head(params, "grade")
    out, _ = sct_forward(block, params)
    return (masked_softmax(out["logits_primary"]),
            masked_softmax(out["logits_secondary"]))


# ABMIL forward / backward


def abmil_forward_full(block, params):
    """
    ABMIL pass. Coordinates are ignored.

    Returns:
        (dict, tuple): ``logit``, ``embedding`` and ``attention`` (N weights
        in the canonical tile order of prepare_block()), cache.
    """
    if block.n_tiles == 0:
        raise InputError("block {} has no tiles".format(block.block_id))
    order = np.lexsort((block.coords[:, 0], block.coords[:, 1],
                        block.slide_idx))
    x = block.features[order].astype(conf.dtype)
    return abmil_forward_tokens(x, params)


def abmil_forward_tokens(x, params):
    pre, c_embed = linear_forward(x, params.group("embed"))
    h, c_relu = relu_forward(pre)
    emb, c_pool = attention_pool_forward(h, params.group("attn"))
    logit, c_cls = linear_forward(emb, params.group("cls"))
    out = {"logit": logit, "embedding": emb, "attention": c_pool[1]}
    return out, (c_embed, c_relu, c_pool, c_cls)


def abmil_backward(dout, cache):
    c_embed, c_relu, c_pool, c_cls = cache
    grads = {}
    demb, g = linear_backward(dout["logit"], c_cls)
    grads.update(("cls." + k, v) for k, v in g.items())
    if "embedding" in dout:
        demb = demb + dout["embedding"]
    dh, g = attention_pool_backward(demb, c_pool)
    grads.update(("attn." + k, v) for k, v in g.items())
    dpre, _ = relu_backward(dh, c_relu)
    dx, g = linear_backward(dpre, c_embed)
    grads.update(("embed." + k, v) for k, v in g.items())
    return dx, grads


def abmil_forward(block, params):
    """Carcinoma probability of ``block`` under an ABMIL model."""
    out, _ = abmil_forward_full(block, params)
    return float(sigmoid(out["logit"][0]))


# Uniform entry points used by training and the command line


def forward(block, params):
    if isinstance(params, AbmilParams):
        return abmil_forward_full(block, params)
    return sct_forward(block, params)


def backward(dout, cache, params):
    if isinstance(params, AbmilParams):
        return abmil_backward(dout, cache)[1]
    return sct_backward(dout, cache)[1]


def embedding(block, params):
    """Block-level embedding vector that feeds the model's head."""
    out, _ = forward(block, params)
    return out["embedding"]


def with_head(config, head):
    """Copy of an SCT config with another head."""
    return replace(config, head=head).validate()
