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
"""This module provides the losses, the Adam optimiser, the deterministic
training loop and the finite-difference gradient checker.
"""
import logging
import math
import time
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List

import numpy as np

from sctpath import conf
from sctpath.blockdata import DetectionLabel, GradingLabel, Pattern
from sctpath.errors import ConfigError, DataError, DivergenceError
from sctpath.geometry import build_receptive_fields, partition_cells
from sctpath.layers import (esa_backward, esa_forward, layernorm_backward,
                            layernorm_forward, linear_backward, linear_forward,
                            masked_softmax, mha_backward, mha_forward,
                            mlp_backward, mlp_forward, sigmoid,
                            ssc_sa_backward, ssc_sa_forward, ssp_backward,
                            ssp_forward)
from sctpath.model import (AbmilConfig, AbmilParams, ModelConfig,
                           SctModelParams, StageConfig, abmil_backward,
                           abmil_forward_tokens, abmil_shapes, backward,
                           forward, init_abmil_params, init_sct_params,
                           log_param_count, preset, sct_backward,
                           sct_block_backward, sct_block_forward,
                           sct_forward_tokens, sct_shapes)

logging.getLogger(__name__).addHandler(logging.NullHandler())
logger = logging.getLogger(__name__)

PROB_CLAMP = 1e-7
TASKS = ("detection", "grading", "sensitive", "specific")
MODEL_KINDS = ("sct", "abmil")


@dataclass
class TrainConfig:
    """
    Attributes:
        epochs (int): Maximum number of passes over the training blocks.
        batch_size (int): Blocks per optimiser step.
        lr (float): Adam learning rate.
        beta1, beta2, eps (float): Adam hyperparameters.
        w_benign, w_carcinoma (float): Class weights of the detection loss.
        task (str): ``detection``, ``grading``, ``sensitive`` or ``specific``.
        ratio (float): Weight ratio used by the sensitive/specific tasks.
        seed (int): Seeds initialisation, splitting and shuffling.
        patience (int): Epochs without validation AUC gain before stopping.
        val_fraction (float): Share held out when no validation set is given.
        threads (int): Worker threads for per-block forward/backward.
    """
    epochs: int = 30
    batch_size: int = 8
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    w_benign: float = 1.0
    w_carcinoma: float = 1.0
    task: str = "detection"
    ratio: float = 8.0
    seed: int = 0
    patience: int = 10
    val_fraction: float = 0.2
    threads: int = 1

    def validate(self):
        if self.task not in TASKS:
            raise ConfigError("task must be one of {}".format(TASKS))
        if self.lr < 0:
            raise ConfigError("learning rate must be >= 0")
        if min(self.w_benign, self.w_carcinoma, self.ratio) <= 0:
            raise ConfigError("class weights must be > 0")
        if self.epochs < 1 or self.batch_size < 1 or self.threads < 1:
            raise ConfigError("epochs, batch_size and threads must be >= 1")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ConfigError("val_fraction must lie in [0, 1)")
        return self

    @property
    def class_weights(self):
        """(w_benign, w_carcinoma) after applying the task."""
        if self.task == "sensitive":
            return 1.0, self.ratio
        if self.task == "specific":
            return self.ratio, 1.0
        return self.w_benign, self.w_carcinoma


@dataclass
class TrainHistory:
    loss: List[float] = field(default_factory=list)
    val_auc: List[float] = field(default_factory=list)
    wall_time: List[float] = field(default_factory=list)
    best_epoch: int = -1
    stopped_early: bool = False


def _target(label):
    label = DetectionLabel(label)
    if label == DetectionLabel.UNKNOWN:
        raise DataError("cannot compute a loss for an unknown label")
    return float(label)


def loss_detection(p, label, weights=(1.0, 1.0)):
    """
    Weighted binary cross-entropy.

    Args:
        p (float): Carcinoma probability, clamped to [1e-7, 1 - 1e-7].
        label (DetectionLabel): Benign or carcinoma.
        weights (tuple(float, float)): (w_benign, w_carcinoma).
    """
    y = _target(label)
    p = min(max(float(p), PROB_CLAMP), 1.0 - PROB_CLAMP)
    w = weights[1] if y else weights[0]
    return -w * (y * math.log(p) + (1.0 - y) * math.log(1.0 - p))


def loss_detection_grad(p, label, weights=(1.0, 1.0)):
    """Gradient of loss_detection() with respect to the logit of ``p``."""
    y = _target(label)
    w = weights[1] if y else weights[0]
    return w * (p - y)


def _grading_classes(grading, label):
    if grading is None:
        raise DataError("grading loss needs primary and secondary patterns")
    if not isinstance(grading, GradingLabel):
        return tuple(grading)
    if Pattern.UNKNOWN in (grading.primary, grading.secondary):
        raise DataError("grading loss needs known patterns")
    if (label is not None and DetectionLabel(label) == DetectionLabel.CARCINOMA
            and grading.primary == Pattern.NONE):
        raise DataError("carcinoma block labelled with no Gleason pattern")
    return grading.classes


def loss_grading(primary, secondary, grading, label=None):
    """
    Cross-entropy of both pattern heads, summed with equal weight.

    Args:
        primary, secondary (numpy.ndarray): Distributions over
            (none, 3, 4, 5).
        grading (GradingLabel or tuple(int, int)): True patterns, or head
            class indices.
        label (Optional[DetectionLabel]): Block label, checked for
            consistency.
    """
    cp, cs = _grading_classes(grading, label)
    total = 0.0
    for dist, c in ((primary, cp), (secondary, cs)):
        q = min(max(float(dist[c]), PROB_CLAMP), 1.0 - PROB_CLAMP)
        total -= math.log(q)
    return total


def loss_grading_grad(primary, secondary, grading, label=None):
    """Gradients of loss_grading() with respect to both heads' logits."""
    cp, cs = _grading_classes(grading, label)
    dp, ds = np.array(primary, copy=True), np.array(secondary, copy=True)
    dp[cp] -= 1.0
    ds[cs] -= 1.0
    return dp, ds


class Adam:
    """
    Adam with bias correction, updating parameter arrays in place.

    Args:
        tensors (dict): name -> numpy.ndarray to optimise.
    """

    def __init__(self, tensors, lr=1e-3, betas=(0.9, 0.999), eps=1e-8):
        self.tensors = tensors
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.m = {k: np.zeros_like(v) for k, v in tensors.items()}
        self.v = {k: np.zeros_like(v) for k, v in tensors.items()}
        self.t = 0

    def step(self, grads):
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for name, param in self.tensors.items():
            grad = grads[name]
            self.m[name] = self.beta1 * self.m[name] + (1 - self.beta1) * grad
            self.v[name] = (self.beta2 * self.v[name] +
                            (1 - self.beta2) * grad * grad)
            m_hat = self.m[name] / c1
            v_hat = self.v[name] / c2
            param -= (self.lr * m_hat / (np.sqrt(v_hat) + self.eps)).astype(
                param.dtype)


def map_blocks(func, blocks, threads=1):
    """``func`` over ``blocks`` in block order, optionally threaded."""
    if threads <= 1:
        return [func(b) for b in blocks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(func, blocks))


def block_score(block, params):
    """
    Carcinoma score of a block: the detection probability, or
    1 - p_primary(none) for a grading model.
    """
    out, _ = forward(block, params)
    if "logit" in out:
        return float(sigmoid(out["logit"][0]))
    return 1.0 - float(masked_softmax(out["logits_primary"])[0])


def predict(blocks, params, threads=1):
    """Scores of ``blocks`` as an array, in block order."""
    return np.array(map_blocks(lambda b: block_score(b, params), blocks,
                               threads))


def _block_loss_and_grads(block, params, task, weights):
    out, cache = forward(block, params)
    if task == "grading":
        p1 = masked_softmax(out["logits_primary"])
        p2 = masked_softmax(out["logits_secondary"])
        loss = loss_grading(p1, p2, block.grading, block.label)
        d1, d2 = loss_grading_grad(p1, p2, block.grading, block.label)
        dout = {"logits_primary": d1.astype(conf.dtype),
                "logits_secondary": d2.astype(conf.dtype)}
    else:
        p = float(sigmoid(out["logit"][0]))
        loss = loss_detection(p, block.label, weights)
        dout = {"logit": np.array([loss_detection_grad(p, block.label,
                                                       weights)],
                                  dtype=conf.dtype)}
    return loss, backward(dout, cache, params)


def _check_data(blocks, task):
    for b in blocks:
        if b.label == DetectionLabel.UNKNOWN:
            raise DataError("block {} has an unknown label; training needs "
                            "known labels".format(b.block_id))
        if task == "grading":
            _grading_classes(b.grading, b.label)
    labels = {int(b.label) for b in blocks}
    if labels != {0, 1}:
        raise DataError("training needs at least one benign and one "
                        "carcinoma block")


def split_validation(blocks, fraction, seed):
    """Seeded split stratified by label: (train, validation)."""
    if fraction <= 0:
        return list(blocks), list(blocks)
    rng = np.random.default_rng(seed)
    held = set()
    for label in (DetectionLabel.BENIGN, DetectionLabel.CARCINOMA):
        idx = [i for i, b in enumerate(blocks) if b.label == label]
        take = int(round(fraction * len(idx)))
        if len(idx) >= 2:
            take = min(max(take, 1), len(idx) - 1)
        else:
            take = 0
        held.update(rng.permutation(idx)[:take].tolist())
    train = [b for i, b in enumerate(blocks) if i not in held]
    val = [b for i, b in enumerate(blocks) if i in held]
    return train, val


def default_model_config(kind, task, in_dim):
    if kind == "abmil":
        return AbmilConfig(in_dim=in_dim)
    return preset("default", in_dim,
                  head="grade" if task == "grading" else "detect")


def train(data, config, kind="sct", model_config=None, validation=None):
    """
    Trains a model with Adam, keeping the parameters of the epoch with the
    best validation AUC.

    Args:
        data (list(Block)): Training blocks with known labels.
        config (TrainConfig): Optimisation settings.
        kind (str): ``sct`` or ``abmil``.
        model_config (Optional[ModelConfig or AbmilConfig]): Architecture;
            the default SCT preset (or default ABMIL) when omitted.
        validation (Optional[list(Block)]): Held-out blocks. A stratified
            ``val_fraction`` of ``data`` is held out when omitted.

    Returns:
        (ParamSet, TrainHistory): Best parameters and the per-epoch record.

    Raises:
        DataError: Unknown labels, a missing class or missing patterns.
        DivergenceError: The loss became NaN.
    """
    from sctpath.metrics import roc_auc

    config.validate()
    if kind not in MODEL_KINDS:
        raise ConfigError("model kind must be one of {}".format(MODEL_KINDS))
    if kind == "abmil" and config.task == "grading":
        raise ConfigError("the ABMIL baseline has no grading head")
    data = list(data)
    _check_data(data, config.task)
    if validation is None:
        everything = data
        data, validation = split_validation(data, config.val_fraction,
                                            config.seed)
        if {int(b.label) for b in validation} != {0, 1}:
            logger.warning("held-out set of %d blocks lacks a class; "
                           "validating on the training data",
                           len(validation))
            data, validation = everything, everything
    else:
        _check_data(validation, config.task)
    in_dim = data[0].dim
    model_config = model_config or default_model_config(kind, config.task,
                                                        in_dim)
    if kind == "abmil":
        params = init_abmil_params(model_config, config.seed)
    else:
        want = "grade" if config.task == "grading" else "detect"
        if model_config.head != want:
            raise ConfigError("task {} needs a {} head".format(
                config.task, want))
        params = init_sct_params(model_config, config.seed)
    log_param_count(params)
    weights = config.class_weights
    opt = Adam(params.tensors, config.lr, (config.beta1, config.beta2),
               config.eps)
    rng = np.random.default_rng(config.seed + 1)
    history = TrainHistory()
    best, best_auc, stale = params.copy(), -np.inf, 0
    val_labels = np.array([int(b.label) for b in validation])
    step = 0
    for epoch in range(config.epochs):
        start = time.time()
        order = rng.permutation(len(data))
        losses = []
        for lo in range(0, len(order), config.batch_size):
            batch = [data[i] for i in order[lo:lo + config.batch_size]]
            results = map_blocks(
                lambda b: _block_loss_and_grads(b, params, config.task,
                                                weights), batch,
                config.threads)
            step += 1
            total = {k: np.zeros_like(v) for k, v in params.tensors.items()}
            batch_loss = 0.0
            for loss, grads in results:
                batch_loss += loss
                for name, g in grads.items():
                    total[name] += g
            batch_loss /= len(batch)
            if not np.isfinite(batch_loss):
                raise DivergenceError("loss is {} at epoch {} step {}".format(
                    batch_loss, epoch + 1, step))
            for name in total:
                total[name] /= len(batch)
            opt.step(total)
            losses.append(batch_loss)
        auc = roc_auc(predict(validation, params, config.threads),
                      val_labels).auc
        history.loss.append(float(np.mean(losses)))
        history.val_auc.append(float(auc))
        history.wall_time.append(time.time() - start)
        logger.info("epoch %d: loss %.6f, validation AUC %.4f, %.1fs",
                    epoch + 1, history.loss[-1], auc, history.wall_time[-1])
        if auc > best_auc:
            best, best_auc, stale = params.copy(), auc, 0
            history.best_epoch = epoch
        else:
            stale += 1
            if stale >= config.patience:
                history.stopped_early = True
                logger.info("early stop after epoch %d, best epoch %d",
                            epoch + 1, history.best_epoch + 1)
                break
    return best, history


# Finite-difference gradient checking

CHECKS = OrderedDict()


def check_op(name):
    """Registers a gradient-check instance builder under ``name``."""

    def _register(func):
        CHECKS[name] = func
        return func

    return _register


@dataclass
class GradcheckReport:
    """
    Attributes:
        op (str): Checked operation.
        errors (dict): tensor name -> worst relative error over all trials,
            scaled by the tensor's largest gradient magnitude.
        elementwise (dict): tensor name -> worst relative error of a single
            entry, each scaled by its own magnitude.
    """
    op: str
    trials: int
    eps: float
    errors: OrderedDict = field(default_factory=OrderedDict)
    elementwise: OrderedDict = field(default_factory=OrderedDict)

    def worst(self):
        if not self.errors:
            return None, 0.0
        name = max(self.errors, key=self.errors.get)
        return name, self.errors[name]

    def passed(self, tol=1e-4):
        return self.worst()[1] <= tol

    def worst_elementwise(self):
        if not self.elementwise:
            return None, 0.0
        name = max(self.elementwise, key=self.elementwise.get)
        return name, self.elementwise[name]


def _sparse_coords(rng, n, side):
    cells = rng.choice(side * side, size=n, replace=False)
    return np.column_stack([cells % side, cells // side])


def _rand(rng, *shape):
    return rng.standard_normal(shape)


def _tensors(specs, rng, scale=0.5):
    return OrderedDict((name, rng.standard_normal(shape) * scale)
                       for name, (shape, _) in specs.items())


def _dotted(prefix, grads):
    return {prefix + k: v for k, v in grads.items()}


@check_op("linear")
def _check_linear(rng):
    t = OrderedDict(x=_rand(rng, 5, 4), W=_rand(rng, 4, 3), b=_rand(rng, 3))

    def run(t):
        out, cache = linear_forward(t["x"], {"W": t["W"], "b": t["b"]})
        return out, lambda d: _with_input(linear_backward(d, cache))

    return t, run


def _with_input(result, key="x"):
    dx, grads = result
    grads = dict(grads)
    grads[key] = dx
    return grads


@check_op("layernorm")
def _check_layernorm(rng):
    t = OrderedDict(x=_rand(rng, 5, 6), g=_rand(rng, 6), b=_rand(rng, 6))

    def run(t):
        out, cache = layernorm_forward(t["x"], {"g": t["g"], "b": t["b"]})
        return out, lambda d: _with_input(layernorm_backward(d, cache))

    return t, run


@check_op("mlp")
def _check_mlp(rng):
    t = OrderedDict(x=_rand(rng, 5, 4), W_1=_rand(rng, 4, 6),
                    b_1=_rand(rng, 6), W_2=_rand(rng, 6, 4), b_2=_rand(rng, 4))

    def run(t):
        p = {k: t[k] for k in ("W_1", "b_1", "W_2", "b_2")}
        out, cache = mlp_forward(t["x"], p)
        return out, lambda d: _with_input(mlp_backward(d, cache))

    return t, run


@check_op("esa")
def _check_esa(rng):
    mask = rng.random((3, 9)) < 0.6
    mask[:, 4] = True
    t = OrderedDict(fields=_rand(rng, 3, 9, 4), W_r=_rand(rng, 4, 3) * 0.5,
                    W_o=_rand(rng, 3, 4))

    def run(t):
        out, cache = esa_forward(t["fields"], mask, {"W_r": t["W_r"],
                                                     "W_o": t["W_o"]})
        return out, lambda d: _with_input(esa_backward(d, cache), "fields")

    return t, run


@check_op("sscsa")
def _check_sscsa(rng):
    coords = _sparse_coords(rng, 8, 4)
    rf = build_receptive_fields(coords, 3)
    d_out = 4 if rng.random() < 0.5 else 3
    t = OrderedDict(x=_rand(rng, 8, 4), W_r=_rand(rng, 4, 3) * 0.5,
                    W_o=_rand(rng, 3, 4), W_c=_rand(rng, d_out, 9, 4) * 0.5)

    def run(t):
        p = {k: t[k] for k in ("W_r", "W_o", "W_c")}
        out, cache = ssc_sa_forward(t["x"], rf, p)
        return out, lambda d: _with_input(ssc_sa_backward(d, cache))

    return t, run


def _check_ssp(rng, mode):
    coords = _sparse_coords(rng, 10, 7)
    cells = partition_cells(coords, 3, 3)
    t = OrderedDict(x=_rand(rng, 10, 4))

    def run(t):
        out, _, cache = ssp_forward(t["x"], cells, mode)
        return out, lambda d: _with_input(ssp_backward(d, cache))

    return t, run


@check_op("ssp_max")
def _check_ssp_max(rng):
    return _check_ssp(rng, "max")


@check_op("ssp_avg")
def _check_ssp_avg(rng):
    return _check_ssp(rng, "avg")


@check_op("mha")
def _check_mha(rng):
    names = ["W_q", "b_q", "W_k", "b_k", "W_v", "b_v", "W_o", "b_o"]
    t = OrderedDict(x=_rand(rng, 6, 4))
    for name in names:
        t[name] = _rand(rng, 4, 4) * 0.5 if name[0] == "W" else _rand(rng, 4)

    def run(t):
        out, cache = mha_forward(t["x"], {k: t[k] for k in names}, 2)
        return out, lambda d: _with_input(mha_backward(d, cache))

    return t, run


@check_op("detect_head")
def _check_detect_head(rng):
    label = int(rng.integers(2))
    weights = tuple(rng.uniform(0.5, 4.0, size=2))
    t = OrderedDict(emb=_rand(rng, 5), W=_rand(rng, 5, 1) * 0.3,
                    b=_rand(rng, 1) * 0.3)

    def run(t):
        logit, cache = linear_forward(t["emb"], {"W": t["W"], "b": t["b"]})
        p = float(sigmoid(logit[0]))
        loss = np.array([loss_detection(p, label, weights)])
        dlogit = np.array([loss_detection_grad(p, label, weights)])
        return loss, lambda d: _with_input(
            linear_backward(d[0] * dlogit, cache), "emb")

    return t, run


@check_op("grade_head")
def _check_grade_head(rng):
    classes = tuple(int(c) for c in rng.integers(4, size=2))
    t = OrderedDict(emb=_rand(rng, 5))
    for which in ("primary", "secondary"):
        t["W_" + which] = _rand(rng, 5, 4) * 0.3
        t["b_" + which] = _rand(rng, 4) * 0.3

    def run(t):
        lp, cp = linear_forward(t["emb"], {"W": t["W_primary"],
                                           "b": t["b_primary"]})
        ls, cs = linear_forward(t["emb"], {"W": t["W_secondary"],
                                           "b": t["b_secondary"]})
        p1, p2 = masked_softmax(lp), masked_softmax(ls)
        loss = np.array([loss_grading(p1, p2, classes)])
        d1, d2 = loss_grading_grad(p1, p2, classes)

        def back(d):
            e1, g1 = linear_backward(d[0] * d1, cp)
            e2, g2 = linear_backward(d[0] * d2, cs)
            return {"emb": e1 + e2, "W_primary": g1["W"], "b_primary": g1["b"],
                    "W_secondary": g2["W"], "b_secondary": g2["b"]}

        return loss, back

    return t, run


@check_op("abmil")
def _check_abmil(rng):
    config = AbmilConfig(in_dim=5, embed_dim=4, attention_dim=3,
                         gated=bool(rng.random() < 0.5))
    t = _tensors(abmil_shapes(config), rng)
    t["x"] = _rand(rng, 7, 5)

    def run(t):
        params = AbmilParams(config, [(k, v) for k, v in t.items()
                                      if k != "x"])
        out, cache = abmil_forward_tokens(t["x"], params)
        return out["logit"], lambda d: _with_input(
            abmil_backward({"logit": d}, cache))

    return t, run


_SMALL_STAGE = dict(hidden=5, esa_dim=3, kernel=3, pool=3, stride=3, heads=2)


@check_op("sct_block")
def _check_sct_block(rng):
    stage = StageConfig(width=4, **_SMALL_STAGE)
    config = ModelConfig(in_dim=3, stages=[stage], head=None)
    coords = _sparse_coords(rng, 12, 6)
    t = _tensors(sct_shapes(config), rng)
    t["x"] = _rand(rng, 12, 3)

    def run(t):
        params = SctModelParams(config, [(k, v) for k, v in t.items()
                                         if k != "x"])
        out, _, caches = sct_block_forward(t["x"], coords, params.stage(0),
                                           stage)

        def back(d):
            dx, grads = sct_block_backward(d, caches)
            flat = {"x": dx}
            for comp, tensors in grads.items():
                flat.update(_dotted("stages.0.{}.".format(comp), tensors))
            return flat

        return out, back

    return t, run


@check_op("sct_model")
def _check_sct_model(rng):
    stages = [StageConfig(width=4, **_SMALL_STAGE) for _ in range(2)]
    head = "detect" if rng.random() < 0.5 else "grade"
    config = ModelConfig(in_dim=3, stages=stages, head=head)
    coords = _sparse_coords(rng, 15, 9)
    t = _tensors(sct_shapes(config), rng)
    t["x"] = _rand(rng, 15, 3)

    def run(t):
        params = SctModelParams(config, [(k, v) for k, v in t.items()
                                         if k != "x"])
        out, cache = sct_forward_tokens(t["x"], coords, params)
        if head == "detect":
            value = out["logit"]
        else:
            value = np.concatenate([out["logits_primary"],
                                    out["logits_secondary"]])

        def back(d):
            if head == "detect":
                dout = {"logit": d}
            else:
                dout = {"logits_primary": d[:4], "logits_secondary": d[4:]}
            return _with_input(sct_backward(dout, cache))

        return value, back

    return t, run


def gradcheck(op="all", trials=20, eps=1e-5, seed=0, mutate=None):
    """
    Compares analytic gradients with central differences
    (f(t + eps) - f(t - eps)) / (2 eps) in float64.

    The checked scalar is sum(G * output) with a random G per instance. For
    every tensor the error is max|analytic - numeric| divided by
    max(max|analytic|, max|numeric|, 1e-8); the report keeps the worst value
    over all trials. The per-entry error |analytic - numeric| divided by
    max(|analytic|, |numeric|, 1e-8) is kept alongside in ``elementwise``;
    entries near zero make it dominated by finite-difference noise, so pass
    or fail uses the tensor-scaled figure.

    Args:
        op (str): A name in CHECKS, or ``all``.
        trials (int): Random instances per operation.
        eps (float): Finite-difference step.
        seed (int): Seed of the instance generator.
        mutate (Optional[callable]): ``mutate(name, grad) -> grad`` applied to
            the analytic gradients before comparing; used to test the checker.

    Returns:
        list(GradcheckReport): One report per operation.
    """
    names = list(CHECKS) if op == "all" else [op]
    for name in names:
        if name not in CHECKS:
            raise ConfigError("unknown gradcheck op {!r}, choose from "
                              "{}".format(name, ["all"] + list(CHECKS)))
    reports = []
    with conf.precision(np.float64):
        for name in names:
            rng = np.random.default_rng(seed)
            report = GradcheckReport(name, trials, eps)
            for _ in range(trials):
                tensors, run = CHECKS[name](rng)
                out, back = run(tensors)
                upstream = rng.standard_normal(np.shape(out))
                analytic = back(upstream)
                for tname, value in tensors.items():
                    a = np.asarray(analytic[tname], dtype=np.float64)
                    if mutate is not None:
                        a = mutate(tname, a)
                    numeric = np.empty_like(value)
                    flat = value.reshape(-1)
                    for i in range(flat.size):
                        orig = flat[i]
                        flat[i] = orig + eps
                        plus = np.sum(upstream * run(tensors)[0])
                        flat[i] = orig - eps
                        minus = np.sum(upstream * run(tensors)[0])
                        flat[i] = orig
                        numeric.reshape(-1)[i] = (plus - minus) / (2 * eps)
                    scale = max(np.abs(a).max(), np.abs(numeric).max(), 1e-8)
                    err = float(np.abs(a - numeric).max() / scale)
                    report.errors[tname] = max(report.errors.get(tname, 0.0),
                                               err)
                    local = np.maximum(np.maximum(np.abs(a), np.abs(numeric)),
                                       1e-8)
                    err = float((np.abs(a - numeric) / local).max())
                    report.elementwise[tname] = max(
                        report.elementwise.get(tname, 0.0), err)
            worst, err = report.worst()
            logger.info("gradcheck %s: worst %s %.3e (per entry %s %.3e)",
                        name, worst, err, *report.worst_elementwise())
            reports.append(report)
    return reports
