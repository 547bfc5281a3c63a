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
"""This module provides the dual-model screening rule and the threshold sweep.

A sensitive model rules blocks out (confidently benign), a specific model
rules them in (confidently carcinoma). Everything else stays equivocal and
goes to immunohistochemistry.
"""
import logging
from collections import OrderedDict
from dataclasses import dataclass
from enum import Enum

import numpy as np

from sctpath.errors import ConfigError, InputError

logging.getLogger(__name__).addHandler(logging.NullHandler())
logger = logging.getLogger(__name__)

DEFAULT_T_LO = 0.05
DEFAULT_T_HI = 0.95


class Decision(Enum):
    RULE_OUT_BENIGN = "rule_out_benign"
    RULE_IN_CARCINOMA = "rule_in_carcinoma"
    EQUIVOCAL = "equivocal"


@dataclass(frozen=True)
class ScreeningOutcome:
    decision: Decision
    p_sensitive: float
    p_specific: float
    t_lo: float
    t_hi: float


def _check_thresholds(t_lo, t_hi):
    if not 0.0 <= t_lo <= t_hi <= 1.0:
        raise ConfigError("thresholds must satisfy 0 <= t_lo <= t_hi <= 1, "
                          "got t_lo={} t_hi={}".format(t_lo, t_hi))


def _rule_out(p_sens, p_spec, t_lo, t_hi):
    return (p_sens < t_lo) & (p_spec < t_hi)


def _rule_in(p_sens, p_spec, t_lo, t_hi):
    return (p_spec > t_hi) & (p_sens >= t_lo)


def dual_decide(p_sens, p_spec, t_lo=DEFAULT_T_LO, t_hi=DEFAULT_T_HI):
    """
    Combines the scores of the sensitive and the specific model.

    A block is ruled out when p_sens < t_lo and p_spec < t_hi, ruled in when
    p_spec > t_hi and p_sens >= t_lo. Any other block, including one the two
    models contradict on, is equivocal.

    Raises:
        ConfigError: Thresholds out of order or outside [0, 1].
    """
    _check_thresholds(t_lo, t_hi)
    if _rule_out(p_sens, p_spec, t_lo, t_hi):
        decision = Decision.RULE_OUT_BENIGN
    elif _rule_in(p_sens, p_spec, t_lo, t_hi):
        decision = Decision.RULE_IN_CARCINOMA
    else:
        decision = Decision.EQUIVOCAL
    return ScreeningOutcome(decision, float(p_sens), float(p_spec), t_lo,
                            t_hi)


def screen(p_sens, p_spec, t_lo=DEFAULT_T_LO, t_hi=DEFAULT_T_HI):
    """dual_decide() over aligned score arrays."""
    if len(p_sens) != len(p_spec):
        raise InputError("score arrays differ in length: {} vs {}".format(
            len(p_sens), len(p_spec)))
    return [dual_decide(a, b, t_lo, t_hi) for a, b in zip(p_sens, p_spec)]


def default_grid():
    """
    The 199-point symmetric grid: 0.5, 0.505 to 0.995 in steps of 0.0025,
    and 0.999.

    The stepped range already holds 0.99, so it and 0.999 give 198 distinct
    points. 0.5, where both models share one threshold, is added to make up
    the documented count of 199.
    """
    steps = np.round(0.505 + 0.0025 * np.arange(197), 6)
    return np.unique(np.concatenate([[0.5], steps, [0.999]]))


#: Curve columns in report order.
COLUMNS = ("tau", "t_lo", "t_hi", "n_rule_out", "n_rule_in", "n_equivocal",
           "tp", "fp", "tn", "fn", "tpr", "tnr", "fpr", "fnr",
           "ruled_out_benign", "ruled_in_carcinoma", "screened_benign",
           "screened_carcinoma", "screened_total", "error_screened",
           "error_all")


class SweepCurves:
    """
    Column-oriented threshold sweep result, one row per grid point.

    Rates among decided blocks (``tpr`` = tp / (tp + fn), ``tnr`` =
    tn / (tn + fp)) and ratios with an empty denominator are NaN.
    ``fnr`` and ``fpr`` use all carcinoma and all benign blocks as
    denominators; ``error_screened`` divides (fn + fp) by the screened
    count (0 when nothing is screened), ``error_all`` by every block.
    """

    def __init__(self, columns=None):
        columns = columns or {}
        self.columns = OrderedDict(
            (name, np.asarray(columns.get(name, []), dtype=float))
            for name in COLUMNS)

    def __len__(self):
        return len(self.columns["tau"])

    def __getitem__(self, name):
        return self.columns[name]

    @property
    def thresholds(self):
        return self.columns["tau"]

    def row(self, i):
        return OrderedDict((k, v[i]) for k, v in self.columns.items())


def _ratio(num, den):
    return num / den if den else float("nan")


def threshold_sweep(p_sens, p_spec, labels, grid=None):
    """
    Applies the screening rule at every symmetric threshold tau of ``grid``
    (t_lo = 1 - tau, t_hi = tau) and tabulates the outcome.

    Args:
        p_sens, p_spec (array_like): Per-block scores of both models.
        labels (array_like): 1 for carcinoma, 0 for benign.
        grid (Optional[array_like]): Ascending tau values, default_grid() when
            omitted.

    Returns:
        SweepCurves
    """
    p_sens = np.asarray(p_sens, dtype=float)
    p_spec = np.asarray(p_spec, dtype=float)
    labels = np.asarray(labels).astype(bool)
    if not len(p_sens) == len(p_spec) == len(labels):
        raise InputError("scores and labels differ in length: {}, {}, "
                         "{}".format(len(p_sens), len(p_spec), len(labels)))
    grid = default_grid() if grid is None else np.asarray(grid, dtype=float)
    if np.any(np.diff(grid) < 0):
        raise ConfigError("threshold grid must be sorted ascending")
    n = len(labels)
    n_pos = int(labels.sum())
    n_neg = n - n_pos
    rows = {name: [] for name in COLUMNS}
    for tau in grid:
        t_lo, t_hi = 1.0 - tau, tau
        _check_thresholds(t_lo, t_hi)
        out = _rule_out(p_sens, p_spec, t_lo, t_hi)
        into = _rule_in(p_sens, p_spec, t_lo, t_hi)
        tp, fp = int((into & labels).sum()), int((into & ~labels).sum())
        tn, fn = int((out & ~labels).sum()), int((out & labels).sum())
        screened = tp + fp + tn + fn
        values = dict(
            tau=tau, t_lo=t_lo, t_hi=t_hi, n_rule_out=tn + fn,
            n_rule_in=tp + fp, n_equivocal=n - screened, tp=tp, fp=fp, tn=tn,
            fn=fn, tpr=_ratio(tp, tp + fn), tnr=_ratio(tn, tn + fp),
            fpr=_ratio(fp, n_neg), fnr=_ratio(fn, n_pos),
            ruled_out_benign=_ratio(tn, n_neg),
            ruled_in_carcinoma=_ratio(tp, n_pos),
            screened_benign=_ratio(tn + fp, n_neg),
            screened_carcinoma=_ratio(tp + fn, n_pos),
            screened_total=_ratio(screened, n),
            error_screened=(fn + fp) / screened if screened else 0.0,
            error_all=_ratio(fn + fp, n))
        for name in COLUMNS:
            rows[name].append(values[name])
    return SweepCurves(rows)


@dataclass(frozen=True)
class ThresholdChoice:
    t_lo: float
    t_hi: float
    tau: float
    feasible: bool


def choose_thresholds(curves, max_fnr=0.01, max_fpr=0.02):
    """
    Picks the symmetric threshold that screens the most blocks while keeping
    FNR <= max_fnr and FPR <= max_fpr. Ties go to the least strict tau.

    When no grid point qualifies the strictest point is returned with
    ``feasible`` false.

    Raises:
        InputError: ``curves`` is empty.
        ConfigError: A constraint lies outside [0, 1].
    """
    if not len(curves):
        raise InputError("cannot choose thresholds from empty curves")
    if not (0.0 <= max_fnr <= 1.0 and 0.0 <= max_fpr <= 1.0):
        raise ConfigError("max_fnr and max_fpr must lie in [0, 1]")
    ok = (curves["fnr"] <= max_fnr) & (curves["fpr"] <= max_fpr)
    if not ok.any():
        i = int(np.argmax(curves["tau"]))
        logger.info("no threshold meets FNR <= %g and FPR <= %g", max_fnr,
                    max_fpr)
        return ThresholdChoice(float(curves["t_lo"][i]),
                               float(curves["t_hi"][i]),
                               float(curves["tau"][i]), False)
    candidates = np.flatnonzero(ok)
    screened = curves["screened_total"][candidates]
    best = candidates[screened == screened.max()]
    i = int(best[np.argmin(curves["tau"][best])])
    logger.info("chose tau %.4f screening %.1f%% of blocks",
                curves["tau"][i], 100 * curves["screened_total"][i])
    return ThresholdChoice(float(curves["t_lo"][i]), float(curves["t_hi"][i]),
                           float(curves["tau"][i]), True)
