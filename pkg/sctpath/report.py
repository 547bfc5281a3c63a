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
"""This module provides the CSV reports: evaluation summaries, sweep curves,
screening decisions and block embeddings. Every report also gets a companion
``<name>.plot.csv`` holding labelled (series, x, y) points for external
plotting.
"""
import logging
import os
from dataclasses import dataclass, field
from typing import List

import numpy as np
import pandas as pd

from sctpath.blockdata import DetectionLabel
from sctpath.errors import DataError, DegenerateKappaError, InputError
from sctpath.metrics import (confusion_at, delong_paired, delong_unpaired,
                             gg3plus_score, isup_group, mcnemar_exact,
                             quadratic_kappa, roc_auc,
                             specificity_at_sensitivity)
from sctpath.screening import SweepCurves

logging.getLogger(__name__).addHandler(logging.NullHandler())
logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%#.6g"

EVAL_COLUMNS = ("row", "n", "auc", "threshold", "tp", "fp", "tn", "fn",
                "sensitivity", "specificity", "accuracy", "spec_at_sens95",
                "kappa", "ci_low", "ci_high", "p_value")
COUNT_COLUMNS = ("n", "tp", "fp", "tn", "fn")
SWEEP_SERIES = ("screened_total", "fnr", "fpr", "error_screened",
                "error_all")


@dataclass
class EvalReport:
    """
    Rows of an evaluation report. The first row is the detection summary,
    followed by per-class rows and optional grading and comparison rows.
    """
    rows: List[dict] = field(default_factory=list)
    plot: List[tuple] = field(default_factory=list)

    def add(self, row, **values):
        values["row"] = row
        self.rows.append(values)
        return values

    def add_series(self, series, xs, ys):
        self.plot += [(series, float(x), float(y)) for x, y in zip(xs, ys)]

    def get(self, row):
        for values in self.rows:
            if values["row"] == row:
                return values
        raise KeyError(row)


def evaluate_detection(scores, labels, threshold=0.5):
    """
    Summary row (AUC, confusion at ``threshold``, specificity at 95%
    sensitivity) plus one row per class, and the ROC curve as plot data.
    """
    scores, labels = np.asarray(scores, dtype=float), np.asarray(labels)
    report = EvalReport()
    counts = confusion_at(scores, labels, threshold)
    roc = roc_auc(scores, labels)
    spec95, _ = specificity_at_sensitivity(scores, labels, 0.95)
    report.add("summary", n=len(labels), auc=roc.auc, threshold=threshold,
               tp=counts.tp, fp=counts.fp, tn=counts.tn, fn=counts.fn,
               sensitivity=counts.sensitivity, specificity=counts.specificity,
               accuracy=counts.accuracy, spec_at_sens95=spec95)
    report.add("benign", n=counts.tn + counts.fp, threshold=threshold,
               tn=counts.tn, fp=counts.fp, specificity=counts.specificity)
    report.add("carcinoma", n=counts.tp + counts.fn, threshold=threshold,
               tp=counts.tp, fn=counts.fn, sensitivity=counts.sensitivity)
    report.add_series("roc", 1.0 - roc.specificity, roc.sensitivity)
    return report


def _predicted_isup(primary, secondary):
    p, s = int(np.argmax(primary)), int(np.argmax(secondary))
    if p == 0:
        return isup_group(None, None)
    # A carcinoma primary with a "none" secondary reads as a pure pattern.
    return isup_group(p + 2, (s or p) + 2)


def _kappa_row(report, row, pred, actual, n_categories, seed):
    try:
        k = quadratic_kappa(pred, actual, n_categories, seed=seed)
    except (DegenerateKappaError, InputError) as exc:
        logger.warning("%s skipped: %s", row, exc)
        return
    report.add(row, n=len(pred), kappa=k.kappa, ci_low=k.ci_low,
               ci_high=k.ci_high)


def _auc_row(report, row, scores, labels):
    try:
        auc = roc_auc(scores, labels).auc
    except InputError as exc:
        logger.warning("%s skipped: %s", row, exc)
        return
    report.add(row, n=len(labels), auc=auc)


def add_grading(report, blocks, distributions, seed=0):
    """
    Appends the grading rows: quadratic kappa of the primary pattern, the
    secondary pattern and the ISUP grade group, AUC of GG3-5 against GG1-2
    among carcinoma blocks and AUC of carcinoma presence.

    Args:
        blocks (list(Block)): Evaluated blocks; those without a known grading
            are skipped.
        distributions (list(tuple)): (primary, secondary) head distributions
            per block.
    """
    known = [(b, d) for b, d in zip(blocks, distributions)
             if b.grading is not None]
    if not known:
        return report
    actual = np.array([b.grading.classes for b, _ in known])
    pred = np.array([(np.argmax(p), np.argmax(s)) for _, (p, s) in known])
    _kappa_row(report, "kappa_primary", pred[:, 0], actual[:, 0], 4, seed)
    _kappa_row(report, "kappa_secondary", pred[:, 1], actual[:, 1], 4, seed)
    isup_actual = [int(isup_group(b.grading.primary, b.grading.secondary))
                   for b, _ in known]
    isup_pred = [int(_predicted_isup(p, s)) for _, (p, s) in known]
    _kappa_row(report, "kappa_isup", isup_pred, isup_actual, 6, seed)
    cancer = [i for i, (b, _) in enumerate(known)
              if b.label == DetectionLabel.CARCINOMA]
    _auc_row(report, "auc_gg3plus",
             [gg3plus_score(*known[i][1]) for i in cancer],
             [int(isup_actual[i] >= 3) for i in cancer])
    _auc_row(report, "auc_presence",
             [1.0 - float(p[0]) for _, (p, _) in known],
             [int(b.label == DetectionLabel.CARCINOMA) for b, _ in known])
    return report


def add_comparison(report, scores_a, scores_b, labels, threshold=0.5):
    """
    Appends a paired DeLong row (AUC of the compared model, p-value) and an
    exact McNemar row on correctness at ``threshold``.
    """
    labels = np.asarray(labels).astype(bool)
    result = delong_paired(scores_a, scores_b, labels)
    report.add("delong_paired", n=len(labels), auc=result.auc_b,
               p_value=result.p)
    correct_a = (np.asarray(scores_a) >= threshold) == labels
    correct_b = (np.asarray(scores_b) >= threshold) == labels
    report.add("mcnemar", n=len(labels), threshold=threshold,
               p_value=mcnemar_exact(correct_a, correct_b))
    return report


def read_groups(path):
    """
    Reads a ``block_id,group`` CSV.

    Returns:
        dict: block id -> group name.

    Raises:
        DataError: Missing columns, empty cells or a block listed twice.
    """
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    except (pd.errors.EmptyDataError, pd.errors.ParserError) as exc:
        raise DataError("{}: {}".format(path, exc))
    missing = {"block_id", "group"} - set(frame.columns)
    if missing:
        raise DataError("{}: missing column(s) {}".format(
            path, ", ".join(sorted(missing))))
    if (frame[["block_id", "group"]] == "").to_numpy().any():
        raise DataError("{}: empty block_id or group cell".format(path))
    repeated = frame["block_id"][frame["block_id"].duplicated()]
    if len(repeated):
        raise DataError("{}: block {} listed twice".format(
            path, repeated.iloc[0]))
    return dict(zip(frame["block_id"], frame["group"]))


def add_groups(report, blocks, scores, labels, groups, threshold=0.5):
    """
    Appends one ``group:<name>`` row per group (AUC and confusion counts at
    ``threshold``) and one ``delong:<name>`` row testing the group's AUC
    against that of every other evaluated block, unpaired.

    Args:
        groups (dict): block id -> group name. Blocks without a group only
            take part as "rest".
    """
    scores, labels = np.asarray(scores, dtype=float), np.asarray(labels)
    names = np.array([groups.get(b.block_id) for b in blocks], dtype=object)
    ungrouped = int(sum(n is None for n in names))
    if ungrouped:
        logger.warning("%d blocks have no group", ungrouped)
    for name in sorted({n for n in names if n is not None}):
        inside = names == name
        counts = confusion_at(scores[inside], labels[inside], threshold)
        try:
            auc = roc_auc(scores[inside], labels[inside]).auc
        except InputError as exc:
            logger.warning("group %s has no AUC: %s", name, exc)
            auc = float("nan")
        report.add("group:" + name, n=int(inside.sum()), auc=auc,
                   threshold=threshold, tp=counts.tp, fp=counts.fp,
                   tn=counts.tn, fn=counts.fn, sensitivity=counts.sensitivity,
                   specificity=counts.specificity, accuracy=counts.accuracy)
        try:
            result = delong_unpaired(scores[inside], labels[inside],
                                     scores[~inside], labels[~inside])
        except InputError as exc:
            logger.warning("delong:%s skipped: %s", name, exc)
            continue
        logger.info("group %s AUC %.4f vs rest %.4f, p %.4g", name,
                    result.auc_a, result.auc_b, result.p)
        report.add("delong:" + name, n=int(inside.sum()), auc=result.auc_a,
                   p_value=result.p)
    return report


def plot_path(path):
    """Companion plot-data path of a report: ``r.csv`` -> ``r.plot.csv``."""
    return os.path.splitext(path)[0] + ".plot.csv"


def _write(frame, path):
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)


def _eval_frame(report):
    frame = pd.DataFrame(report.rows, columns=list(EVAL_COLUMNS))
    for name in COUNT_COLUMNS:
        frame[name] = frame[name].astype("Int64")
    return frame


def _sweep_frame(curves):
    frame = pd.DataFrame(curves.columns)
    for name in ("n_rule_out", "n_rule_in", "n_equivocal") + COUNT_COLUMNS[1:]:
        frame[name] = frame[name].astype("int64")
    return frame


def _sweep_plot(curves):
    parts = [pd.DataFrame({"series": name, "x": curves["tau"],
                           "y": curves[name]}) for name in SWEEP_SERIES]
    return pd.concat(parts, ignore_index=True)


def emit_report(report, path):
    """
    Writes an EvalReport or SweepCurves as CSV, floats with 6 significant
    digits, plus the companion plot-data file.

    Raises:
        OSError: ``path`` is not writable.
    """
    if isinstance(report, SweepCurves):
        frame, plot = _sweep_frame(report), _sweep_plot(report)
    else:
        frame = _eval_frame(report)
        plot = pd.DataFrame(report.plot, columns=["series", "x", "y"])
    _write(frame, path)
    _write(plot, plot_path(path))
    logger.info("wrote %d report rows to %s", len(frame), path)


def emit_outcomes(blocks, outcomes, path):
    """One row per screened block: id, label, both scores and the decision."""
    frame = pd.DataFrame({
        "block_id": [b.block_id for b in blocks],
        "label": [DetectionLabel(b.label).name.lower() for b in blocks],
        "p_sensitive": [o.p_sensitive for o in outcomes],
        "p_specific": [o.p_specific for o in outcomes],
        "decision": [o.decision.value for o in outcomes],
    })
    _write(frame, path)
    counts = frame["decision"].value_counts()
    _write(pd.DataFrame({"series": "decisions", "x": counts.index,
                         "y": counts.values}), plot_path(path))


def emit_embeddings(blocks, vectors, path):
    """Block-level embeddings: block_id, label, e0 .. e{Z-1}."""
    vectors = np.asarray(vectors)
    frame = pd.DataFrame(vectors, columns=["e{}".format(i) for i in
                                           range(vectors.shape[1])])
    frame.insert(0, "label", [DetectionLabel(b.label).name.lower()
                              for b in blocks])
    frame.insert(0, "block_id", [b.block_id for b in blocks])
    _write(frame, path)
