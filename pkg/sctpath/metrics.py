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
"""This module provides the evaluation statistics: ROC AUC and operating
points, quadratic weighted kappa with a bootstrap interval, DeLong and McNemar
tests, and the ISUP grade group mapping.
"""
import logging
from dataclasses import dataclass
from enum import IntEnum
from itertools import product

import numpy as np
from scipy.stats import binomtest, norm, rankdata
from sklearn.metrics import cohen_kappa_score, roc_auc_score, roc_curve

from sctpath.blockdata import Pattern
from sctpath.errors import (ConfigError, DegenerateKappaError, InputError,
                            UndefinedAucError)

logging.getLogger(__name__).addHandler(logging.NullHandler())
logger = logging.getLogger(__name__)

KAPPA_RESAMPLES = 2000


def _aligned(*arrays):
    arrays = [np.asarray(a) for a in arrays]
    if len({len(a) for a in arrays}) > 1:
        raise InputError("inputs differ in length: {}".format(
            [len(a) for a in arrays]))
    return arrays


def _binary_labels(labels):
    labels = np.asarray(labels).astype(int)
    if set(np.unique(labels)) - {0, 1}:
        raise InputError("labels must be 0 or 1")
    if len(np.unique(labels)) < 2:
        raise UndefinedAucError()
    return labels


@dataclass
class RocResult:
    """
    Attributes:
        auc (float): Area under the curve; ties count one half.
        thresholds (numpy.ndarray): Decreasing score thresholds.
        sensitivity, specificity (numpy.ndarray): Operating point of each
            threshold, predicting carcinoma for score >= threshold.
    """
    auc: float
    thresholds: np.ndarray
    sensitivity: np.ndarray
    specificity: np.ndarray


def roc_auc(scores, labels):
    """
    ROC curve and AUC.

    Raises:
        UndefinedAucError: Only one class is present.
    """
    scores, labels = _aligned(scores, labels)
    labels = _binary_labels(labels)
    fpr, tpr, thresholds = roc_curve(labels, scores, drop_intermediate=False)
    auc = float(roc_auc_score(labels, scores))
    return RocResult(auc, thresholds, tpr, 1.0 - fpr)


@dataclass(frozen=True)
class Confusion:
    tp: int
    fp: int
    tn: int
    fn: int

    @classmethod
    def from_counts(cls, tp=0, fp=0, tn=0, fn=0):
        return cls(int(tp), int(fp), int(tn), int(fn))

    @property
    def sensitivity(self):
        den = self.tp + self.fn
        return self.tp / den if den else float("nan")

    @property
    def specificity(self):
        den = self.tn + self.fp
        return self.tn / den if den else float("nan")

    @property
    def accuracy(self):
        den = self.tp + self.fp + self.tn + self.fn
        return (self.tp + self.tn) / den if den else float("nan")


def confusion_at(scores, labels, threshold=0.5):
    """Confusion counts predicting carcinoma for score >= threshold."""
    scores, labels = _aligned(scores, labels)
    pred = scores >= threshold
    truth = labels.astype(bool)
    return Confusion.from_counts(tp=(pred & truth).sum(),
                                 fp=(pred & ~truth).sum(),
                                 tn=(~pred & ~truth).sum(),
                                 fn=(~pred & truth).sum())


def specificity_at_sensitivity(scores, labels, target=0.95):
    """
    Specificity at the highest threshold whose sensitivity reaches
    ``target``.

    Returns:
        (float, float): Specificity and the threshold.
    """
    roc = roc_auc(scores, labels)
    i = int(np.flatnonzero(roc.sensitivity >= target)[0])
    return float(roc.specificity[i]), float(roc.thresholds[i])


@dataclass
class KappaResult:
    kappa: float
    ci_low: float
    ci_high: float
    weighting: str = "quadratic"
    resamples: int = 0


def _degenerate(pred, actual):
    return len(np.unique(np.concatenate([pred, actual]))) < 2


def _kappa(pred, actual, n_categories):
    return float(cohen_kappa_score(actual, pred, weights="quadratic",
                                   labels=np.arange(n_categories)))


def quadratic_kappa(pred, actual, n_categories, resamples=KAPPA_RESAMPLES,
                    seed=0, level=0.95):
    """
    Quadratic weighted Cohen's kappa with a percentile bootstrap interval.

    Each resample draws from its own generator spawned off ``seed``, so the
    interval does not depend on evaluation order. Resamples whose ratings
    collapse to a single category are skipped.

    Args:
        pred, actual (array_like): Ordinal ratings in 0 .. n_categories - 1.
        n_categories (int): Number of ordinal categories, at least 2.

    Raises:
        DegenerateKappaError: Both raters use one and the same category.
    """
    pred, actual = _aligned(pred, actual)
    if n_categories < 2:
        raise ConfigError("kappa needs at least 2 categories")
    if len(pred) < 2:
        raise InputError("kappa needs at least 2 rated items")
    for ratings in (pred, actual):
        if ratings.min() < 0 or ratings.max() >= n_categories:
            raise InputError("ratings must lie in 0..{}".format(
                n_categories - 1))
    if _degenerate(pred, actual):
        raise DegenerateKappaError()
    kappa = _kappa(pred, actual, n_categories)
    values = []
    for child in np.random.SeedSequence(seed).spawn(resamples):
        idx = np.random.default_rng(child).integers(0, len(pred), len(pred))
        if not _degenerate(pred[idx], actual[idx]):
            values.append(_kappa(pred[idx], actual[idx], n_categories))
    if values:
        tail = 100 * (1 - level) / 2
        lo, hi = np.percentile(values, [tail, 100 - tail])
    else:
        lo = hi = kappa
    return KappaResult(kappa, float(min(lo, kappa)), float(max(hi, kappa)),
                       resamples=len(values))


def _structural_components(scores, labels):
    """
    Midrank structural components of the AUC of each score row.

    Args:
        scores (numpy.ndarray): K x N scores.
        labels (numpy.ndarray): N binary labels.

    Returns:
        (numpy.ndarray, numpy.ndarray): K x m components over positives and
        K x n components over negatives.
    """
    pos, neg = scores[:, labels == 1], scores[:, labels == 0]
    m, n = pos.shape[1], neg.shape[1]
    if m < 2 or n < 2:
        raise InputError("DeLong needs at least two blocks of each class")
    tx = rankdata(pos, axis=1)
    ty = rankdata(neg, axis=1)
    tz = rankdata(np.concatenate([pos, neg], axis=1), axis=1)
    v01 = (tz[:, :m] - tx) / n
    v10 = 1.0 - (tz[:, m:] - ty) / m
    return v01, v10


def _auc_covariance(scores, labels):
    v01, v10 = _structural_components(scores, labels)
    return (np.atleast_2d(np.cov(v01)) / v01.shape[1] +
            np.atleast_2d(np.cov(v10)) / v10.shape[1])


@dataclass
class DelongResult:
    auc_a: float
    auc_b: float
    var_a: float
    var_b: float
    z: float
    p: float


def _two_sided(auc_a, auc_b, var):
    diff = auc_a - auc_b
    if var <= 0:
        if diff == 0:
            return 0.0, 1.0
        return float(np.copysign(np.inf, diff)), 0.0
    z = diff / np.sqrt(var)
    return float(z), float(min(1.0, 2 * norm.sf(abs(z))))


def delong_paired(scores_a, scores_b, labels):
    """
    DeLong test for two correlated AUCs measured on the same blocks.

    Returns:
        DelongResult: Both AUCs (as roc_auc() computes them), their variances,
        z and the two-sided p-value.
    """
    scores_a, scores_b, labels = _aligned(scores_a, scores_b, labels)
    labels = _binary_labels(labels)
    auc_a = roc_auc(scores_a, labels).auc
    auc_b = roc_auc(scores_b, labels).auc
    cov = _auc_covariance(np.vstack([scores_a, scores_b]).astype(float),
                          labels)
    var = cov[0, 0] + cov[1, 1] - 2 * cov[0, 1]
    z, p = _two_sided(auc_a, auc_b, var)
    return DelongResult(auc_a, auc_b, float(cov[0, 0]), float(cov[1, 1]), z,
                        p)


def delong_unpaired(scores_a, labels_a, scores_b, labels_b):
    """DeLong test for two AUCs measured on independent samples."""
    scores_a, labels_a = _aligned(scores_a, labels_a)
    scores_b, labels_b = _aligned(scores_b, labels_b)
    labels_a, labels_b = _binary_labels(labels_a), _binary_labels(labels_b)
    auc_a = roc_auc(scores_a, labels_a).auc
    auc_b = roc_auc(scores_b, labels_b).auc
    var_a = float(_auc_covariance(scores_a[None].astype(float),
                                  labels_a)[0, 0])
    var_b = float(_auc_covariance(scores_b[None].astype(float),
                                  labels_b)[0, 0])
    z, p = _two_sided(auc_a, auc_b, var_a + var_b)
    return DelongResult(auc_a, auc_b, var_a, var_b, z, p)


def mcnemar_exact(correct_a, correct_b):
    """
    Exact two-sided McNemar test on paired correctness.

    Only discordant pairs count: b blocks model A got right and B wrong, c the
    reverse. p is the binomial two-sided p-value of b out of b + c at 1/2, and
    1 when there are no discordant pairs.
    """
    correct_a, correct_b = _aligned(correct_a, correct_b)
    correct_a, correct_b = correct_a.astype(bool), correct_b.astype(bool)
    b = int((correct_a & ~correct_b).sum())
    c = int((~correct_a & correct_b).sum())
    if b + c == 0:
        return 1.0
    return float(binomtest(b, b + c, 0.5).pvalue)


class GradeGroup(IntEnum):
    BENIGN = 0
    GG1 = 1
    GG2 = 2
    GG3 = 3
    GG4 = 4
    GG5 = 5


def _pattern(value):
    if value is None:
        return Pattern.NONE
    try:
        pattern = Pattern(int(value))
    except ValueError:
        raise InputError("invalid Gleason pattern {!r}".format(value))
    if pattern == Pattern.UNKNOWN:
        raise InputError("Gleason pattern is unknown")
    return pattern


def isup_group(primary, secondary):
    """
    ISUP grade group of a Gleason pattern pair.

    (none, none) is benign; 3+3 is GG1, 3+4 GG2, 4+3 GG3, a sum of 8 GG4 and
    a sum of 9 or 10 GG5.

    Raises:
        InputError: Only one of the patterns is none, or a pattern is invalid.
    """
    primary, secondary = _pattern(primary), _pattern(secondary)
    if (primary == Pattern.NONE) != (secondary == Pattern.NONE):
        raise InputError("mixed none/pattern pair ({}, {})".format(
            primary.name, secondary.name))
    if primary == Pattern.NONE:
        return GradeGroup.BENIGN
    total = int(primary) + int(secondary)
    if total <= 6:
        return GradeGroup.GG1
    if total == 7:
        return GradeGroup.GG2 if primary == Pattern.P3 else GradeGroup.GG3
    return GradeGroup.GG4 if total == 8 else GradeGroup.GG5


_PATTERNS = (Pattern.P3, Pattern.P4, Pattern.P5)


def gg3plus_score(primary, secondary):
    """
    Probability of grade group 3 or higher from the two pattern heads.

    The heads are treated as independent; the mass of the nine carcinoma
    pattern pairs is renormalised to one.

    Args:
        primary, secondary (array_like): Distributions over (none, 3, 4, 5).
    """
    primary, secondary = np.asarray(primary), np.asarray(secondary)
    high = total = 0.0
    for (i, a), (j, b) in product(enumerate(_PATTERNS, 1), repeat=2):
        mass = float(primary[i] * secondary[j])
        total += mass
        if isup_group(a, b) >= GradeGroup.GG3:
            high += mass
    return high / total if total > 0 else 0.0
