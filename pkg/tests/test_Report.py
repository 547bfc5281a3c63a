#!/usr/bin/env python
# pylint: disable=C0103,R0904,W0212
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
import os
import tempfile
import unittest

import numpy as np
import pandas as pd

from sctpath import GradingLabel, Pattern, emit_report, threshold_sweep
from sctpath.blockdata import Block, DetectionLabel
from sctpath.errors import DataError
from sctpath.metrics import delong_unpaired
from sctpath.report import (EVAL_COLUMNS, EvalReport, add_comparison,
                            add_grading, add_groups, emit_embeddings,
                            emit_outcomes, evaluate_detection, plot_path,
                            read_groups)
from sctpath.screening import COLUMNS, SweepCurves, screen


def block(i, label, grading=None):
    return Block("b{}".format(i), np.zeros((1, 2)), [[0, 0]], [1], label,
                 grading)


class TestReport(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.path = os.path.join(self.tmp.name, "r.csv")

    def tearDown(self):
        self.tmp.cleanup()

    def lines(self, path=None):
        with open(path or self.path) as f:
            return f.read().splitlines()

    def test_plot_path(self):
        self.assertEqual(plot_path("out/r.csv"), "out/r.plot.csv")
        self.assertEqual(plot_path("r"), "r.plot.csv")

    def test_sweep_has_row_per_threshold(self):
        rng = np.random.default_rng(0)
        labels = rng.integers(0, 2, 50)
        curves = threshold_sweep(rng.random(50), rng.random(50), labels)
        emit_report(curves, self.path)
        lines = self.lines()
        self.assertEqual(len(lines), 200)
        self.assertEqual(lines[0], ",".join(COLUMNS))
        self.assertTrue(lines[1].startswith("0.500000,0.500000,0.500000,"))
        plot = pd.read_csv(plot_path(self.path))
        self.assertEqual(list(plot.columns), ["series", "x", "y"])
        self.assertEqual(len(plot), 5 * 199)

    def test_empty_sweep_writes_header(self):
        emit_report(SweepCurves(), self.path)
        self.assertEqual(self.lines(), [",".join(COLUMNS)])

    def test_detection_report(self):
        scores = np.r_[np.full(209, 0.9), np.full(11, 0.1),
                       np.full(655, 0.2), np.full(15, 0.7)]
        labels = np.r_[np.ones(220), np.zeros(670)].astype(int)
        report = evaluate_detection(scores, labels)
        emit_report(report, self.path)
        lines = self.lines()
        self.assertEqual(lines[0], ",".join(EVAL_COLUMNS))
        self.assertEqual(len(lines), 4)
        frame = pd.read_csv(self.path, dtype=str, keep_default_na=False)
        summary = frame.iloc[0]
        self.assertEqual(summary["row"], "summary")
        self.assertEqual(summary["sensitivity"], "0.950000")
        self.assertEqual(summary["specificity"], "0.977612")
        self.assertEqual(summary["tp"], "209")
        self.assertEqual(frame.iloc[1]["sensitivity"], "")
        self.assertEqual(frame.iloc[2]["row"], "carcinoma")
        self.assertTrue(os.path.exists(plot_path(self.path)))

    def test_comparison_rows(self):
        labels = np.array([0, 0, 0, 1, 1, 1])
        a = np.array([0.1, 0.2, 0.3, 0.7, 0.8, 0.9])
        report = add_comparison(EvalReport(), a, a, labels)
        self.assertEqual(report.get("delong_paired")["p_value"], 1.0)
        self.assertEqual(report.get("mcnemar")["p_value"], 1.0)
        with self.assertRaises(KeyError):
            report.get("kappa_isup")

    def test_group_rows(self):
        labels = [0, 0, 0, 1, 1, 1] * 2 + [0, 0]
        scores = [0.1, 0.2, 0.3, 0.7, 0.8, 0.9,
                  0.7, 0.8, 0.9, 0.1, 0.2, 0.3, 0.4, 0.6]
        blocks = [block(i, label) for i, label in enumerate(labels)]
        groups = {"b{}".format(i): "north" if i < 6 else "south"
                  for i in range(12)}
        groups["b12"] = "solo"
        with self.assertLogs("sctpath.report", level="WARNING") as logs:
            report = add_groups(EvalReport(), blocks, scores, labels, groups)
        self.assertTrue(any("1 blocks have no group" in m
                            for m in logs.output))
        north, south = report.get("group:north"), report.get("group:south")
        self.assertEqual((north["n"], north["auc"]), (6, 1.0))
        self.assertEqual((north["tp"], north["fp"], north["tn"], north["fn"]),
                         (3, 0, 3, 0))
        self.assertEqual(south["auc"], 0.0)
        self.assertEqual((south["tp"], south["fp"]), (0, 3))
        self.assertEqual(report.get("delong:north")["p_value"], 0.0)
        self.assertTrue(np.isnan(report.get("group:solo")["auc"]))
        with self.assertRaises(KeyError):
            report.get("delong:solo")
        emit_report(report, self.path)
        frame = pd.read_csv(self.path)
        self.assertEqual(frame["row"].tolist(),
                         ["group:north", "delong:north", "group:solo",
                          "group:south", "delong:south"])

    def test_group_delong_matches_unpaired_test(self):
        rng = np.random.default_rng(3)
        labels = rng.integers(0, 2, 60)
        labels[:4] = [0, 1, 0, 1]
        labels[30:34] = [0, 1, 0, 1]
        scores = labels * 0.8 + rng.standard_normal(60)
        blocks = [block(i, label) for i, label in enumerate(labels)]
        groups = {b.block_id: "a" if i < 30 else "b"
                  for i, b in enumerate(blocks)}
        report = add_groups(EvalReport(), blocks, scores, labels, groups)
        expected = delong_unpaired(scores[:30], labels[:30], scores[30:],
                                   labels[30:])
        row = report.get("delong:a")
        self.assertEqual(row["auc"], expected.auc_a)
        self.assertEqual(row["p_value"], expected.p)

    def test_read_groups(self):
        with open(self.path, "w") as f:
            f.write("block_id,group\nb1,north\n7,south\n")
        self.assertEqual(read_groups(self.path), {"b1": "north", "7": "south"})
        for text in ("block,group\nb1,x\n", "block_id,group\nb1,x\nb1,y\n",
                     "block_id,group\nb1,\n", ""):
            with open(self.path, "w") as f:
                f.write(text)
            with self.assertRaises(DataError):
                read_groups(self.path)

    def test_grading_rows(self):
        grades = [(3, 3), (3, 4), (4, 3), (4, 4), (5, 5), (4, 5)]
        blocks = [block(i, DetectionLabel.CARCINOMA, GradingLabel(*g))
                  for i, g in enumerate(grades)]
        blocks += [block(10 + i, DetectionLabel.BENIGN,
                         GradingLabel(Pattern.NONE, Pattern.NONE))
                   for i in range(3)]
        onehot = np.eye(4)
        dists = [(onehot[b.grading.classes[0]], onehot[b.grading.classes[1]])
                 for b in blocks]
        report = add_grading(EvalReport(), blocks, dists)
        for row in ("kappa_primary", "kappa_secondary", "kappa_isup"):
            self.assertEqual(report.get(row)["kappa"], 1.0, row)
        self.assertEqual(report.get("auc_gg3plus")["auc"], 1.0)
        self.assertEqual(report.get("auc_presence")["auc"], 1.0)

    def test_grading_skips_degenerate(self):
        blocks = [block(i, DetectionLabel.BENIGN,
                        GradingLabel(Pattern.NONE, Pattern.NONE))
                  for i in range(3)]
        dists = [(np.eye(4)[0], np.eye(4)[0])] * 3
        with self.assertLogs("sctpath.report", level="WARNING"):
            report = add_grading(EvalReport(), blocks, dists)
        self.assertEqual(report.rows, [])

    def test_outcomes(self):
        blocks = [block(0, DetectionLabel.BENIGN),
                  block(1, DetectionLabel.CARCINOMA)]
        emit_outcomes(blocks, screen([0.01, 0.8], [0.3, 0.99]), self.path)
        frame = pd.read_csv(self.path)
        self.assertEqual(frame["decision"].tolist(),
                         ["rule_out_benign", "rule_in_carcinoma"])
        self.assertEqual(frame["label"].tolist(), ["benign", "carcinoma"])

    def test_embeddings(self):
        blocks = [block(0, DetectionLabel.BENIGN),
                  block(1, DetectionLabel.UNKNOWN)]
        emit_embeddings(blocks, np.ones((2, 3)), self.path)
        self.assertEqual(self.lines()[0], "block_id,label,e0,e1,e2")
        self.assertEqual(self.lines()[2], "b1,unknown,1.00000,1.00000,1.00000")

    def test_unwritable_path(self):
        with self.assertRaises(OSError):
            emit_report(SweepCurves(),
                        os.path.join(self.tmp.name, "no", "r.csv"))


if __name__ == '__main__':
    unittest.main()
