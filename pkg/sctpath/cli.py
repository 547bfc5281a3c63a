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
"""This module provides the ``sctpath`` command line.

Subcommands: synth, train, eval, screen, sweep, gradcheck and
export-embeddings. Exit codes: 0 success, 1 usage or configuration error,
2 data or file error, 3 numeric error (divergence, degenerate statistic,
failed gradient check).
"""
import argparse
import logging
import sys

import numpy as np
import pandas as pd

from sctpath.blockdata import DetectionLabel, load_blocks, write_blocks
from sctpath.blockgenerator import synth_generate
from sctpath.errors import DataError, SctError, UsageError
from sctpath.layers import masked_softmax
from sctpath.model import SctModelParams, embedding, forward
from sctpath.report import (add_comparison, add_grading, add_groups,
                            emit_embeddings, emit_outcomes, emit_report,
                            evaluate_detection, read_groups)
from sctpath.runconfig import RunConfig
from sctpath.screening import choose_thresholds, screen, threshold_sweep
from sctpath.training import gradcheck, map_blocks, predict, train
from sctpath.weights import load_weights, save_weights

logger = logging.getLogger(__name__)

EXIT_NUMERIC = 3


class ArgumentParser(argparse.ArgumentParser):
    """ArgumentParser raising UsageError instead of exiting with code 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _run_config(args):
    if getattr(args, "config", None):
        return RunConfig.load(args.config)
    return RunConfig()


def _known(blocks):
    known = [b for b in blocks if b.label != DetectionLabel.UNKNOWN]
    if len(known) < len(blocks):
        logger.warning("ignoring %d blocks with unknown labels",
                       len(blocks) - len(known))
    return known


def _labels(blocks):
    return np.array([int(b.label) for b in blocks])


def cmd_synth(args):
    rc = _run_config(args)
    config = rc.synth_config(args.seed)
    if args.n_blocks is not None:
        config.n_blocks = args.n_blocks
    if args.variant is not None:
        config.variant = args.variant
    write_blocks(synth_generate(config.validate()), args.out)
    return 0


def cmd_train(args):
    rc = _run_config(args)
    config = rc.train_config(args.seed, args.threads)
    if args.task:
        config.task = args.task
    if args.epochs:
        config.epochs = args.epochs
    kind = args.model or rc["train.model"]
    blocks = load_blocks(args.data)
    if not blocks:
        raise DataError("{} holds no blocks".format(args.data))
    validation = load_blocks(args.validation) if args.validation else None
    in_dim = blocks[0].dim
    if kind == "abmil":
        model_config = rc.abmil_config(in_dim)
    else:
        head = "grade" if config.task == "grading" else "detect"
        model_config = rc.model_config(in_dim, head)
    params, history = train(blocks, config.validate(), kind, model_config,
                            validation)
    save_weights(params, args.out)
    if args.history:
        pd.DataFrame({
            "epoch": np.arange(1, len(history.loss) + 1),
            "loss": history.loss,
            "val_auc": history.val_auc,
            "wall_time": history.wall_time,
        }).to_csv(args.history, index=False, float_format="%#.6g")
    print("best epoch {} validation AUC {:.4f}".format(
        history.best_epoch + 1, history.val_auc[history.best_epoch]))
    return 0


def _distributions(blocks, params, threads):

    def heads(block):
        out, _ = forward(block, params)
        return (masked_softmax(out["logits_primary"]),
                masked_softmax(out["logits_secondary"]))

    return map_blocks(heads, blocks, threads)


def cmd_eval(args):
    blocks = _known(load_blocks(args.data))
    params = load_weights(args.weights)
    labels = _labels(blocks)
    scores = predict(blocks, params, args.threads)
    report = evaluate_detection(scores, labels, args.threshold)
    if isinstance(params, SctModelParams) and params.config.head == "grade":
        add_grading(report, blocks,
                    _distributions(blocks, params, args.threads),
                    seed=_run_config(args).seed(args.seed))
    if args.compare:
        other = predict(blocks, load_weights(args.compare), args.threads)
        add_comparison(report, scores, other, labels, args.threshold)
    if args.groups:
        add_groups(report, blocks, scores, labels, read_groups(args.groups),
                   args.threshold)
    emit_report(report, args.report)
    summary = report.get("summary")
    print("AUC {:.4f} sensitivity {:.4f} specificity {:.4f}".format(
        summary["auc"], summary["sensitivity"], summary["specificity"]))
    return 0


def _dual_scores(args, blocks):
    p_sens = predict(blocks, load_weights(args.sensitive), args.threads)
    p_spec = predict(blocks, load_weights(args.specific), args.threads)
    return p_sens, p_spec


def cmd_screen(args):
    rc = _run_config(args)
    t_lo = rc["screen.t_lo"] if args.t_lo is None else args.t_lo
    t_hi = rc["screen.t_hi"] if args.t_hi is None else args.t_hi
    blocks = load_blocks(args.data)
    p_sens, p_spec = _dual_scores(args, blocks)
    outcomes = screen(p_sens, p_spec, t_lo, t_hi)
    emit_outcomes(blocks, outcomes, args.out)
    for decision in sorted({o.decision for o in outcomes},
                           key=lambda d: d.value):
        print("{}: {}".format(decision.value,
                              sum(o.decision == decision for o in outcomes)))
    return 0


def cmd_sweep(args):
    rc = _run_config(args)
    blocks = _known(load_blocks(args.data))
    p_sens, p_spec = _dual_scores(args, blocks)
    curves = threshold_sweep(p_sens, p_spec, _labels(blocks), rc.grid())
    emit_report(curves, args.report)
    max_fnr = rc["screen.max_fnr"] if args.max_fnr is None else args.max_fnr
    max_fpr = rc["screen.max_fpr"] if args.max_fpr is None else args.max_fpr
    choice = choose_thresholds(curves, max_fnr, max_fpr)
    print("t_lo {:.4f} t_hi {:.4f} feasible {}".format(
        choice.t_lo, choice.t_hi, choice.feasible))
    return 0


def cmd_gradcheck(args):
    seed = _run_config(args).seed(args.seed)
    reports = gradcheck(args.op, args.trials, args.eps, seed)
    worst_op, worst_name, worst = None, None, -1.0
    for report in reports:
        name, err = report.worst()
        print("{:<12} {:<28} {:.3e}  per entry {:.3e}".format(
            report.op, name, err, report.worst_elementwise()[1]))
        if err > worst:
            worst_op, worst_name, worst = report.op, name, err
    print("worst: {} {} {:.3e}".format(worst_op, worst_name, worst))
    return 0 if worst <= args.tol else EXIT_NUMERIC


def cmd_export_embeddings(args):
    blocks = load_blocks(args.data)
    params = load_weights(args.weights)
    vectors = map_blocks(lambda b: embedding(b, params), blocks, args.threads)
    emit_embeddings(blocks, vectors, args.out)
    return 0


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None,
                        help="seed, falls back to $SCT_SEED")
    common.add_argument("--threads", type=int, default=1,
                        help="worker threads for per-block passes")
    common.add_argument("--verbose", "-v", action="store_true",
                        help="log debug messages")
    common.add_argument("--config", help="key = value run configuration")

    parser = ArgumentParser(
        prog="sctpath",
        description="Sparse convolutional transformer for tissue-block "
        "classification")
    sub = parser.add_subparsers(dest="command", parser_class=ArgumentParser)

    p = sub.add_parser("synth", parents=[common],
                       help="generate a synthetic block dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--n-blocks", type=int)
    p.add_argument("--variant", choices=["focal", "context"])
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", parents=[common], help="train a model")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="weights file to write")
    p.add_argument("--validation", help="held-out SCTB file")
    p.add_argument("--model", choices=["sct", "abmil"])
    p.add_argument("--task",
                   choices=["detection", "grading", "sensitive", "specific"])
    p.add_argument("--epochs", type=int)
    p.add_argument("--history", help="per-epoch CSV to write")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common], help="evaluate a model")
    p.add_argument("--data", required=True)
    p.add_argument("--weights", required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--compare", help="second weights file for DeLong and "
                                     "McNemar tests")
    p.add_argument("--groups", help="block_id,group CSV for per-group rows "
                                    "and group-vs-rest DeLong tests")
    p.set_defaults(func=cmd_eval)

    for name, func, helptext in (
            ("screen", cmd_screen, "dual-model screening decisions"),
            ("sweep", cmd_sweep, "threshold trade-off curves")):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("--data", required=True)
        p.add_argument("--sensitive", required=True)
        p.add_argument("--specific", required=True)
        if name == "screen":
            p.add_argument("--out", required=True)
            p.add_argument("--t-lo", type=float)
            p.add_argument("--t-hi", type=float)
        else:
            p.add_argument("--report", required=True)
            p.add_argument("--max-fnr", type=float)
            p.add_argument("--max-fpr", type=float)
        p.set_defaults(func=func)

    p = sub.add_parser("gradcheck", parents=[common],
                       help="finite-difference gradient check")
    p.add_argument("--op", default="all")
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--eps", type=float, default=1e-5)
    p.add_argument("--tol", type=float, default=1e-4)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("export-embeddings", parents=[common],
                       help="write block embeddings as CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--weights", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_embeddings)
    return parser


def cmd_dispatch(argv):
    """
    Runs one command line.

    Returns:
        int: The process exit code.
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not args.command:
            parser.print_usage(sys.stderr)
            raise UsageError("a subcommand is required")
        logging.basicConfig(
            level=logging.DEBUG if args.verbose else logging.INFO,
            format="%(asctime)s %(levelname)s %(name)s: %(message)s",
            stream=sys.stderr)
        if args.threads < 1:
            raise UsageError("--threads must be >= 1")
        return args.func(args)
    except SctError as exc:
        print("sctpath: error: {}".format(exc), file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print("sctpath: error: {}".format(exc), file=sys.stderr)
        return 2


def main():
    sys.exit(cmd_dispatch(sys.argv[1:]))
