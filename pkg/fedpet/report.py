#!/usr/bin/env python3
# -*- coding: utf-8 -*-
# report.py

"""
Comparison tables and plot-ready data from the outputs of a run.

``report`` reads ``summary.csv`` and the per-cell ``metrics.jsonl`` files of
an output directory and writes:

``table.csv``
    Mean and standard deviation of best-round test accuracy over seeds per
    (scenario, alpha, local epochs, setting, method), the relative
    performance ``rel`` against FullFT in the same group and the
    communication ratio ``com`` of FullFT's payload to the method's.
``curves.tsv``
    Validation and test accuracy per round of every cell.
``budget.tsv``
    Cumulative bytes transferred against accuracy, per federated cell.
``acceptable.tsv``
    Per federated method, the first round and cumulative bytes at which its
    seed-averaged test accuracy reaches ``ACCEPTABLE_FRACTION`` of the
    centralized FullFT accuracy.
"""

import csv
import logging
import os
from collections import defaultdict

import numpy as np

from . import config, constants, harness

log = logging.getLogger(__name__)

TABLE_CSV_HEADER = [
    "scenario",
    "alpha",
    "local_epochs",
    "setting",
    "method",
    "n",
    "mean_test",
    "std_test",
    "rel",
    "com",
]
CURVES_HEADER = ["method", "setting", "alpha", "local_epochs", "seed", "round", "val", "test"]
BUDGET_HEADER = [
    "method",
    "alpha",
    "local_epochs",
    "seed",
    "round",
    "cumulative_bytes",
    "val",
    "test",
]
ACCEPTABLE_HEADER = ["method", "alpha", "local_epochs", "threshold", "round", "cumulative_bytes"]

FULLFT = "FullFT"


def _value(x):
    if x is None:
        return ""
    if isinstance(x, (float, np.floating)):
        return repr(round(float(x), config.PRECISION))
    return x


def _write(path, header, rows, delimiter=","):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, delimiter=delimiter, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_value(x) for x in row])
    return path


def group_key(row):
    return (row["scenario"], row["alpha"], row["local_epochs"], row["setting"])


def _sort_key(key):
    # `alpha` is None for centralized rows.
    scenario, alpha, epochs, setting = key
    return (scenario, alpha is not None, alpha or 0.0, epochs, setting)


def relative_table(rows):
    """Aggregate summary rows over seeds.

    Returns:
        list[list]: Rows of ``table.csv``, in group order and then in order
        of first appearance of each method.
    """
    groups = defaultdict(lambda: defaultdict(list))
    payloads = {}
    for row in rows:
        groups[group_key(row)][row["method"]].append(row["test"])
        payloads[(group_key(row), row["method"])] = row["payload_bytes"]

    out = []
    for key in sorted(groups, key=_sort_key):
        methods = groups[key]
        full = methods.get(FULLFT)
        full_mean = float(np.mean(full)) if full else None
        full_payload = payloads.get((key, FULLFT))
        for method, tests in methods.items():
            mean = float(np.mean(tests))
            rel = mean / full_mean if full_mean else None
            com = full_payload / payloads[(key, method)] if full_payload else None
            out.append(list(key) + [method, len(tests), mean, float(np.std(tests)), rel, com])
    return out


def _histories(out_dir, rows):
    for row in rows:
        path = os.path.join(
            out_dir,
            "cells",
            harness.cell_id(
                row["setting"], row["method"], row["alpha"], row["local_epochs"], row["seed"]
            ),
            "metrics.jsonl",
        )
        yield row, harness.read_metrics(path)


def curve_rows(out_dir, rows):
    out = []
    for row, history in _histories(out_dir, rows):
        for r in history:
            out.append(
                [
                    row["method"],
                    row["setting"],
                    row["alpha"],
                    row["local_epochs"],
                    row["seed"],
                    r.round,
                    r.val,
                    r.test,
                ]
            )
    return out


def budget_rows(out_dir, rows):
    out = []
    federated = [row for row in rows if row["setting"] == harness.FEDERATED]
    for row, history in _histories(out_dir, federated):
        spent = 0
        for r in history:
            spent += r.bytes_up + r.bytes_down
            out.append(
                [
                    row["method"],
                    row["alpha"],
                    row["local_epochs"],
                    row["seed"],
                    r.round,
                    spent,
                    r.val,
                    r.test,
                ]
            )
    return out


def acceptable_rows(out_dir, rows):
    """First round at which each federated method reaches the acceptable
    accuracy, or an empty round if it never does.
    """
    centralized = [
        row["test"]
        for row in rows
        if row["setting"] == harness.CENTRALIZED and row["method"] == FULLFT
    ]
    if not centralized:
        log.warning("No centralized FullFT runs; skipping the acceptable-performance line")
        return []
    threshold = constants.ACCEPTABLE_FRACTION * float(np.mean(centralized))

    curves = defaultdict(lambda: defaultdict(list))
    spent = {}
    federated = [row for row in rows if row["setting"] == harness.FEDERATED]
    for row, history in _histories(out_dir, federated):
        key = (row["method"], row["alpha"], row["local_epochs"])
        total = 0
        for r in history:
            total += r.bytes_up + r.bytes_down
            curves[key][r.round].append(r.test)
            spent[(key, r.round)] = total

    out = []
    for key, by_round in curves.items():
        reached = [t for t in sorted(by_round) if np.mean(by_round[t]) >= threshold]
        first = reached[0] if reached else None
        out.append(
            list(key) + [threshold, first, spent[(key, first)] if first else None]
        )
    return out


def report(out_dir):
    """Write the report files of ``out_dir``.

    Returns:
        list[str]: Paths written.
    """
    rows = harness.read_summary(os.path.join(out_dir, "summary.csv"))
    paths = [
        _write(os.path.join(out_dir, "table.csv"), TABLE_CSV_HEADER, relative_table(rows)),
        _write(
            os.path.join(out_dir, "curves.tsv"),
            CURVES_HEADER,
            curve_rows(out_dir, rows),
            delimiter="\t",
        ),
        _write(
            os.path.join(out_dir, "budget.tsv"),
            BUDGET_HEADER,
            budget_rows(out_dir, rows),
            delimiter="\t",
        ),
        _write(
            os.path.join(out_dir, "acceptable.tsv"),
            ACCEPTABLE_HEADER,
            acceptable_rows(out_dir, rows),
            delimiter="\t",
        ),
    ]
    log.info("Wrote report of %s summary rows to %s", len(rows), out_dir)
    return paths
