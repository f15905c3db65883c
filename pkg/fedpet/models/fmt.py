#!/usr/bin/env python3
# -*- coding: utf-8 -*-
# models/fmt.py

"""
Text rendering of fedpet records: reprs at the configured verbosity, boxed
summaries and human-readable byte counts.
"""

from numbers import Real

from .. import config, constants

CORNERS = "┌┐└┘"
HORIZONTAL_BAR = "─"
VERTICAL_SIDE = "│"
HEADER_BAR = "═"
ARROW_UP = "↑"
ARROW_DOWN = "↓"


def _short(value):
    if isinstance(value, Real) and not isinstance(value, (bool, int)):
        return fmt_number(value)
    return repr(value)


def make_repr(obj, attrs):
    """Return the ``repr`` of ``obj`` at ``config.REPR_VERBOSITY``.

    At ``0`` this is the usual ``Name(attr=value, ...)``. At ``1`` it is a
    one-line summary with floats rounded to ``config.PRECISION``. At ``2``
    it is ``str(obj)``.
    """
    name = type(obj).__name__
    verbosity = config.REPR_VERBOSITY
    if verbosity == 0:
        fields = ("{}={!r}".format(a, getattr(obj, a)) for a in attrs)
        return "{}({})".format(name, ", ".join(fields))
    if verbosity == 1:
        fields = ("{}={}".format(a, _short(getattr(obj, a))) for a in attrs)
        return "<{} {}>".format(name, " ".join(fields))
    return str(obj)


def box(text):
    r"""Draw a frame around ``text``.

    Example:
        >>> print(box('alpha=0.1\nseed=3'))
        ┌───────────┐
        │ alpha=0.1 │
        │ seed=3    │
        └───────────┘
    """
    rows = text.split("\n")
    width = max(map(len, rows))
    rule = HORIZONTAL_BAR * (width + 2)
    framed = ["{0} {1:<{2}} {0}".format(VERTICAL_SIDE, row, width) for row in rows]
    top = CORNERS[0] + rule + CORNERS[1]
    bottom = CORNERS[2] + rule + CORNERS[3]
    return "\n".join([top] + framed + [bottom])


def header(head, text):
    """Center ``head`` over ``text`` and underline it."""
    width = max(map(len, [head] + text.split("\n")))
    return "\n".join([head.center(width), HEADER_BAR * width, text])


def fmt_number(x):
    """Format a float to ``config.PRECISION`` significant decimals."""
    return "{:.{p}g}".format(x, p=config.PRECISION)


def fmt_bytes(n):
    """Format a byte count in decimal units.

    Example:
        >>> fmt_bytes(498_588_528)
        '498.59 MB'
        >>> fmt_bytes(2_500)
        '2500 B'
    """
    if n >= constants.GB:
        return "{:.2f} GB".format(n / constants.GB)
    if n >= constants.MB:
        return "{:.2f} MB".format(n / constants.MB)
    return "{} B".format(n)


def fmt_round_record(record):
    """Format a |RoundRecord| as a single line."""
    return (
        "Round {r:>3}: val {val:.4f}  test {test:.4f}  "
        "{up}{bytes_up}  {down}{bytes_down}  K={k}".format(
            r=record.round,
            val=record.val,
            test=record.test,
            up=ARROW_UP,
            bytes_up=fmt_bytes(record.bytes_up),
            down=ARROW_DOWN,
            bytes_down=fmt_bytes(record.bytes_down),
            k=len(record.clients),
        )
    )


def fmt_history(history, title="Federated run"):
    body = "\n".join(fmt_round_record(r) for r in history) or "(no rounds)"
    return box(header(title, body))


def fmt_cost_report(report):
    """Format a |CostReport|."""
    lines = [
        "trainable scalars: {:,}".format(report.trainable_scalars),
        "payload:           {}".format(fmt_bytes(report.payload_bytes)),
        "per round:         {}".format(fmt_bytes(report.per_round_bytes)),
        "total:             {}".format(fmt_bytes(report.total_bytes)),
        "ratio vs FullFT:   {}x".format(fmt_number(report.ratio_vs_full)),
    ]
    return box(header("Cost of {}".format(report.method), "\n".join(lines)))


def fmt_attack_result(result):
    """Format an |AttackResult|."""
    lines = [
        "P = {}  R = {}  F1 = {}".format(
            fmt_number(result.precision),
            fmt_number(result.recall),
            fmt_number(result.f1),
        ),
        "final matching loss: {}".format(fmt_number(result.final_loss)),
        "iterations: {}".format(result.iterations),
    ]
    lines += [
        "example {}: {}".format(i, sorted(tokens))
        for i, tokens in enumerate(result.recovered)
    ]
    return box(header("Gradient inversion", "\n".join(lines)))
