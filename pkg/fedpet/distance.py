#!/usr/bin/env python3
# -*- coding: utf-8 -*-
# distance.py

"""
Distances between client label distributions.
"""

import numpy as np
from scipy.spatial.distance import jensenshannon

from . import config
from .registry import Registry


class MeasureRegistry(Registry):
    """Storage for distribution distances.

    Users can define custom measures:

    Examples:
        >>> @measures.register('ALWAYS_ZERO')  # doctest: +SKIP
        ... def always_zero(p, q):
        ...    return 0

    And use them by passing ``measure='ALWAYS_ZERO'`` to
    ``distance_matrix``.
    """

    desc = "measures"


measures = MeasureRegistry()


def _empty_guard(p, q):
    """Distance between distributions when either has no mass: 0 if both
    are empty, 1 otherwise; ``None`` when both have mass.
    """
    p_empty, q_empty = not np.sum(p) > 0, not np.sum(q) > 0
    if p_empty or q_empty:
        return float(not (p_empty and q_empty))
    return None


@measures.register("JSD")
def js_distance(p, q):
    """Jensen-Shannon distance with base-2 logarithms, in ``[0, 1]``.

    Example:
        >>> js_distance([1, 0], [0, 1])
        1.0
        >>> js_distance([0.5, 0.5], [0.5, 0.5])
        0.0
    """
    guard = _empty_guard(p, q)
    if guard is not None:
        return guard
    d = jensenshannon(np.asarray(p, dtype=np.float64), np.asarray(q, dtype=np.float64), base=2)
    # Rounding can leave a tiny negative divergence under the square root.
    return float(np.clip(np.nan_to_num(d), 0.0, 1.0))


@measures.register("TVD")
def total_variation(p, q):
    """Total variation distance, in ``[0, 1]``."""
    guard = _empty_guard(p, q)
    if guard is not None:
        return guard
    p = np.asarray(p, dtype=np.float64) / np.sum(p)
    q = np.asarray(q, dtype=np.float64) / np.sum(q)
    return float(0.5 * np.abs(p - q).sum())


def distance_matrix(distributions, measure="JSD"):
    """Pairwise distances between the rows of ``distributions``.

    Returns:
        np.ndarray: A symmetric matrix with a zero diagonal.
    """
    func = measures[measure]
    rows = np.asarray(distributions, dtype=np.float64)
    n = len(rows)
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            out[i, j] = out[j, i] = func(rows[i], rows[j])
    return out


def js_distance_matrix(plan):
    """Pairwise Jensen-Shannon distances between the clients' label
    distributions.
    """
    return distance_matrix(plan.label_distributions(), measure="JSD")


def mean_pairwise_distance(matrix):
    """Mean of the off-diagonal entries."""
    matrix = np.asarray(matrix)
    n = len(matrix)
    if n < 2:
        return 0.0
    return float(matrix[~np.eye(n, dtype=bool)].mean())


def matrix_to_tsv(matrix):
    """Render a distance matrix as tab-separated rows at ``config.PRECISION``
    decimals.
    """
    fmt = "{:.%df}" % config.PRECISION
    return "".join(
        "\t".join(fmt.format(x) for x in row) + "\n" for row in np.asarray(matrix)
    )
