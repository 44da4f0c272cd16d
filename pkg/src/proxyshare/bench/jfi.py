"""Jain's fairness index over per-client throughput shares."""

from __future__ import annotations

from typing import Sequence


def compute_jfi(values: Sequence[float]) -> float:
    """(sum x)^2 / (n * sum x^2), in [1/n, 1].

    1.0 means perfectly equal shares; 1/n means a single taker.  A single
    value is trivially fair (1.0).  All-zero input is undefined and raises.
    """
    if not values:
        raise ValueError("compute_jfi requires at least one value")
    if any(v < 0 for v in values):
        raise ValueError("compute_jfi requires non-negative values")
    total = float(sum(values))
    if total == 0.0:
        raise ValueError("compute_jfi is undefined for an all-zero vector")
    square_sum = float(sum(v * v for v in values))
    return (total * total) / (len(values) * square_sum)
