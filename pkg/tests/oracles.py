"""Independent reference computations the tests compare against."""

from __future__ import annotations

from fractions import Fraction
from itertools import combinations


def enumerated_failure_probability(n: int, f: int, c: int) -> Fraction:
    """Fraction of all c-subsets of n ids (ids < f are Byzantine) with more than 2c/3 bad."""
    limit = (2 * c) // 3
    bad = total = 0
    for members in combinations(range(n), c):
        total += 1
        if sum(1 for m in members if m < f) > limit:
            bad += 1
    return Fraction(bad, total)


def failure_table_by_bitmask(n: int) -> dict:
    """{(f, c): Fraction} for every f < n and 1 <= c <= n, one pass over all subsets."""
    counts: dict = {}
    totals = [0] * (n + 1)
    for mask in range(1, 1 << n):
        c = mask.bit_count()
        totals[c] += 1
        limit = (2 * c) // 3
        for f in range(n):
            bad = (mask & ((1 << f) - 1)).bit_count()
            if bad > limit:
                counts[(f, c)] = counts.get((f, c), 0) + 1
    return {(f, c): Fraction(counts.get((f, c), 0), totals[c])
            for f in range(n) for c in range(1, n + 1)}


def proteus_epoch_messages(n: int, c: int) -> int:
    """Failure-free messages per block, self-sends excluded.

    pre-prepare c-1, prepare and commit c(c-1) each, block proposal c(n-1),
    approvals from the n-c regular replicas to c members, confirm c(n-1).
    """
    return (c - 1) + 2 * c * (c - 1) + c * (n - 1) + (n - c) * c + c * (n - 1)


def pbft_epoch_messages(n: int) -> int:
    return (n - 1) + 2 * n * (n - 1)


def view_change_messages(n: int, c: int) -> int:
    """Summary to new members, then Q, READY-to-members and P broadcast once each."""
    return 4 * c * (n - 1)
