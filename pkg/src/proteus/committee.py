"""
Committee sizing and selection.

Probabilities are exact: tails of the hypergeometric distribution are summed
as big-integer binomial products and divided once, giving a ``Fraction``.
Floating-point summation loses the 1e-12 scale tails that matter here.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from math import comb

from .core import default_f, root_threshold

DEFAULT_PF_TARGET = 8.9e-7
PRNG_NAME = "python-mt19937/sha256-seeded"


class InvalidCounts(ValueError):
    pass


class NoFeasibleSize(ValueError):
    pass


@dataclass(frozen=True)
class CommitteeSelection:
    view: int
    seed: bytes
    members: tuple  # sorted replica ids
    primary: int

    def __contains__(self, replica_id: int) -> bool:
        return replica_id in self.member_set

    @cached_property
    def member_set(self) -> frozenset:
        return frozenset(self.members)

    def __len__(self) -> int:
        return len(self.members)


def committee_draw_probability(n: int, f: int, a: int, b: int) -> Fraction:
    """Probability that a uniform c-subset holds exactly ``a`` good and ``b`` bad nodes."""
    if min(n, f, a, b) < 0 or a + b > n or a > n - f or b > f:
        raise InvalidCounts(f"invalid counts n={n} f={f} a={a} b={b}")
    return Fraction(comb(n - f, a) * comb(f, b), comb(n, a + b))


def failure_probability(n: int, f: int, c: int) -> Fraction:
    """Probability that a uniform committee of size ``c`` has more than 2c/3 bad members."""
    if n < 1 or not 0 <= f <= n or not 1 <= c <= n:
        raise InvalidCounts(f"invalid counts n={n} f={f} c={c}")
    lo = (2 * c) // 3 + 1
    if f < lo:
        return Fraction(0)
    hi = min(c, f)
    good = n - f
    num = sum(comb(good, c - b) * comb(f, b) for b in range(lo, hi + 1) if c - b <= good)
    return Fraction(num, comb(n, c))


def min_committee_size(n: int, f: int | None = None, pf_target: float = DEFAULT_PF_TARGET) -> int:
    """Smallest multiple of 3 (at most ``n``) whose failure probability is within target."""
    if not 0 < pf_target < 1:
        raise ValueError("pf_target must lie in (0, 1)")
    if f is None:
        f = default_f(n)
    target = Fraction(pf_target)
    for c in range(3, n + 1, 3):
        if failure_probability(n, f, c) <= target:
            return c
    if n % 3 and failure_probability(n, f, n) <= target:
        return n
    raise NoFeasibleSize(f"no committee size for n={n} f={f} meets {pf_target}")


def _selection_rng(seed: bytes, view: int) -> random.Random:
    material = hashlib.sha256(b"committee|" + seed + b"|" + str(view).encode()).digest()
    return random.Random(int.from_bytes(material, "big"))


def select_committee(seed: bytes, view: int, n: int, c: int) -> CommitteeSelection:
    """Seeded partial Fisher-Yates draw of ``c`` distinct ids; primary is the lowest id."""
    if not 1 <= c <= n:
        raise InvalidCounts(f"cannot select {c} of {n}")
    rng = _selection_rng(seed, view)
    ids = list(range(n))
    for k in range(c):
        j = k + rng.randrange(n - k)
        ids[k], ids[j] = ids[j], ids[k]
    members = tuple(sorted(ids[:c]))
    return CommitteeSelection(view, seed, members, members[0])


def committee_summary(n: int, f: int | None = None, c: int | None = None,
                      target: float | None = None) -> dict:
    """The JSON record printed by the ``committee`` command."""
    if f is None:
        f = default_f(n)
    if c is None:
        if target is None:
            raise ValueError("one of c or target is required")
        c = min_committee_size(n, f, target)
    pf = failure_probability(n, f, c)
    return {"n": n, "f": f, "c": c, "pf": float(pf), "pf_exact": str(pf),
            "root_quorum": root_threshold(c)}
