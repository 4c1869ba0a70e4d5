from __future__ import annotations

from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from oracles import enumerated_failure_probability
from proteus.committee import (
    InvalidCounts, NoFeasibleSize, committee_draw_probability, committee_summary,
    failure_probability, min_committee_size, select_committee,
)


@pytest.mark.parametrize("n,f,c", [(6, 2, 3), (9, 4, 3), (10, 3, 3), (10, 5, 6), (12, 5, 9)])
def test_matches_enumeration(n, f, c):
    assert failure_probability(n, f, c) == enumerated_failure_probability(n, f, c)


def test_too_few_byzantine_means_zero():
    # the root quorum needs 2c/3 + 1 bad members, which 3 faults can never supply for c = 6
    assert failure_probability(10, 3, 6) == 0
    assert failure_probability(10, 3, 3) == Fraction(1, 120)


def test_draw_probabilities_sum_to_one():
    n, f, c = 20, 6, 7
    total = sum(committee_draw_probability(n, f, c - b, b) for b in range(0, min(c, f) + 1))
    assert total == 1


@pytest.mark.parametrize("args", [(5, 6, 2), (5, 1, 0), (5, 1, 6), (0, 0, 1), (5, -1, 2)])
def test_invalid_counts(args):
    with pytest.raises(InvalidCounts):
        failure_probability(*args)


def test_draw_probability_rejects_impossible_split():
    with pytest.raises(InvalidCounts):
        committee_draw_probability(10, 3, 2, 4)


def test_min_committee_size_rejects_bad_target():
    with pytest.raises(ValueError):
        min_committee_size(100, 33, 0.0)
    with pytest.raises(NoFeasibleSize):
        min_committee_size(9, 7, 1e-3)  # 7 of 9 faulty: every committee is captured


@settings(max_examples=60, deadline=None)
@given(st.integers(min_value=4, max_value=120), st.sampled_from([1e-2, 1e-4, 8.9e-7]))
def test_min_committee_size_is_minimal(n, target):
    f = (n - 1) // 3
    c = min_committee_size(n, f, target)
    assert c % 3 == 0 or c == n
    assert failure_probability(n, f, c) <= Fraction(target)
    for smaller in range(3, c, 3):
        assert failure_probability(n, f, smaller) > Fraction(target)


def test_failure_probability_falls_with_c_at_fixed_n():
    vals = [failure_probability(100, 33, c) for c in range(12, 61, 3)]
    assert all(b < a or a == b == 0 for a, b in zip(vals, vals[1:]))
    assert vals[-1] == 0  # threshold 2c/3 + 1 = 41 exceeds f = 33


@settings(max_examples=80, deadline=None)
@given(st.integers(min_value=1, max_value=60), st.data())
def test_selection_is_a_deterministic_subset(n, data):
    c = data.draw(st.integers(min_value=1, max_value=n))
    view = data.draw(st.integers(min_value=0, max_value=1000))
    seed = data.draw(st.binary(max_size=8))
    sel = select_committee(seed, view, n, c)
    assert len(set(sel.members)) == c == len(sel)
    assert all(0 <= m < n for m in sel.members)
    assert list(sel.members) == sorted(sel.members)
    assert sel.primary == min(sel.members) and sel.primary in sel
    assert sel == select_committee(seed, view, n, c)


def test_selection_changes_between_views():
    draws = {select_committee(b"s", v, 100, 30).members for v in range(20)}
    assert len(draws) == 20


def test_selection_is_roughly_uniform():
    n, c, trials = 10, 3, 3000
    hits = [0] * n
    for v in range(trials):
        for m in select_committee(b"u", v, n, c).members:
            hits[m] += 1
    expected = trials * c / n
    assert all(abs(h - expected) < 0.15 * expected for h in hits)


def test_selection_rejects_oversized_committee():
    with pytest.raises(InvalidCounts):
        select_committee(b"s", 0, 5, 6)


def test_summary_record():
    rec = committee_summary(100, target=8.9e-7)
    assert rec["c"] == 30 and rec["f"] == 33 and rec["root_quorum"] == 21
    assert Fraction(rec["pf_exact"]) == failure_probability(100, 33, 30)
    with pytest.raises(ValueError):
        committee_summary(100)
