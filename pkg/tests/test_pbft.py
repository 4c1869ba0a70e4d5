from __future__ import annotations

from hypothesis import given, settings, strategies as st

from oracles import pbft_epoch_messages
from proteus.sim import SimulationConfig, count_messages, run_simulation

FIXED = {"kind": "uniform", "lo": 5, "hi": 5}


def pbft_run(n, epochs=3, **kw):
    return run_simulation(SimulationConfig(n=n, epochs=epochs, protocol="pbft", **kw))[0]


def test_n4_epoch_costs_27_messages():
    m = pbft_run(4, latency=FIXED)
    assert m.per_epoch_messages() == pbft_epoch_messages(4) == 27


def test_n7_chains_identical():
    m = pbft_run(7, epochs=5, seed=b"p7")
    assert m.committed_blocks == 5
    assert len({tuple(t) for t in m.tips.values()}) == 1


def test_quadratic_growth():
    ratio = pbft_run(40, epochs=2).per_epoch_messages() / pbft_run(20, epochs=2).per_epoch_messages()
    assert 3.6 <= ratio <= 4.4


def test_all_pbft_traffic_is_normal_mode():
    m = pbft_run(7)
    assert count_messages(m, "view-change") == 0
    assert count_messages(m, "normal") == m.messages_total


@settings(max_examples=10, deadline=None)
@given(st.integers(min_value=4, max_value=16), st.integers(min_value=0, max_value=10**6))
def test_count_is_exact_for_any_n(n, seed):
    m = pbft_run(n, epochs=2, seed=str(seed).encode(),
                 latency={"kind": "lognormal", "mu": 2.0, "sigma": 0.5})
    assert m.per_epoch_messages() == (n - 1) + 2 * n * (n - 1)
