"""End-to-end acceptance checks, one test per criterion.

Each criterion records a PASS/FAIL line that the terminal summary prints
(see ``conftest.py``), so a run of this module ends with one verdict line per
criterion regardless of output capture.
"""

from __future__ import annotations

import random
import time
from functools import lru_cache

import numpy as np
import pytest

from oracles import failure_table_by_bitmask
from proteus import adversary as adv
from proteus.committee import failure_probability, min_committee_size
from proteus.sim import (
    SafetyViolation, Simulation, SimulationConfig, count_messages, run_simulation, trace_lines,
)

RESULTS: dict = {}

SIZE_TABLE = {40: 18, 70: 27, 100: 30, 130: 33, 200: 36}
PF_TARGET = 8.9e-7
FIXED = {"kind": "uniform", "lo": 5, "hi": 5}


def record(k: int, ok: bool, detail: str) -> None:
    RESULTS[k] = f"{'PASS' if ok else 'FAIL'} criterion {k}: {detail}"


# 1

def test_1_failure_probability_matches_enumeration():
    t0 = time.perf_counter()
    mismatches = []
    checked = 0
    for n in range(1, 13):
        table = failure_table_by_bitmask(n)
        for (f, c), expected in table.items():
            checked += 1
            if failure_probability(n, f, c) != expected:
                mismatches.append((n, f, c))
    elapsed = time.perf_counter() - t0
    ok = not mismatches and elapsed < 10
    record(1, ok, f"{checked} (n, f, c) cases exact, {len(mismatches)} mismatches, {elapsed:.2f}s")
    assert not mismatches
    assert elapsed < 10


# 2

FIGURE_POINTS = [((100, 33, 40), 2.1e-9), ((150, 50, 50), 3.60e-10), ((200, 66, 60), 2.25e-12)]


def _within(value: float, target: float, rel: float = 0.10) -> bool:
    return abs(value - target) <= rel * target


def test_2_committee_failure_curve():
    rows = []
    for args, target in FIGURE_POINTS:
        value = float(failure_probability(*args))
        rows.append((args, value, target, _within(value, target)))
    small = float(failure_probability(100, 33, 10))
    small_ok = abs(small - 0.0137) <= 0.0005
    all_ok = small_ok and all(r[3] for r in rows)
    detail = "; ".join(f"{a}={v:.3g} vs {t:.3g}{'' if ok else ' OUT'}" for a, v, t, ok in rows)
    record(2, all_ok, f"{detail}; (100, 33, 10)={small:.4f} vs 0.0137")
    # the attainable points are asserted here; (200, 66, 60) is pinned by the xfail below
    assert small_ok
    assert all(ok for a, _, _, ok in rows if a != (200, 66, 60))


@pytest.mark.xfail(strict=True, reason="exact value for (200, 66, 60) is 9.23e-12, about 4x the "
                   "plotted 2.25e-12; no f from 63 to 67 lands within 10%")
def test_2_committee_failure_curve_n200_point():
    assert _within(float(failure_probability(200, 66, 60)), 2.25e-12)


# 3

def test_3_committee_size_table():
    got = {n: min_committee_size(n, pf_target=PF_TARGET) for n in SIZE_TABLE}
    ok = got == SIZE_TABLE
    record(3, ok, ", ".join(f"n={n}: {got[n]} (want {SIZE_TABLE[n]})" for n in SIZE_TABLE))
    assert got == SIZE_TABLE


# 4

LATENCIES = [
    {"kind": "uniform", "lo": 5, "hi": 15},
    {"kind": "uniform", "lo": 1, "hi": 30},
    {"kind": "lognormal", "mu": 2.0, "sigma": 0.5},
]


def _prefix_consistent(chains) -> bool:
    longest = max(chains, key=len)
    return all(ch == longest[: len(ch)] for ch in chains)


def test_4_randomized_safety():
    t0 = time.perf_counter()
    rng = random.Random(20240404)
    conflicts = aborts = stalled = 0
    for k in range(1000):
        n = rng.choice([7, 10, 13, 19, 31])
        cfg = SimulationConfig(n=n, epochs=rng.randint(2, 5), seed=f"safety-{k}".encode(),
                               drop_rate=rng.choice([0.0, 0.0, 0.05, 0.2]),
                               latency=dict(rng.choice(LATENCIES)))
        cfg.adversary = adv.random_assignment(n, cfg.committee_size(), cfg.f, cfg.seed, rng)
        sim = Simulation(cfg)
        try:
            m, _ = sim.run()
        except SafetyViolation:
            aborts += 1
            continue
        chains = [sim.replicas[r].chain.digests() for r in sim.correct]
        if not _prefix_consistent(chains):
            conflicts += 1
        if m.committed_blocks < cfg.epochs:
            stalled += 1
    elapsed = time.perf_counter() - t0
    ok = conflicts == 0 and aborts == 0 and elapsed < 300
    record(4, ok, f"1000 runs, {conflicts} conflicting chains, {aborts} SafetyViolation aborts, "
                  f"{stalled} stalled, {elapsed:.1f}s")
    assert conflicts == 0 and aborts == 0
    assert elapsed < 300


# 5

SCENARIOS = {
    "silent-primary": lambda n, c, f, seed: adv.silent_primary_scenario(n, c, seed),
    "equivocating-primary": adv.equivocation_scenario,
    "withhold-votes": adv.withhold_scenario,
}


def _view_change_run_ok(name: str, k: int) -> str | None:
    """Run one scenario; return None on success or a short failure reason."""
    n = (7, 10, 13, 19)[k % 4]
    cfg = SimulationConfig(n=n, epochs=3, seed=f"{name}-{k}".encode())
    cfg.adversary = SCENARIOS[name](n, cfg.committee_size(), cfg.f, cfg.seed)
    if not cfg.adversary:
        return "empty adversary"
    sim = Simulation(cfg)
    m, _ = sim.run()
    if not m.view_change_records:
        return "no view change"
    first = m.view_change_records[0]
    if first["trigger_arm"] is None or first["done"] is None:
        return "view change incomplete"
    if first["start"] - first["trigger_arm"] > cfg.epoch_timeout() + cfg.stage_bound():
        return "view change late"
    exports = {repr(sim.replicas[r].chain.export()) for r in sim.correct}
    if len(exports) != 1:
        return "chains differ"
    chain = sim.replicas[sim.correct[0]].chain
    if not any(b.view >= first["view"] for b in chain.blocks[1:]):
        return "no commit after view change"
    if m.committed_blocks != cfg.epochs:
        return "stalled"
    return None


def test_5_view_change_scenarios():
    failures: dict = {}
    for name in SCENARIOS:
        for k in range(100):
            reason = _view_change_run_ok(name, k)
            if reason:
                failures.setdefault(name, []).append((k, reason))
    bad = sum(len(v) for v in failures.values())
    summary = ", ".join(f"{name} {100 - len(failures.get(name, []))}/100" for name in SCENARIOS)
    record(5, bad == 0, f"{summary} (timely trigger, identical chains, next epoch commits)")
    assert not failures, failures


# 6 and 7 share the failure-free runs

@lru_cache(maxsize=None)
def failure_free(protocol: str, n: int):
    c = SIZE_TABLE[n] if protocol == "proteus" else None
    m, _ = run_simulation(SimulationConfig(n=n, c=c, epochs=3, seed=b"baseline",
                                           protocol=protocol))
    assert m.committed_blocks == 3 and m.view_changes == 0
    return m


def test_6_message_complexity():
    pts = [(n, c, failure_free("proteus", n).per_epoch_messages()) for n, c in SIZE_TABLE.items()]
    X = np.array([[c * c, c * n] for n, c, _ in pts], dtype=float)
    y = np.array([v for _, _, v in pts], dtype=float)
    (a, b), *_ = np.linalg.lstsq(X, y, rcond=None)
    residual = float(np.max(np.abs(X @ np.array([a, b]) - y) / y))
    costs = []
    for n in (7, 13):
        cfg = SimulationConfig(n=n, epochs=2, seed=b"vc-cost", latency=FIXED)
        cfg.adversary = adv.silent_primary_scenario(n, cfg.committee_size(), cfg.seed)
        m, _ = run_simulation(cfg)
        assert m.view_changes == 1
        costs.append((n, m.c, count_messages(m, "view-change")))
    vc_ok = all(cost <= 4 * c * n + c * c for n, c, cost in costs)
    ok = a <= 4 and b <= 4 and residual < 0.05 and vc_ok
    vc_text = ", ".join(f"n={n} c={c}: {cost} <= {4 * c * n + c * c}" for n, c, cost in costs)
    record(6, ok, f"fit a={a:.3f} b={b:.3f} max residual {residual:.2%}; view change {vc_text}")
    assert a <= 4 and b <= 4
    assert residual < 0.05
    assert vc_ok


def test_7_pbft_comparison():
    ns = sorted(SIZE_TABLE)
    prot = [failure_free("proteus", n) for n in ns]
    pbft = [failure_free("pbft", n) for n in ns]
    fewer = all(p.per_epoch_messages() < q.per_epoch_messages() for p, q in zip(prot, pbft))
    ratio = prot[-1].per_epoch_messages() / pbft[-1].per_epoch_messages()
    slope_p = float(np.polyfit(ns, [m.median_latency() for m in prot], 1)[0])
    slope_q = float(np.polyfit(ns, [m.median_latency() for m in pbft], 1)[0])
    ok = fewer and ratio < 0.35 and slope_p < slope_q
    record(7, ok, f"fewer messages at every n: {fewer}; ratio at n=200 {ratio:.3f}; "
                  f"latency slope {slope_p:.3f} vs {slope_q:.3f} ticks/replica")
    assert fewer
    assert ratio < 0.35
    assert slope_p < slope_q


# 8

def _determinism_configs():
    yield SimulationConfig(n=7, epochs=4, seed=b"det-honest", trace=True)
    cfg = SimulationConfig(n=10, epochs=3, seed=b"det-silent", trace=True, drop_rate=0.1,
                           latency={"kind": "lognormal", "mu": 2.0, "sigma": 0.6})
    cfg.adversary = adv.silent_primary_scenario(10, cfg.committee_size(), cfg.seed)
    yield cfg
    cfg = SimulationConfig(n=13, epochs=3, seed=b"det-equiv", trace=True)
    cfg.adversary = adv.equivocation_scenario(13, cfg.committee_size(), cfg.f, cfg.seed)
    yield cfg
    yield SimulationConfig(n=10, epochs=3, seed=b"det-pbft", trace=True, protocol="pbft")
    yield SimulationConfig(n=7, epochs=3, seed=b"det-ed", trace=True, auth="ed25519")


def test_8_determinism():
    diverged = []
    total = 0
    for cfg in _determinism_configs():
        total += 1
        m1, t1 = run_simulation(cfg)
        m2, t2 = run_simulation(SimulationConfig.from_dict(cfg.to_dict()))
        if trace_lines(t1) != trace_lines(t2) or m1.to_json() != m2.to_json():
            diverged.append(cfg.seed)
    record(8, not diverged, f"{total - len(diverged)}/{total} configs replay byte-identically")
    assert not diverged


# 9

def test_9_critical_path_constant():
    paths = {}
    for label, latency in (("constant", FIXED), ("default", None)):
        for n in (7, 31):
            kw = {"latency": latency} if latency else {}
            m, _ = run_simulation(SimulationConfig(n=n, epochs=5, seed=b"path", **kw))
            paths[(label, n)] = sorted(set(m.critical_path.values()))
    ok = all(p == [6] for p in paths.values())
    record(9, ok, ", ".join(f"n={n} {label} latency: stages {p}" for (label, n), p in paths.items()))
    assert ok
