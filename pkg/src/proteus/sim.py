"""
Deterministic discrete-event simulator.

Time is counted in integer ticks. Every unicast message draws a latency from
the configured model; on arrival it joins the receiver's processing queue,
which serves one remote message per ``proc_ticks``. Self-addressed messages
are delivered at once at no cost. Dropped messages are resent after a
retransmission delay, so every message between correct replicas is
eventually delivered.

All randomness comes from ``random.Random`` instances seeded from the run
seed, and events are ordered by ``(tick, insertion counter)``, so a config
and seed fully determine the trace.
"""

from __future__ import annotations

import hashlib
import heapq
import json
import math
import random
from dataclasses import dataclass, field
from statistics import NormalDist, median

from . import adversary as adv
from .committee import DEFAULT_PF_TARGET, min_committee_size
from .core import (
    APPROVAL, BLOCK_PROPOSAL, COMMIT, CONFIRM, HISTORY_QUORUM, MALICIOUSNESS_PROOF, PRE_PREPARE,
    PREPARE, READY, READY_QUORUM, SYNC_REQUEST, SYNC_RESPONSE, TIMEOUT_COMPLAINT, TIMEOUT_FAILURE,
    VIEW_CHANGE, default_f,
)
from .crypto import SCHEMES
from .pbft import PbftReplica
from .replica import Deliver, ProtocolParams, Replica, Start, Timer, committee_for

SCHEMA_VERSION = 1

PHASE_OF = {
    PRE_PREPARE: "committee", PREPARE: "committee", COMMIT: "committee",
    TIMEOUT_FAILURE: "committee",
    BLOCK_PROPOSAL: "cross", APPROVAL: "cross", CONFIRM: "cross",
    VIEW_CHANGE: "view-change", HISTORY_QUORUM: "view-change", READY: "view-change",
    READY_QUORUM: "view-change",
    TIMEOUT_COMPLAINT: "detection", MALICIOUSNESS_PROOF: "detection",
    SYNC_REQUEST: "sync", SYNC_RESPONSE: "sync",
}
PHASES = ("committee", "cross", "view-change", "detection", "sync")
VC_TRACE_TAGS = ("vc-start", "vc-q", "vc-ready", "vc-p", "vc-done")


class ConfigInvalid(ValueError):
    pass


class SafetyViolation(RuntimeError):
    """Two correct replicas committed different blocks at one sequence number."""


# -- configuration --------------------------------------------------------------

@dataclass
class SimulationConfig:
    n: int = 7
    c: int | None = None
    f: int | None = None
    block_size: int = 1
    epochs: int = 10
    seed: bytes = b"seed"
    latency: dict = field(default_factory=lambda: {"kind": "uniform", "lo": 5, "hi": 15})
    drop_rate: float = 0.0
    proc_ticks: int = 1
    adversary: dict = field(default_factory=dict)  # replica id -> AdversaryStrategy
    epoch_timeout_mult: float = 2.0
    block_timeout_mult: float = 2.0
    protocol: str = "proteus"
    auth: str = "hmac-sha256"
    pf_target: float = DEFAULT_PF_TARGET
    max_ticks: int | None = None
    trace: bool = False

    def __post_init__(self):
        if isinstance(self.seed, str):
            self.seed = self.seed.encode()
        if self.f is None and isinstance(self.n, int):
            self.f = default_f(self.n)

    # derived quantities ---------------------------------------------------

    def committee_size(self) -> int:
        if self.protocol == "pbft":
            return self.n
        if self.c is not None:
            return self.c
        return min_committee_size(self.n, self.f, self.pf_target)

    def latency_quantile(self, q: float = 0.99) -> int:
        lat = self.latency
        if lat["kind"] == "uniform":
            return math.ceil(lat["lo"] + q * (lat["hi"] - lat["lo"]))
        z = NormalDist().inv_cdf(q)
        return math.ceil(math.exp(lat["mu"] + z * lat["sigma"]))

    def stage_bound(self) -> int:
        """Upper bound on one message stage: tail latency plus a full receive queue."""
        return self.latency_quantile() + self.n * self.proc_ticks

    def epoch_timeout(self) -> int:
        return math.ceil(self.epoch_timeout_mult * 6 * self.stage_bound())

    def lock_wait(self) -> int:
        # long enough for a confirm already in flight plus one sync round trip
        return 3 * self.stage_bound()

    def block_timeout(self) -> int:
        return math.ceil(self.block_timeout_mult * 3 * self.stage_bound())

    def tick_budget(self) -> int:
        if self.max_ticks is not None:
            return self.max_ticks
        return (self.epochs + 4 * (len(self.adversary) + 1)) * 4 * self.epoch_timeout()

    def validate(self) -> None:
        if not isinstance(self.n, int) or self.n < 1:
            raise ConfigInvalid("n must be a positive integer")
        if not isinstance(self.f, int) or not 0 <= self.f or 3 * self.f >= self.n and self.n > 1:
            raise ConfigInvalid(f"f={self.f} needs 0 <= 3f < n")
        if self.protocol not in ("proteus", "pbft"):
            raise ConfigInvalid(f"unknown protocol {self.protocol!r}")
        try:
            c = self.committee_size()
        except ValueError as exc:
            raise ConfigInvalid(str(exc)) from exc
        if not 1 <= c <= self.n:
            raise ConfigInvalid(f"c={c} must lie in [1, n={self.n}]")
        if not 0 <= self.drop_rate < 1:
            raise ConfigInvalid("drop_rate must lie in [0, 1)")
        if self.block_size < 0 or self.epochs < 0 or self.proc_ticks < 0:
            raise ConfigInvalid("block_size, epochs and proc_ticks must be non-negative")
        kind = self.latency.get("kind")
        if kind == "uniform":
            if not 0 <= self.latency.get("lo", -1) <= self.latency.get("hi", -1):
                raise ConfigInvalid("uniform latency needs 0 <= lo <= hi")
        elif kind == "lognormal":
            if "mu" not in self.latency or self.latency.get("sigma", -1) < 0:
                raise ConfigInvalid("lognormal latency needs mu and sigma >= 0")
        else:
            raise ConfigInvalid(f"unknown latency model {kind!r}")
        if self.auth not in SCHEMES:
            raise ConfigInvalid(f"unknown auth scheme {self.auth!r}")
        byz = [r for r, s in self.adversary.items() if s.byzantine]
        if any(not 0 <= r < self.n for r in self.adversary):
            raise ConfigInvalid("adversary assignment names an unknown replica")
        if len(byz) > self.f:
            raise ConfigInvalid(f"{len(byz)} Byzantine replicas exceed f={self.f}")
        if byz and self.protocol == "pbft":
            raise ConfigInvalid("the PBFT baseline runs failure-free only")

    # serialization --------------------------------------------------------

    @classmethod
    def from_dict(cls, data: dict) -> "SimulationConfig":
        data = dict(data)
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigInvalid(f"unknown config fields: {sorted(unknown)}")
        entries = data.pop("adversary", ())
        try:
            cfg = cls(**data)
        except TypeError as exc:
            raise ConfigInvalid(str(exc)) from exc
        if any(e.get("replica") == "primary" for e in entries or ()):
            # "primary" names whoever leads the first committee under this seed
            cfg.validate()
            lead = committee_for(cfg.seed, 0, cfg.n, cfg.committee_size()).primary
            entries = [dict(e, replica=lead) if e.get("replica") == "primary" else e
                       for e in entries]
        try:
            cfg.adversary = adv.parse_assignments(entries)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigInvalid(f"bad adversary assignment: {exc}") from exc
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        out = {k: getattr(self, k) for k in self.__dataclass_fields__}
        out["seed"] = self.seed.decode(errors="replace")
        out["adversary"] = [dict(replica=r, **s.to_json()) for r, s in sorted(self.adversary.items())]
        return out


# -- workload -------------------------------------------------------------------

class Mempool:
    """Client transactions shared by every replica.

    Transactions are numbered by the sequence slot they were submitted for.
    A block that is discarded by a view change leaves its slot uncommitted,
    so the next primary to reach that slot re-proposes the same transactions.
    """

    def __init__(self, block_size: int, seed: bytes):
        self.block_size = block_size
        self.seed = seed
        self._cache: dict = {}

    def take(self, view: int, seq: int) -> tuple:
        txs = self._cache.get(seq)
        if txs is None:
            base = hashlib.sha256(b"tx|" + self.seed + b"|" + str(seq).encode()).digest()
            txs = tuple(base[:8] + k.to_bytes(8, "big") for k in range(self.block_size))
            self._cache[seq] = txs
        return txs

    def requeue(self, seq: int) -> None:
        """Nothing to do: the slot's transactions stay available until it commits."""


# -- metrics --------------------------------------------------------------------

@dataclass
class RunMetrics:
    protocol: str
    n: int
    c: int
    f: int
    block_size: int
    epochs: int
    ticks: int = 0
    messages_by_kind: dict = field(default_factory=dict)
    messages_by_phase: dict = field(default_factory=dict)
    self_messages: int = 0
    retransmissions: int = 0
    bytes_sent: int = 0
    epoch_latency: dict = field(default_factory=dict)  # seq -> ticks
    critical_path: dict = field(default_factory=dict)  # seq -> max stages over correct replicas
    committed_blocks: int = 0
    committed_tx: int = 0
    view_changes: int = 0
    view_change_records: list = field(default_factory=list)
    tips: dict = field(default_factory=dict)
    timeouts: dict = field(default_factory=dict)

    @property
    def messages_total(self) -> int:
        return sum(self.messages_by_kind.values())

    def normal_messages(self) -> int:
        return self.messages_by_phase.get("committee", 0) + self.messages_by_phase.get("cross", 0)

    def per_epoch_messages(self) -> float:
        return self.normal_messages() / self.committed_blocks if self.committed_blocks else 0.0

    def median_latency(self) -> float:
        vals = list(self.epoch_latency.values())
        return float(median(vals)) if vals else float("nan")

    def throughput(self, per_ticks: int = 10_000) -> float:
        return self.committed_tx * per_ticks / self.ticks if self.ticks else 0.0

    def to_json(self) -> dict:
        return {
            "schema": SCHEMA_VERSION,
            "protocol": self.protocol, "n": self.n, "c": self.c, "f": self.f,
            "block_size": self.block_size, "epochs": self.epochs, "ticks": self.ticks,
            "messages_total": self.messages_total,
            "messages_by_kind": dict(sorted(self.messages_by_kind.items())),
            "messages_by_phase": dict(sorted(self.messages_by_phase.items())),
            "self_messages": self.self_messages, "retransmissions": self.retransmissions,
            "bytes_sent": self.bytes_sent,
            "per_epoch_messages": self.per_epoch_messages(),
            "epoch_latency": {str(k): v for k, v in sorted(self.epoch_latency.items())},
            "median_latency": self.median_latency(),
            "critical_path": {str(k): v for k, v in sorted(self.critical_path.items())},
            "committed_blocks": self.committed_blocks, "committed_tx": self.committed_tx,
            "throughput_per_10k_ticks": self.throughput(),
            "view_changes": self.view_changes,
            "view_change_records": self.view_change_records,
            "tips": {str(k): v for k, v in sorted(self.tips.items())},
            "timeouts": self.timeouts,
        }


def count_messages(metrics: RunMetrics, phase: str) -> int:
    """Messages sent in ``phase``; ``"normal"`` is committee plus cross, ``"all"`` everything."""
    if phase == "all":
        return metrics.messages_total
    if phase == "normal":
        return metrics.normal_messages()
    if phase not in PHASES:
        raise ValueError(f"unknown phase {phase!r}")
    return metrics.messages_by_phase.get(phase, 0)


# -- the simulator --------------------------------------------------------------

class _Network:
    def __init__(self, cfg: SimulationConfig):
        self.cfg = cfg
        self.rng = random.Random(int.from_bytes(
            hashlib.sha256(b"net|" + cfg.seed).digest(), "big"))
        lat = cfg.latency
        if lat["kind"] == "uniform":
            lo, hi = int(lat["lo"]), int(lat["hi"])
            self.sample = lambda: self.rng.randint(lo, hi)
        else:
            mu, sigma = float(lat["mu"]), float(lat["sigma"])
            self.sample = lambda: max(1, math.ceil(self.rng.lognormvariate(mu, sigma)))

    def dropped(self) -> bool:
        return self.cfg.drop_rate > 0 and self.rng.random() < self.cfg.drop_rate


class Simulation:
    """One run. Use ``run_simulation`` unless you need to poke at the internals."""

    def __init__(self, cfg: SimulationConfig):
        cfg.validate()
        self.cfg = cfg
        self.n, self.f = cfg.n, cfg.f
        self.c = cfg.committee_size()
        self.auth = SCHEMES[cfg.auth](cfg.n, cfg.seed)
        self.mempool = Mempool(cfg.block_size, cfg.seed)
        self.net = _Network(cfg)
        self.strategies = {r: s for r, s in cfg.adversary.items() if s.byzantine}
        self.correct = [r for r in range(cfg.n) if r not in self.strategies]
        if cfg.protocol == "pbft":
            self.replicas = [PbftReplica(r, cfg.n, cfg.f, self.auth, cfg.epochs, self.mempool)
                             for r in range(cfg.n)]
        else:
            params = ProtocolParams(cfg.n, cfg.f, self.c, cfg.seed, cfg.epochs,
                                    cfg.epoch_timeout(), cfg.block_timeout(), cfg.lock_wait())
            self.replicas = [Replica(r, params, self.auth, self.mempool) for r in range(cfg.n)]
        self.heap: list = []
        self.counter = 0
        self.now = 0
        self.busy = [0] * cfg.n
        self.timers: dict = {}
        self.timer_gen = 0
        self.depth_seen: dict = {}  # (replica, seq) -> deepest stage received
        self.canonical: dict = {}  # seq -> digest committed by the first correct replica
        self.commit_ticks: dict = {}  # seq -> {replica: tick}
        self.commit_depths: dict = {}
        self.propose_tick: dict = {}  # digest -> first pre-prepare tick
        self.last_arm: dict = {}  # (replica, view) -> tick of latest epoch-timer arm
        self.vc_ticks: dict = {}  # (tag, view) -> {replica: tick}
        self.trace: list = []
        self.metrics = RunMetrics(cfg.protocol, cfg.n, self.c, cfg.f, cfg.block_size, cfg.epochs)
        self.metrics.messages_by_kind = {}
        self.metrics.messages_by_phase = {p: 0 for p in PHASES}
        self.metrics.timeouts = {"stage_bound": cfg.stage_bound(),
                                 "epoch_timeout": cfg.epoch_timeout(),
                                 "block_timeout": cfg.block_timeout()}

    # queue helpers --------------------------------------------------------

    def _push(self, tick: int, etype: int, dest: int, payload) -> None:
        self.counter += 1
        heapq.heappush(self.heap, (tick, self.counter, etype, dest, payload))

    # event kinds: 0 start, 1 timer, 2 arrival (joins the queue), 3 handle
    def _send(self, src: int, ob, depth: int) -> None:
        msg = ob.msg
        phase = PHASE_OF.get(msg.kind, "committee")
        for dest in ob.dests:
            if dest == src:
                self.metrics.self_messages += 1
                self._push(self.now + ob.delay, 3, dest, (msg, depth))
                continue
            self.metrics.messages_by_kind[msg.kind] = self.metrics.messages_by_kind.get(msg.kind, 0) + 1
            self.metrics.messages_by_phase[phase] += 1
            self.metrics.bytes_sent += msg.nbytes
            tick = self.now + ob.delay
            while self.net.dropped():
                self.metrics.retransmissions += 1
                tick += self.cfg.stage_bound()
            self._push(tick + self.net.sample(), 2, dest, (msg, depth + 1))

    def _apply(self, rid: int, out, trigger_depth: int, trigger_seq, event_kind: str) -> None:
        replica = self.replicas[rid]
        strategy = self.strategies.get(rid)
        if strategy is not None:
            out = adv.apply_strategy(strategy, replica, self._last_event, out, tick=self.now)
        for tid in out.timer_cancels:
            self.timers.pop((rid, tid), None)
        for tid, duration in out.timer_sets:
            self.timer_gen += 1
            self.timers[(rid, tid)] = self.timer_gen
            self._push(self.now + duration, 1, rid, (tid, self.timer_gen))
            if tid[0] == "epoch":
                self.last_arm[(rid, tid[1])] = self.now
        n_out = 0
        for ob in out.messages:
            msg = ob.msg
            if msg.kind == PRE_PREPARE:
                depth = 0
                self.propose_tick.setdefault(msg.digest, self.now + ob.delay)
            elif msg.seq == trigger_seq or self.depth_seen.get((rid, msg.seq)) is None:
                depth = trigger_depth
            else:
                depth = self.depth_seen[(rid, msg.seq)]
            self._send(rid, ob, depth)
            n_out += len(ob.dests)
        committed = []
        for block, _cert in out.committed:
            committed.append(block.seq)
            if rid in self.strategies:
                continue
            digest = self.canonical.setdefault(block.seq, block.digest)
            if digest != block.digest:
                raise SafetyViolation(
                    f"replica {rid} committed a conflicting block at seq {block.seq}")
            self.commit_ticks.setdefault(block.seq, {})[rid] = self.now
            depth = trigger_depth if block.seq == trigger_seq else self.depth_seen.get(
                (rid, block.seq), trigger_depth)
            self.commit_depths.setdefault(block.seq, {})[rid] = depth
        for note in out.notes:
            tag, _, rest = note.partition(":")
            if tag in VC_TRACE_TAGS and rid not in self.strategies:
                view = int(rest.split(":")[0][1:])
                self.vc_ticks.setdefault((tag, view), {}).setdefault(rid, self.now)
                if self.cfg.trace:
                    self.trace.append({"tick": self.now, "replica": rid, "event_kind": tag,
                                       "view": view})
        if self.cfg.trace:
            self.trace.append({"tick": self.now, "replica": rid, "event_kind": event_kind,
                               "msgs_out": n_out, "committed": committed, "notes": out.notes})

    def _step(self, rid: int, event, depth: int, seq, event_kind: str) -> None:
        self._last_event = event
        out = self.replicas[rid].step(event)
        self._apply(rid, out, depth, seq, event_kind)

    def _run_until_done(self) -> None:
        budget = self.cfg.tick_budget()
        target = self.cfg.epochs
        for rid in range(self.n):
            self._push(0, 0, rid, None)
        while self.heap:
            if all(self.replicas[r].tip.seq >= target for r in self.correct):
                break
            tick, _, etype, rid, payload = heapq.heappop(self.heap)
            if tick > budget:
                break
            self.now = tick
            if etype == 0:
                self._step(rid, Start(), 0, None, "start")
            elif etype == 1:
                tid, gen = payload
                if self.timers.get((rid, tid)) != gen:
                    continue
                del self.timers[(rid, tid)]
                self._step(rid, Timer(tid), 0, None, f"timer:{tid[0]}")
            elif etype == 2:
                start = max(tick, self.busy[rid])
                self.busy[rid] = start + self.cfg.proc_ticks
                if self.cfg.proc_ticks:
                    self._push(self.busy[rid], 3, rid, payload)
                else:
                    self._handle(rid, payload)
            else:
                self._handle(rid, payload)

    def _handle(self, rid: int, payload) -> None:
        msg, depth = payload
        key = (rid, msg.seq)
        if depth > self.depth_seen.get(key, -1):
            self.depth_seen[key] = depth
        self._step(rid, Deliver(msg), depth, msg.seq, f"deliver:{msg.kind}")

    # results --------------------------------------------------------------

    def _finish(self) -> RunMetrics:
        m = self.metrics
        m.ticks = self.now
        m.committed_blocks = min(self.replicas[r].tip.seq for r in self.correct)
        m.committed_tx = sum(len(self.replicas[self.correct[0]].chain.blocks[s].payload)
                             for s in range(1, m.committed_blocks + 1))
        correct = set(self.correct)
        for seq in range(1, m.committed_blocks + 1):
            ticks = self.commit_ticks.get(seq, {})
            digest = self.canonical[seq]
            if digest in self.propose_tick and correct <= set(ticks):
                m.epoch_latency[seq] = max(ticks.values()) - self.propose_tick[digest]
            depths = self.commit_depths.get(seq, {})
            if depths:
                m.critical_path[seq] = max(depths.values())
        m.tips = {r: [rep.tip.seq, rep.tip.digest.hex()] for r, rep in enumerate(self.replicas)}
        done_views = sorted(v for (tag, v) in self.vc_ticks if tag == "vc-done")
        m.view_changes = len(done_views)
        for v in sorted(v for (tag, v) in self.vc_ticks if tag == "vc-start"):
            starts = self.vc_ticks[("vc-start", v)]
            arms = sorted(t for (r, view), t in self.last_arm.items()
                          if view == v - 1 and r in correct)
            done = self.vc_ticks.get(("vc-done", v), {})
            rec = {"view": v, "start": min(starts.values()),
                   "done": max(done.values()) if correct <= set(done) else None,
                   "trigger_arm": arms[self.f] if len(arms) > self.f else None}
            m.view_change_records.append(rec)
        return m

    def run(self):
        self._last_event = None
        self._run_until_done()
        return self._finish(), self.trace


def run_simulation(config: SimulationConfig):
    """Run to completion; returns ``(RunMetrics, trace)`` where trace is a list of dicts."""
    return Simulation(config).run()


def trace_lines(trace) -> str:
    return "".join(json.dumps(rec, sort_keys=True, separators=(",", ":")) + "\n" for rec in trace)


def compare_with_pbft(config: SimulationConfig) -> dict:
    """Run Proteus and PBFT on the same config and seed; report per-epoch costs side by side."""
    from dataclasses import replace

    prot, _ = run_simulation(replace(config, protocol="proteus", adversary={}))
    pbft, _ = run_simulation(replace(config, protocol="pbft", adversary={}, c=None))
    return {
        "n": config.n, "c": prot.c, "seed": config.seed.decode(errors="replace"),
        "proteus_messages_per_epoch": prot.per_epoch_messages(),
        "pbft_messages_per_epoch": pbft.per_epoch_messages(),
        "message_ratio": prot.per_epoch_messages() / pbft.per_epoch_messages(),
        "proteus_median_latency": prot.median_latency(),
        "pbft_median_latency": pbft.median_latency(),
    }
