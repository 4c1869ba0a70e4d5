"""
Byzantine behaviours as wrappers around the honest step function.

A strategy sees the replica, the event it just processed and the honest
output, and returns the output the replica actually emits. It may drop,
delay, duplicate or replace the replica's own messages, and sign new ones
with the replica's own key. Anything carrying another sender id raises
``ForbiddenForgery``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .core import (
    APPROVAL, BLOCK_PROPOSAL, COMMIT, MALICIOUSNESS_PROOF, PRE_PREPARE, PREPARE, VIEW_CHANGE,
    Block, root_threshold,
)
from .replica import Deliver, Outbound, StepOutput, committee_for

HONEST = "honest"
CRASH = "crash"
SILENT_PRIMARY = "silent-primary"
EQUIVOCATING_PRIMARY = "equivocating-primary"
WITHHOLD_VOTES = "withhold-votes"
CONFLICTING_HISTORY = "conflicting-history"
DELAY_ALL = "delay-all"

STRATEGY_KINDS = (HONEST, CRASH, SILENT_PRIMARY, EQUIVOCATING_PRIMARY, WITHHOLD_VOTES,
                  CONFLICTING_HISTORY, DELAY_ALL)


class ForbiddenForgery(RuntimeError):
    """A strategy produced a message under someone else's id."""


@dataclass(frozen=True)
class AdversaryStrategy:
    kind: str = HONEST
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in STRATEGY_KINDS:
            raise ValueError(f"unknown strategy {self.kind!r}")

    @property
    def byzantine(self) -> bool:
        return self.kind != HONEST

    def to_json(self) -> dict:
        return {"strategy": self.kind, "params": dict(self.params)}


def _without(out: StepOutput, kinds) -> StepOutput:
    out.messages = [m for m in out.messages if m.msg.kind not in kinds]
    return out


def _equivocate(state, out: StepOutput, strategy: AdversaryStrategy) -> StepOutput:
    colluders = set(strategy.params.get("colluders", ()))
    members = state.committee.members
    split = strategy.params.get("partition")
    if split is None:
        half_a = {m for k, m in enumerate(members) if k % 2 == 0}
    else:
        half_a = set(split)
    half_b = set(members) - half_a
    kept = []
    for ob in out.messages:
        msg = ob.msg
        if msg.kind != PRE_PREPARE or not isinstance(msg.body, Block):
            kept.append(ob)
            continue
        block = msg.body
        twin = Block.make(block.view, block.seq, tuple(block.payload) + (b"equivocation",),
                          block.prev)
        twin_msg = state.sign(PRE_PREPARE, msg.view, msg.seq, twin.digest, twin)
        # the primary itself only ever sees block A so its own state stays consistent
        kept.append(Outbound(tuple(sorted(half_a | colluders)), msg, ob.delay))
        dests_b = tuple(sorted((half_b | colluders) - {state.id}))
        if dests_b:
            kept.append(Outbound(dests_b, twin_msg, ob.delay))
    out.messages = kept
    return out


def _collude(state, event, out: StepOutput) -> StepOutput:
    """Non-primary accomplice: vote for every digest the primary pre-prepares."""
    out = _without(out, {PREPARE, COMMIT, MALICIOUSNESS_PROOF})
    if isinstance(event, Deliver) and event.msg.kind == PRE_PREPARE:
        msg = event.msg
        sel = committee_for(state.params.seed, msg.view, state.params.n, state.params.c)
        if msg.sender == sel.primary and state.id in sel:
            for kind in (PREPARE, COMMIT):
                vote = state.sign(kind, msg.view, msg.seq, msg.digest)
                out.messages.append(Outbound(sel.members, vote))
    return out


def _stale_history(state, out: StepOutput, strategy: AdversaryStrategy) -> StepOutput:
    lag = int(strategy.params.get("lag", 1))
    k = max(0, state.tip.seq - lag)
    block, cert = state.chain.blocks[k], state.chain.certs[k]
    kept = []
    for ob in out.messages:
        if ob.msg.kind == VIEW_CHANGE:
            stale = state.sign(VIEW_CHANGE, ob.msg.view, block.seq, block.digest, cert)
            kept.append(Outbound(ob.dests, stale, ob.delay))
        else:
            kept.append(ob)
    out.messages = kept
    return out


def apply_strategy(strategy: AdversaryStrategy, state, event, honest_output: StepOutput,
                   tick: int = 0) -> StepOutput:
    """Rewrite ``honest_output`` according to ``strategy``."""
    kind = strategy.kind
    out = honest_output
    if kind == HONEST:
        pass
    elif kind == CRASH:
        if tick >= int(strategy.params.get("at", 0)):
            out = StepOutput()
    elif kind == SILENT_PRIMARY:
        out = _without(out, {PRE_PREPARE, BLOCK_PROPOSAL})
    elif kind == WITHHOLD_VOTES:
        out = _without(out, {PREPARE, COMMIT, APPROVAL})
    elif kind == EQUIVOCATING_PRIMARY:
        out = _without(out, {MALICIOUSNESS_PROOF})
        if state.is_primary:
            out = _equivocate(state, out, strategy)
        else:
            out = _collude(state, event, out)
    elif kind == CONFLICTING_HISTORY:
        out = _stale_history(state, out, strategy)
    elif kind == DELAY_ALL:
        delay = int(strategy.params.get("delay", 0))
        for ob in out.messages:
            ob.delay += delay
    for ob in out.messages:
        if ob.msg.sender != state.id:
            raise ForbiddenForgery(f"replica {state.id} emitted a message signed by {ob.msg.sender}")
    return out


# -- scenario builders ----------------------------------------------------------

def parse_assignments(entries) -> dict:
    """``[{"replica": 0, "strategy": "crash", "params": {...}}, ...]`` -> {id: strategy}."""
    out = {}
    for e in entries or ():
        rid = int(e["replica"])
        if rid in out:
            raise ValueError(f"replica {rid} assigned twice")
        out[rid] = AdversaryStrategy(e.get("strategy", HONEST), dict(e.get("params", {})))
    return out


def silent_primary_scenario(n: int, c: int, seed: bytes, view: int = 0) -> dict:
    sel = committee_for(seed, view, n, c)
    return {sel.primary: AdversaryStrategy(SILENT_PRIMARY)}


def equivocation_scenario(n: int, c: int, f: int, seed: bytes, view: int = 0) -> dict:
    """Primary plus enough colluders for both conflicting blocks to gather a root quorum."""
    sel = committee_for(seed, view, n, c)
    want = root_threshold(c) - 1  # colluders + primary; one honest member completes each half
    others = [m for m in sel.members if m != sel.primary]
    colluders = others[: max(0, min(want, f) - 1)]
    params = {"colluders": colluders}
    plan = {sel.primary: AdversaryStrategy(EQUIVOCATING_PRIMARY, params)}
    for m in colluders:
        plan[m] = AdversaryStrategy(EQUIVOCATING_PRIMARY, params)
    return plan


def withhold_scenario(n: int, c: int, f: int, seed: bytes, view: int = 0) -> dict:
    """More withholders than the root quorum can tolerate, primary excluded."""
    sel = committee_for(seed, view, n, c)
    count = min(c - root_threshold(c) + 1, f)
    others = [m for m in sel.members if m != sel.primary]
    return {m: AdversaryStrategy(WITHHOLD_VOTES) for m in others[:count]}


def random_assignment(n: int, c: int, f: int, seed: bytes, rng) -> dict:
    """Draw up to ``f`` Byzantine replicas, biased towards the first committee, with random
    strategies from the whole catalog. ``rng`` is a seeded ``random.Random``."""
    if f == 0:
        return {}
    count = rng.randint(0, f)
    sel = committee_for(seed, 0, n, c)
    pool = list(sel.members) + [r for r in range(n) if r not in sel]
    weights = [3 if r in sel else 1 for r in pool]
    chosen: list = []
    while len(chosen) < count:
        r = rng.choices(pool, weights)[0]
        if r not in chosen:
            chosen.append(r)
    kinds = [k for k in STRATEGY_KINDS if k != HONEST]
    plan = {}
    for r in chosen:
        kind = rng.choice(kinds)
        params: dict = {}
        if kind == CRASH:
            params = {"at": rng.randint(0, 400)}
        elif kind == DELAY_ALL:
            params = {"delay": rng.randint(1, 60)}
        elif kind == CONFLICTING_HISTORY:
            params = {"lag": rng.randint(1, 3)}
        plan[r] = AdversaryStrategy(kind, params)
    equivocators = sorted(r for r, s in plan.items() if s.kind == EQUIVOCATING_PRIMARY)
    for r in equivocators:
        plan[r] = AdversaryStrategy(EQUIVOCATING_PRIMARY, {"colluders": equivocators})
    return plan
