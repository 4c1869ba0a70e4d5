"""
Normal-mode replica state machine.

A replica is driven by ``step(event)`` and answers with a ``StepOutput``
listing outbound messages, timer actions and commits. Identical
(state, event) pairs always produce identical outputs: there is no clock or
randomness inside a replica. The harness owns time and delivery.

Root committee members run three roles at once: the customized BFT among
the committee (pre-prepare, prepare, commit), the committee duties towards
regular replicas (block broadcast, approval aggregation, confirm), and the
regular-replica path. A member's commit signature stands in for its
approval so that one signer counts once towards ``2f+1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

from . import core
from .committee import CommitteeSelection, select_committee
from .core import (
    APPROVAL, BLOCK_PROPOSAL, COMMIT, CONFIRM, EXCLUSIVE_KINDS, GLOBAL, MALICIOUSNESS_PROOF,
    PRE_PREPARE, PREPARE, ROOT, SYNC_REQUEST, SYNC_RESPONSE, TIMEOUT_COMPLAINT,
    TIMEOUT_FAILURE, ZERO_DIGEST, Block, Chain, QuorumCertificate, SignedMessage,
)
from .viewchange import VC_KINDS, ViewChangeMixin

NORMAL = "normal"
VIEW_CHANGE = "view-change"

NORMAL_KINDS = frozenset({PRE_PREPARE, PREPARE, COMMIT, BLOCK_PROPOSAL, APPROVAL,
                          CONFIRM, TIMEOUT_FAILURE})


class NotPrimary(core.ProtocolError):
    pass


class WrongMode(core.ProtocolError):
    pass


class InvalidProof(core.ProtocolError):
    pass


@dataclass(frozen=True)
class ProtocolParams:
    n: int
    f: int
    c: int
    seed: bytes
    max_seq: int
    epoch_timeout: int
    block_timeout: int
    lock_wait: int

    @property
    def root_quorum(self) -> int:
        return core.root_threshold(self.c)

    @property
    def global_quorum(self) -> int:
        return core.global_threshold(self.f)


@lru_cache(maxsize=4096)
def committee_for(seed: bytes, view: int, n: int, c: int) -> CommitteeSelection:
    return select_committee(seed, view, n, c)


# -- events and outputs ---------------------------------------------------------

@dataclass(frozen=True)
class Start:
    pass


@dataclass(frozen=True)
class Deliver:
    msg: SignedMessage


@dataclass(frozen=True)
class Timer:
    tid: tuple


@dataclass
class Outbound:
    dests: tuple
    msg: SignedMessage
    delay: int = 0


@dataclass
class StepOutput:
    messages: list = field(default_factory=list)
    timer_sets: list = field(default_factory=list)
    timer_cancels: list = field(default_factory=list)
    committed: list = field(default_factory=list)
    transition: Optional[SignedMessage] = None
    notes: list = field(default_factory=list)

    def send(self, dests, msg: SignedMessage) -> None:
        self.messages.append(Outbound(tuple(dests), msg))

    def extend(self, other: "StepOutput") -> None:
        self.messages.extend(other.messages)
        self.timer_sets.extend(other.timer_sets)
        self.timer_cancels.extend(other.timer_cancels)
        self.committed.extend(other.committed)
        self.notes.extend(other.notes)
        if other.transition is not None:
            self.transition = other.transition


@dataclass(frozen=True)
class ConflictPair:
    first: SignedMessage
    second: SignedMessage


@dataclass(frozen=True)
class ComplaintSet:
    complaints: tuple


def verify_proof(msg: SignedMessage, params: ProtocolParams, auth) -> Optional[int]:
    """View the proof convicts, or None when it does not verify."""
    body = msg.body
    if not isinstance(body, tuple) or len(body) < 2:
        return None
    tag = body[0]
    if tag == "conflict" and len(body) == 3:
        a, b = body[1], body[2]
        if not (isinstance(a, SignedMessage) and isinstance(b, SignedMessage)):
            return None
        if (a.kind != b.kind or a.kind not in EXCLUSIVE_KINDS or a.sender != b.sender
                or a.view != b.view or a.seq != b.seq or a.digest == b.digest):
            return None
        if not (auth.verify_message(a) and auth.verify_message(b)):
            return None
        return a.view if a.view == msg.view else None
    if tag == "complaints":
        complaints = body[1:]
        senders = set()
        for m in complaints:
            if (not isinstance(m, SignedMessage) or m.kind != TIMEOUT_COMPLAINT
                    or m.view != msg.view or m.sender in senders or not auth.verify_message(m)):
                return None
            senders.add(m.sender)
        return msg.view if len(senders) >= params.f + 1 else None
    return None


class Replica(ViewChangeMixin):
    """One replica's complete protocol state."""

    def __init__(self, replica_id: int, params: ProtocolParams, auth, mempool=None):
        self.id = replica_id
        self.params = params
        self.auth = auth
        self.signer = auth.signer_for(replica_id)
        self.mempool = mempool
        self.chain = Chain()
        self.view = 0
        self.mode = NORMAL
        self.base = 0  # agreed tip seq when the current view began
        self.committee = committee_for(params.seed, 0, params.n, params.c)
        self.buffer: list = []
        self.lock: Optional[tuple] = None  # (view, seq, digest) signed but not committed
        self.vote_log: list = []  # (kind, view, seq, digest) of own exclusive votes
        self._reset_view_state()
        self._reset_vc_state()

    # -- bookkeeping --------------------------------------------------------

    def _reset_view_state(self) -> None:
        self.signed_log: dict = {}
        self.known_blocks: dict = {}  # digest -> Block
        self.root_certs: dict = {}  # digest -> QuorumCertificate
        self.accepted_pp: dict = {}  # seq -> digest prepared
        self.prepares: dict = {}
        self.commits: dict = {}
        self.approvals: dict = {}
        self.sent_prepare: set = set()
        self.sent_commit: dict = {}
        self.sent_approval: dict = {}
        self.proposed: set = set()
        self.proposal_seen: dict = {}  # seq -> (digest, cert)
        self.confirm_sent: set = set()
        self.complaints: dict = {}  # view -> {sender: msg}
        self.complained: set = set()
        self.proof_sent: set = set()
        self.served_sync: set = set()
        self.failure_sent: set = set()
        self.sync_requested: set = set()

    @property
    def tip(self) -> Block:
        return self.chain.tip

    @property
    def is_member(self) -> bool:
        return self.id in self.committee

    @property
    def is_primary(self) -> bool:
        return self.id == self.committee.primary

    def members(self) -> tuple:
        return self.committee.members

    def everyone(self) -> range:
        return range(self.params.n)

    def others(self) -> tuple:
        return tuple(r for r in range(self.params.n) if r != self.id)

    def committee_of(self, view: int) -> CommitteeSelection:
        p = self.params
        return committee_for(p.seed, view, p.n, p.c)

    def sign(self, kind: str, view: int, seq: int, digest: bytes, body=None) -> SignedMessage:
        return self.signer.sign(kind, view, seq, digest, body)

    def _vote(self, kind: str, seq: int, digest: bytes) -> SignedMessage:
        self.vote_log.append((kind, self.view, seq, digest))
        return self.sign(kind, self.view, seq, digest)

    # -- entry point --------------------------------------------------------

    def step(self, event) -> StepOutput:
        out = StepOutput()
        if isinstance(event, Start):
            self._enter_normal(self.view, out)
        elif isinstance(event, Timer):
            self._on_timer(event.tid, out)
        elif isinstance(event, Deliver):
            self._dispatch(event.msg, out)
        else:
            raise TypeError(f"unknown event {event!r}")
        return out

    def _dispatch(self, msg: SignedMessage, out: StepOutput) -> None:
        if not self.auth.verify_message(msg):
            out.notes.append(f"bad-signature:{msg.kind}:{msg.sender}")
            return
        kind = msg.kind
        if kind in NORMAL_KINDS:
            if kind == CONFIRM:
                self.handle_confirm(msg, out)
                return
            if msg.view > self.view or (msg.view == self.view and self.mode != NORMAL):
                self.buffer.append(msg)
                return
            if msg.view < self.view:
                return
            handler = {
                PRE_PREPARE: self.handle_preprepare,
                PREPARE: self.handle_prepare,
                COMMIT: self.handle_commit,
                BLOCK_PROPOSAL: self.handle_block_proposal,
                APPROVAL: self.handle_approval,
                TIMEOUT_FAILURE: self.handle_timeoutfailure,
            }[kind]
            handler(msg, out)
        elif kind == TIMEOUT_COMPLAINT:
            self.handle_timeout_complaint(msg, out)
        elif kind == MALICIOUSNESS_PROOF:
            self.handle_maliciousness_proof(msg, out)
        elif kind in VC_KINDS:
            self.vc_dispatch(msg, out)
        elif kind == SYNC_REQUEST:
            self.handle_sync_request(msg, out)
        elif kind == SYNC_RESPONSE:
            self.handle_sync_response(msg, out)
        else:
            out.notes.append(f"unknown-kind:{kind}")

    def _replay_buffer(self, out: StepOutput) -> None:
        while self.buffer:
            pending, self.buffer = self.buffer, []
            tip_before, view_before, mode_before = self.tip.seq, self.view, self.mode
            for msg in pending:
                self._dispatch(msg, out)
            if (self.tip.seq, self.view, self.mode) == (tip_before, view_before, mode_before):
                break

    def _future(self, msg: SignedMessage) -> bool:
        """Buffer messages for later sequence numbers of the current view."""
        if msg.seq > self.tip.seq + 1:
            self.buffer.append(msg)
            return True
        return False

    # -- epochs -------------------------------------------------------------

    def _enter_normal(self, view: int, out: StepOutput) -> None:
        self.view = view
        self.mode = NORMAL
        self.base = self.tip.seq
        self.committee = self.committee_of(view)
        self._reset_view_state()
        self._begin_epoch(out)
        self._replay_buffer(out)

    def _begin_epoch(self, out: StepOutput) -> None:
        seq = self.tip.seq + 1
        if seq > self.params.max_seq:
            return
        out.timer_sets.append((("epoch", self.view, seq), self.params.epoch_timeout))
        if self.is_member:
            out.timer_sets.append((("block", self.view, seq), self.params.block_timeout))
        if self.is_primary and self.mempool is not None:
            out.extend(self.make_proposal(self.mempool.take(self.view, seq)))

    def make_proposal(self, txs) -> StepOutput:
        """Primary forms the next block and pre-prepares it to the committee."""
        if not self.is_primary:
            raise NotPrimary(f"replica {self.id} is not primary of view {self.view}")
        if self.mode != NORMAL:
            raise WrongMode("cannot propose during a view change")
        out = StepOutput()
        seq = self.tip.seq + 1
        block = Block.make(self.view, seq, txs, self.tip.digest)
        msg = self.sign(PRE_PREPARE, self.view, seq, block.digest, block)
        out.send(self.members(), msg)
        return out

    def _commit(self, block: Block, cert: QuorumCertificate, out: StepOutput) -> bool:
        try:
            core.append_block(self.chain, block, cert, self.params.f, self.auth)
        except core.ProtocolError as exc:
            out.notes.append(f"append-rejected:{type(exc).__name__}")
            return False
        out.committed.append((block, cert))
        if (self.mode == NORMAL and self.is_member and block.view == self.view
                and block.seq not in self.confirm_sent):
            self.confirm_sent.add(block.seq)
            out.send(self.others(), self.sign(CONFIRM, block.view, block.seq, block.digest, cert))
        out.timer_cancels.append(("epoch", self.view, block.seq))
        out.timer_cancels.append(("block", self.view, block.seq))
        if self.lock is not None and self.lock[1] <= block.seq:
            self.lock = None
        if self.mode == NORMAL:
            self._begin_epoch(out)
        else:
            self.vc_on_commit(out)
        self._replay_buffer(out)
        return True

    def _commit_allowed(self, block: Block) -> bool:
        """Old-view blocks may not extend past the agreed tip once a new view is settled."""
        if block.view >= self.view:
            return True
        if self.mode == NORMAL:
            return block.seq <= self.base
        return self.vc_commit_allowed(block)

    # -- conflict evidence --------------------------------------------------

    def _record(self, msg: SignedMessage, out: StepOutput) -> bool:
        """Log an exclusive message; on a conflicting twin raise a proof. True if clean."""
        key = (msg.kind, msg.sender, msg.view, msg.seq)
        seen = self.signed_log.get(key)
        if seen is None:
            self.signed_log[key] = msg
            return True
        if seen.digest == msg.digest:
            return True
        self._raise_proof(("conflict", seen, msg), msg.view, out)
        return False

    def _raise_proof(self, body: tuple, view: int, out: StepOutput) -> None:
        if view in self.proof_sent or view < self.view:
            return
        self.proof_sent.add(view)
        proof = self.sign(MALICIOUSNESS_PROOF, view, 0, ZERO_DIGEST, body)
        out.send(self.others(), proof)
        out.notes.append(f"proof:{body[0]}:v{view}")
        out.transition = proof
        self.start_view_change(view + 1, out)

    # -- customized BFT inside the root committee ---------------------------

    def handle_preprepare(self, msg: SignedMessage, out: StepOutput) -> None:
        if not self.is_member or msg.sender != self.committee.primary:
            out.notes.append("preprepare-not-from-primary")
            return
        if self._future(msg):
            return
        if msg.seq <= self.tip.seq:
            return
        block = msg.body
        if not isinstance(block, Block) or block.digest != msg.digest:
            out.notes.append("bad-hash")
            return
        if block.view != msg.view or block.seq != msg.seq:
            out.notes.append("bad-view-seq")
            return
        if block.prev != self.tip.digest:
            out.notes.append("bad-prev")
            return
        if not block.is_well_formed():
            out.notes.append("bad-hash")
            return
        if not self._record(msg, out):
            return
        self.known_blocks[block.digest] = block
        if msg.seq in self.sent_prepare:
            return
        self.sent_prepare.add(msg.seq)
        self.accepted_pp[msg.seq] = block.digest
        out.send(self.members(), self._vote(PREPARE, msg.seq, block.digest))
        self._check_prepared(msg.seq, block.digest, out)

    def handle_prepare(self, msg: SignedMessage, out: StepOutput) -> None:
        if not self.is_member or msg.sender not in self.committee:
            return
        if self._future(msg) or msg.seq <= self.tip.seq:
            return
        if not self._record(msg, out):
            return
        self.prepares.setdefault((msg.seq, msg.digest), {})[msg.sender] = msg
        self._check_prepared(msg.seq, msg.digest, out)

    def _check_prepared(self, seq: int, digest: bytes, out: StepOutput) -> None:
        votes = self.prepares.get((seq, digest), {})
        if (len(votes) >= self.params.root_quorum and seq not in self.sent_commit
                and self.accepted_pp.get(seq) == digest and self.mode == NORMAL):
            self.sent_commit[seq] = digest
            self.lock = (self.view, seq, digest)
            out.send(self.members(), self._vote(COMMIT, seq, digest))

    def handle_commit(self, msg: SignedMessage, out: StepOutput) -> None:
        if not self.is_member or msg.sender not in self.committee:
            return
        if self._future(msg) or msg.seq <= self.tip.seq:
            return
        if not self._record(msg, out):
            return
        self.commits.setdefault((msg.seq, msg.digest), {})[msg.sender] = msg
        self._check_committed(msg.seq, msg.digest, out)

    def _check_committed(self, seq: int, digest: bytes, out: StepOutput) -> None:
        votes = self.commits.get((seq, digest), {})
        if (len(votes) < self.params.root_quorum or seq in self.proposed
                or digest not in self.known_blocks or self.mode != NORMAL):
            return
        cert = core.aggregate_quorum_cert(votes.values(), ROOT, self.committee.member_set,
                                          self.params.f, self.params.c, self.auth)
        self.proposed.add(seq)
        self.root_certs[digest] = cert
        out.timer_cancels.append(("block", self.view, seq))
        block = self.known_blocks[digest]
        out.send(self.everyone(), self.sign(BLOCK_PROPOSAL, self.view, seq, digest, (block, cert)))

    def handle_timeoutfailure(self, msg: SignedMessage, out: StepOutput) -> None:
        """A lagging committee peer asks to be brought up to date from block ``msg.seq``."""
        if not self.is_member or msg.sender not in self.committee or msg.sender == self.id:
            return
        key = (msg.sender, msg.seq)
        if msg.seq >= self.tip.seq:
            out.notes.append("timeoutfailure-nothing-missing")
            return
        if key in self.served_sync:
            return
        self.served_sync.add(key)
        out.send((msg.sender,), self._sync_payload(msg.seq + 1))

    # -- committee towards regular replicas ---------------------------------

    def handle_block_proposal(self, msg: SignedMessage, out: StepOutput) -> None:
        if msg.sender not in self.committee:
            out.notes.append("proposal-from-non-member")
            return
        if self._future(msg) or msg.seq <= self.tip.seq:
            return
        body = msg.body
        if not (isinstance(body, tuple) and len(body) == 2):
            out.notes.append("invalid-proposal")
            return
        block, cert = body
        if (not isinstance(block, Block) or block.digest != msg.digest or block.seq != msg.seq
                or block.view != msg.view or block.prev != self.tip.digest
                or not block.is_well_formed()):
            out.notes.append("invalid-proposal-block")
            return
        if (not isinstance(cert, QuorumCertificate) or cert.threshold_kind != ROOT
                or cert.view != msg.view or cert.seq != msg.seq
                or not core.verify_quorum_cert(cert, block.digest, self.committee.member_set,
                                               self.params.f, self.params.c, self.auth)):
            out.notes.append("invalid-proposal-cert")
            return
        if not self._record(msg, out):
            return
        seen = self.proposal_seen.get(msg.seq)
        if seen is not None and seen[0] != block.digest:
            self._conflicting_certs(seen[1], cert, out)
            return
        self.known_blocks[block.digest] = block
        self.root_certs.setdefault(block.digest, cert)
        if seen is None:
            self.proposal_seen[msg.seq] = (block.digest, cert)
            if msg.seq not in self.sent_commit and msg.seq not in self.sent_approval:
                self.sent_approval[msg.seq] = block.digest
                self.lock = (self.view, msg.seq, block.digest)
                out.send(self.members(), self._vote(APPROVAL, msg.seq, block.digest))
        if self.is_member:
            self._check_committed(msg.seq, block.digest, out)
            self._try_global_commit(msg.seq, block.digest, out)
        self._retry_confirm(block.digest, out)

    def _conflicting_certs(self, a: QuorumCertificate, b: QuorumCertificate,
                           out: StepOutput) -> None:
        """Two valid root certs on different digests share a signer who voted twice."""
        votes_a = {v.sender: v for v in a.votes}
        for vote in b.votes:
            twin = votes_a.get(vote.sender)
            if twin is not None and twin.kind == vote.kind and twin.digest != vote.digest:
                self._raise_proof(("conflict", twin, vote), vote.view, out)
                return
        out.notes.append("conflicting-proposals-without-overlap")

    def handle_approval(self, msg: SignedMessage, out: StepOutput) -> None:
        if not self.is_member:
            return
        if self._future(msg) or msg.seq <= self.tip.seq:
            return
        if not self._record(msg, out):
            return
        self.approvals.setdefault((msg.seq, msg.digest), {})[msg.sender] = msg
        mine = self.proposal_seen.get(msg.seq)
        if mine is not None and mine[0] != msg.digest:
            out.notes.append("approval-for-unproposed-digest")
        self._try_global_commit(msg.seq, msg.digest, out)

    def _try_global_commit(self, seq: int, digest: bytes, out: StepOutput) -> None:
        if (seq != self.tip.seq + 1 or seq in self.confirm_sent or self.mode != NORMAL
                or digest not in self.known_blocks):
            return
        votes: dict = {}
        cert = self.root_certs.get(digest)
        if cert is not None:
            votes.update((v.sender, v) for v in cert.votes)
        for v in self.commits.get((seq, digest), {}).values():
            votes.setdefault(v.sender, v)
        for v in self.approvals.get((seq, digest), {}).values():
            votes.setdefault(v.sender, v)
        if len(votes) < self.params.global_quorum:
            return
        gcert = core.aggregate_quorum_cert(votes.values(), GLOBAL, (), self.params.f,
                                           self.params.c, self.auth)
        self._commit(self.known_blocks[digest], gcert, out)

    # -- regular replica ----------------------------------------------------

    def handle_confirm(self, msg: SignedMessage, out: StepOutput) -> None:
        cert = msg.body
        if msg.seq <= self.tip.seq:
            mine = self.chain.block_at(msg.seq)
            if mine is not None and mine.digest != msg.digest:
                out.notes.append("conflicting-confirm")
            return
        if msg.view > self.view:
            self.buffer.append(msg)
            return
        if msg.seq > self.tip.seq + 1:
            self.buffer.append(msg)
            return
        if (not isinstance(cert, QuorumCertificate) or cert.threshold_kind != GLOBAL
                or cert.seq != msg.seq or cert.view != msg.view
                or not core.verify_quorum_cert(cert, msg.digest, (), self.params.f,
                                               self.params.c, self.auth)):
            out.notes.append("invalid-confirm")
            return
        block = self.known_blocks.get(msg.digest)
        if block is None:
            self.buffer.append(msg)
            if (msg.sender, msg.seq) not in self.sync_requested:
                self.sync_requested.add((msg.sender, msg.seq))
                out.send((msg.sender,), self.sign(SYNC_REQUEST, self.view, msg.seq,
                                                  ZERO_DIGEST, self.tip.seq + 1))
            return
        if not self._commit_allowed(block):
            out.notes.append("stale-view-confirm")
            return
        self._commit(block, cert, out)

    def _retry_confirm(self, digest: bytes, out: StepOutput) -> None:
        pending = [m for m in self.buffer if m.kind == CONFIRM and m.digest == digest]
        if not pending:
            return
        self.buffer = [m for m in self.buffer if not (m.kind == CONFIRM and m.digest == digest)]
        self.handle_confirm(pending[0], out)

    def handle_timeout_complaint(self, msg: SignedMessage, out: StepOutput) -> None:
        if msg.view > self.view:
            self.buffer.append(msg)
            return
        if msg.view < self.view or not self.is_member:
            return
        bucket = self.complaints.setdefault(msg.view, {})
        bucket.setdefault(msg.sender, msg)
        if len(bucket) >= self.params.f + 1 and msg.view not in self.proof_sent:
            chosen = tuple(bucket[s] for s in sorted(bucket))
            self._raise_proof(("complaints",) + chosen, msg.view, out)

    def handle_maliciousness_proof(self, msg: SignedMessage, out: StepOutput) -> None:
        convicted = verify_proof(msg, self.params, self.auth)
        if convicted is None:
            out.notes.append("invalid-proof")
            return
        if convicted < self.view:
            return
        out.transition = msg
        self.start_view_change(convicted + 1, out)

    # -- timers -------------------------------------------------------------

    def _on_timer(self, tid: tuple, out: StepOutput) -> None:
        kind = tid[0]
        if kind == "epoch":
            self.on_epoch_timeout(tid, out)
        elif kind == "block":
            self.on_block_timeout(tid, out)
        else:
            self.vc_on_timer(tid, out)

    def on_epoch_timeout(self, tid: tuple, out: StepOutput) -> None:
        _, view, seq = tid
        if view != self.view or self.mode != NORMAL or self.tip.seq >= seq:
            return
        if (view, seq) in self.complained:
            return
        self.complained.add((view, seq))
        out.send(self.members(), self.sign(TIMEOUT_COMPLAINT, view, seq, ZERO_DIGEST))

    def on_block_timeout(self, tid: tuple, out: StepOutput) -> None:
        _, view, seq = tid
        if (view != self.view or self.mode != NORMAL or not self.is_member
                or seq in self.proposed or self.tip.seq >= seq or seq in self.failure_sent):
            return
        self.failure_sent.add(seq)
        others = tuple(m for m in self.members() if m != self.id)
        out.send(others, self.sign(TIMEOUT_FAILURE, view, self.tip.seq, ZERO_DIGEST))

    # -- history sync -------------------------------------------------------

    def _sync_payload(self, from_seq: int) -> SignedMessage:
        entries = tuple((self.chain.blocks[s], self.chain.certs[s])
                        for s in range(max(from_seq, 1), self.tip.seq + 1))
        return self.sign(SYNC_RESPONSE, self.view, from_seq, ZERO_DIGEST, entries)

    def handle_sync_request(self, msg: SignedMessage, out: StepOutput) -> None:
        from_seq = msg.body
        if not isinstance(from_seq, int) or from_seq > self.tip.seq or msg.sender == self.id:
            return
        out.send((msg.sender,), self._sync_payload(from_seq))

    def handle_sync_response(self, msg: SignedMessage, out: StepOutput) -> None:
        entries = msg.body
        if not isinstance(entries, tuple):
            return
        for entry in entries:
            if not (isinstance(entry, tuple) and len(entry) == 2):
                return
            block, cert = entry
            if not isinstance(block, Block) or block.seq <= self.tip.seq:
                continue
            if block.seq != self.tip.seq + 1 or not self._commit_allowed(block):
                break
            if not self._commit(block, cert, out):
                break
