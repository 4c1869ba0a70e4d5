"""
PBFT normal case, for message-count and latency comparison.

The primary pre-prepares to everyone, every replica broadcasts a prepare,
``2f+1`` prepares trigger a commit broadcast and ``2f+1`` commits append the
block. There is no view change or checkpointing: this baseline only runs in
failure-free configurations.
"""

from __future__ import annotations

from . import core
from .core import COMMIT, GLOBAL, PRE_PREPARE, PREPARE, Block, Chain, QuorumCertificate
from .replica import NORMAL, Deliver, Start, StepOutput, Timer


class PbftReplica:
    """One PBFT replica; implements the same ``step`` contract as ``Replica``."""

    def __init__(self, replica_id: int, n: int, f: int, auth, max_seq: int, mempool=None):
        self.id = replica_id
        self.n = n
        self.f = f
        self.auth = auth
        self.signer = auth.signer_for(replica_id)
        self.max_seq = max_seq
        self.mempool = mempool
        self.view = 0
        self.mode = NORMAL
        self.chain = Chain()
        self.blocks: dict = {}
        self.prepares: dict = {}
        self.commits: dict = {}
        self.sent_commit: set = set()
        self.buffer: list = []

    @property
    def tip(self) -> Block:
        return self.chain.tip

    @property
    def quorum(self) -> int:
        return core.global_threshold(self.f)

    @property
    def is_primary(self) -> bool:
        return self.id == self.view % self.n

    def step(self, event) -> StepOutput:
        out = StepOutput()
        if isinstance(event, Start):
            self._propose(out)
        elif isinstance(event, Deliver):
            self._handle(event.msg, out)
        elif isinstance(event, Timer):
            pass
        return out

    def _propose(self, out: StepOutput) -> None:
        seq = self.tip.seq + 1
        if not self.is_primary or seq > self.max_seq or self.mempool is None:
            return
        block = Block.make(self.view, seq, self.mempool.take(self.view, seq), self.tip.digest)
        out.send(range(self.n), self.signer.sign(PRE_PREPARE, self.view, seq, block.digest, block))

    def _handle(self, msg, out: StepOutput) -> None:
        if not self.auth.verify_message(msg) or msg.view != self.view:
            return
        if msg.seq <= self.tip.seq:
            return
        if msg.seq > self.tip.seq + 1:
            self.buffer.append(msg)
            return
        if msg.kind == PRE_PREPARE:
            block = msg.body
            if (msg.sender != self.view % self.n or not isinstance(block, Block)
                    or block.digest != msg.digest or block.prev != self.tip.digest
                    or not block.is_well_formed() or msg.seq in self.blocks):
                return
            self.blocks[msg.seq] = block
            out.send(range(self.n), self.signer.sign(PREPARE, self.view, msg.seq, block.digest))
        elif msg.kind == PREPARE:
            self.prepares.setdefault((msg.seq, msg.digest), {}).setdefault(msg.sender, msg)
        elif msg.kind == COMMIT:
            self.commits.setdefault((msg.seq, msg.digest), {}).setdefault(msg.sender, msg)
        self._progress(msg.seq, out)

    def _progress(self, seq: int, out: StepOutput) -> None:
        block = self.blocks.get(seq)
        if block is None:
            return
        key = (seq, block.digest)
        if seq not in self.sent_commit and len(self.prepares.get(key, ())) >= self.quorum:
            self.sent_commit.add(seq)
            out.send(range(self.n), self.signer.sign(COMMIT, self.view, seq, block.digest))
        votes = self.commits.get(key, {})
        if seq in self.sent_commit and len(votes) >= self.quorum:
            chosen = tuple(votes[s] for s in sorted(votes))
            cert = QuorumCertificate(block.digest, self.view, seq, GLOBAL, chosen)
            core.append_block(self.chain, block, cert, self.f, self.auth)
            out.committed.append((block, cert))
            for k in (self.blocks, self.prepares, self.commits):
                for stale in [x for x in k if (x[0] if isinstance(x, tuple) else x) <= seq]:
                    del k[stale]
            self._propose(out)
            pending, self.buffer = self.buffer, []
            for m in pending:
                self._handle(m, out)
