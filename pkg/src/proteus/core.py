"""
Shared domain types: blocks, hash-linked chains, signed messages and quorum
certificates.

Everything here is a value type. Canonical serialization is a length-prefixed
concatenation of fields in declared order; it is used both for digesting and
as the wire format, so it must stay byte-stable.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Optional, Sequence

DIGEST_SIZE = 32
ZERO_DIGEST = b"\x00" * DIGEST_SIZE

ROOT = "root"
GLOBAL = "global"


class ProtocolError(Exception):
    """Base class for errors raised by protocol operations."""


class InsufficientVotes(ProtocolError):
    pass


class MixedDigests(ProtocolError):
    pass


class BadSignature(ProtocolError):
    pass


class ForkDetected(ProtocolError):
    pass


class GapDetected(ProtocolError):
    pass


class BadCertificate(ProtocolError):
    pass


# -- canonical encoding -------------------------------------------------------

def _encode_into(out: list, value) -> None:
    if isinstance(value, (bytes, bytearray)):
        out.append(b"b" + struct.pack(">I", len(value)) + bytes(value))
    elif isinstance(value, bool):
        out.append(b"t" if value else b"f")
    elif isinstance(value, int):
        raw = str(value).encode()
        out.append(b"i" + struct.pack(">I", len(raw)) + raw)
    elif isinstance(value, str):
        raw = value.encode()
        out.append(b"s" + struct.pack(">I", len(raw)) + raw)
    elif value is None:
        out.append(b"n")
    elif isinstance(value, (tuple, list)):
        out.append(b"l" + struct.pack(">I", len(value)))
        if all(type(item) is bytes for item in value):
            # fast path for transaction payloads; same bytes as the general branch
            out.extend(b"b" + struct.pack(">I", len(item)) + item for item in value)
            return
        for item in value:
            _encode_into(out, item)
    elif hasattr(value, "encoded"):
        raw = value.encoded
        out.append(b"o" + struct.pack(">I", len(raw)) + raw)
    else:
        raise TypeError(f"cannot canonically encode {type(value).__name__}")


def canonical_bytes(*fields) -> bytes:
    """Length-prefixed encoding of ``fields`` in order."""
    out: list = []
    for value in fields:
        _encode_into(out, value)
    return b"".join(out)


def sha256(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def digest_of(view: int, seq: int, payload: Sequence[bytes], prev: bytes) -> bytes:
    """Block digest over (view, seq, payload, prev)."""
    return sha256(canonical_bytes(b"block", view, seq, tuple(payload), prev))


# -- blocks and messages --------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Block:
    view: int
    seq: int
    payload: tuple
    prev: bytes
    digest: bytes

    @classmethod
    def make(cls, view: int, seq: int, payload: Iterable[bytes], prev: bytes) -> "Block":
        payload = tuple(payload)
        return cls(view, seq, payload, prev, digest_of(view, seq, payload, prev))

    def is_well_formed(self) -> bool:
        """Digest matches contents and every transaction is a byte string."""
        return self._well_formed

    @cached_property
    def _well_formed(self) -> bool:
        # blocks are immutable, so the check is done once per instance
        if not all(isinstance(tx, (bytes, bytearray)) for tx in self.payload):
            return False
        return self.digest == digest_of(self.view, self.seq, self.payload, self.prev)

    @cached_property
    def encoded(self) -> bytes:
        return canonical_bytes(self.view, self.seq, self.payload, self.prev, self.digest)

    @cached_property
    def nbytes(self) -> int:
        return sum(len(tx) for tx in self.payload) + 2 * DIGEST_SIZE + 16

    def __eq__(self, other) -> bool:
        return isinstance(other, Block) and self.digest == other.digest

    def __hash__(self) -> int:
        return hash(self.digest)


GENESIS = Block.make(0, 0, (), ZERO_DIGEST)


# Message kinds.
PRE_PREPARE = "PrePrepare"
PREPARE = "Prepare"
COMMIT = "Commit"
BLOCK_PROPOSAL = "BlockProposal"
APPROVAL = "Approval"
CONFIRM = "Confirm"
TIMEOUT_COMPLAINT = "TimeoutComplaint"
TIMEOUT_FAILURE = "TimeoutFailure"
VIEW_CHANGE = "ViewChange"
HISTORY_QUORUM = "HistoryQuorum"
READY = "Ready"
READY_QUORUM = "ReadyQuorum"
MALICIOUSNESS_PROOF = "MaliciousnessProof"
SYNC_REQUEST = "SyncRequest"
SYNC_RESPONSE = "SyncResponse"

MESSAGE_KINDS = (
    PRE_PREPARE, PREPARE, COMMIT, BLOCK_PROPOSAL, APPROVAL, CONFIRM,
    TIMEOUT_COMPLAINT, TIMEOUT_FAILURE, VIEW_CHANGE, HISTORY_QUORUM, READY,
    READY_QUORUM, MALICIOUSNESS_PROOF, SYNC_REQUEST, SYNC_RESPONSE,
)

# Kinds whose (view, seq, digest) a correct replica signs at most once; two of
# them from one signer with differing digests are a conflict pair.
EXCLUSIVE_KINDS = frozenset({PRE_PREPARE, PREPARE, COMMIT, BLOCK_PROPOSAL, APPROVAL})


def signing_bytes(kind: str, view: int, seq: int, digest: bytes, sender: int, body) -> bytes:
    return canonical_bytes(kind, view, seq, digest, sender, body)


@dataclass(frozen=True, eq=False)
class SignedMessage:
    kind: str
    view: int
    seq: int
    digest: bytes
    sender: int
    body: object
    signature: bytes

    @cached_property
    def signed_digest(self) -> bytes:
        """Hash of the authenticated fields; signatures are computed over it."""
        return sha256(signing_bytes(self.kind, self.view, self.seq, self.digest,
                                    self.sender, self.body))

    @cached_property
    def encoded(self) -> bytes:
        return canonical_bytes(self.kind, self.view, self.seq, self.digest,
                               self.sender, self.body, self.signature)

    @cached_property
    def nbytes(self) -> int:
        """Approximate wire size. Certificates count as aggregated signatures."""
        return 96 + _body_size(self.body)

    def __eq__(self, other) -> bool:
        return isinstance(other, SignedMessage) and self.encoded == other.encoded

    def __hash__(self) -> int:
        return hash(self.signed_digest)

    def short(self) -> dict:
        return {"kind": self.kind, "view": self.view, "seq": self.seq,
                "digest": self.digest.hex()[:16], "sender": self.sender}


def _body_size(body) -> int:
    if body is None:
        return 0
    if isinstance(body, (bytes, bytearray)):
        return len(body)
    if isinstance(body, int):
        return 8
    if isinstance(body, (Block, QuorumCertificate, SignedMessage)):
        return body.nbytes
    if isinstance(body, (tuple, list)):
        return sum(_body_size(item) for item in body)
    return 32


# -- quorum certificates --------------------------------------------------------

def root_threshold(c: int) -> int:
    """Distinct committee signatures needed for a root quorum."""
    return (2 * c) // 3 + 1


def global_threshold(f: int) -> int:
    return 2 * f + 1


def default_f(n: int) -> int:
    return (n - 1) // 3


@dataclass(frozen=True, eq=False)
class QuorumCertificate:
    """A set of distinct signed votes on one (view, seq, digest)."""

    digest: bytes
    view: int
    seq: int
    threshold_kind: str
    votes: tuple  # SignedMessage, sorted by sender

    @property
    def signers(self) -> frozenset:
        return frozenset(v.sender for v in self.votes)

    @cached_property
    def encoded(self) -> bytes:
        return canonical_bytes(self.threshold_kind, self.view, self.seq, self.digest,
                               tuple(self.votes))

    @cached_property
    def nbytes(self) -> int:
        # aggregated signature plus a signer bitmap
        return 96 + 8 + len(self.votes) // 8 + 1

    def __eq__(self, other) -> bool:
        return isinstance(other, QuorumCertificate) and self.encoded == other.encoded

    def __hash__(self) -> int:
        return hash((self.digest, self.view, self.seq, self.threshold_kind))


ROOT_VOTE_KINDS = frozenset({COMMIT})
GLOBAL_VOTE_KINDS = frozenset({COMMIT, APPROVAL})


def _threshold(kind: str, f: int, c: int) -> int:
    if kind == ROOT:
        return root_threshold(c)
    if kind == GLOBAL:
        return global_threshold(f)
    raise ValueError(f"unknown threshold kind {kind!r}")


def aggregate_quorum_cert(votes: Iterable[SignedMessage], kind: str, committee,
                          f: int, c: int, auth) -> QuorumCertificate:
    """Build a certificate from ``votes``; duplicate senders count once."""
    votes = list(votes)
    if not votes:
        raise InsufficientVotes("no votes")
    key = (votes[0].view, votes[0].seq, votes[0].digest)
    by_sender: dict = {}
    for vote in votes:
        if (vote.view, vote.seq, vote.digest) != key:
            raise MixedDigests("votes disagree on (view, seq, digest)")
        if not auth.verify_message(vote):
            raise BadSignature(f"vote from {vote.sender} fails verification")
        if kind == ROOT and vote.sender not in committee:
            continue
        by_sender.setdefault(vote.sender, vote)
    need = _threshold(kind, f, c)
    if len(by_sender) < need:
        raise InsufficientVotes(f"{len(by_sender)} distinct signers, need {need}")
    chosen = tuple(by_sender[s] for s in sorted(by_sender))
    return QuorumCertificate(key[2], key[0], key[1], kind, chosen)


def verify_quorum_cert(cert: Optional[QuorumCertificate], expected_digest: bytes, committee,
                       f: int, c: int, auth) -> bool:
    """True iff ``cert`` is a valid quorum of distinct signers on ``expected_digest``."""
    if not isinstance(cert, QuorumCertificate) or cert.digest != expected_digest:
        return False
    allowed = ROOT_VOTE_KINDS if cert.threshold_kind == ROOT else GLOBAL_VOTE_KINDS
    try:
        need = _threshold(cert.threshold_kind, f, c)
    except ValueError:
        return False
    seen = set()
    for vote in cert.votes:
        if vote.kind not in allowed or vote.sender in seen:
            return False
        if (vote.view, vote.seq, vote.digest) != (cert.view, cert.seq, cert.digest):
            return False
        if cert.threshold_kind == ROOT and vote.sender not in committee:
            return False
        if not auth.verify_message(vote):
            return False
        seen.add(vote.sender)
    return len(seen) >= need


# -- chains ---------------------------------------------------------------------

@dataclass
class Chain:
    """Committed blocks in seq order, each with the certificate that committed it."""

    blocks: list = field(default_factory=lambda: [GENESIS])
    certs: list = field(default_factory=lambda: [None])

    @property
    def tip(self) -> Block:
        return self.blocks[-1]

    @property
    def tip_cert(self) -> Optional[QuorumCertificate]:
        return self.certs[-1]

    @property
    def height(self) -> int:
        return self.blocks[-1].seq

    def __len__(self) -> int:
        return len(self.blocks)

    def block_at(self, seq: int) -> Optional[Block]:
        if 0 <= seq < len(self.blocks):
            return self.blocks[seq]
        return None

    def digests(self) -> list:
        return [b.digest for b in self.blocks]

    def export(self) -> list:
        return [{"view": b.view, "seq": b.seq, "digest": b.digest.hex(), "prev": b.prev.hex(),
                 "txs": len(b.payload)} for b in self.blocks]


def append_block(chain: Chain, block: Block, cert: QuorumCertificate, f: int, auth) -> Chain:
    """Extend ``chain`` in place with a block committed by a global quorum."""
    tip = chain.tip
    if block.seq != tip.seq + 1:
        raise GapDetected(f"block seq {block.seq} does not follow tip {tip.seq}")
    if block.prev != tip.digest:
        raise ForkDetected(f"block {block.seq} does not link to tip digest")
    if not block.is_well_formed():
        raise BadCertificate("block digest does not match its contents")
    if (cert is None or cert.threshold_kind != GLOBAL or cert.seq != block.seq
            or not verify_quorum_cert(cert, block.digest, (), f, 0, auth)):
        raise BadCertificate(f"no valid global quorum for block {block.seq}")
    chain.blocks.append(block)
    chain.certs.append(cert)
    return chain


def validate_chain(chain: Chain, f: int, auth) -> None:
    """Full-chain check of linkage, consecutive seqs and commit certificates."""
    if chain.blocks[0] != GENESIS:
        raise ForkDetected("chain does not start at genesis")
    for k in range(1, len(chain.blocks)):
        block, cert = chain.blocks[k], chain.certs[k]
        if block.seq != k:
            raise GapDetected(f"position {k} holds seq {block.seq}")
        if block.prev != chain.blocks[k - 1].digest:
            raise ForkDetected(f"block {k} does not link to its predecessor")
        if not block.is_well_formed():
            raise BadCertificate(f"block {k} digest mismatch")
        if not verify_quorum_cert(cert, block.digest, (), f, 0, auth) or cert.threshold_kind != GLOBAL:
            raise BadCertificate(f"block {k} lacks a valid global quorum")
