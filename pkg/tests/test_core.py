from __future__ import annotations

import pytest
from hypothesis import given, strategies as st

from proteus import core
from proteus.core import (
    APPROVAL, COMMIT, GENESIS, GLOBAL, PREPARE, ROOT, Block, Chain, aggregate_quorum_cert,
    append_block, canonical_bytes, validate_chain, verify_quorum_cert,
)
from proteus.crypto import Ed25519Authenticator, KeyedDigestAuthenticator

N, F, C = 7, 2, 3
COMMITTEE = frozenset({0, 1, 2})


@pytest.fixture
def auth():
    return KeyedDigestAuthenticator(N, b"unit")


def votes(auth, kind, signers, block, view=0):
    return [auth.sign(kind, view, block.seq, block.digest, s) for s in signers]


def child(parent=GENESIS, view=0, txs=(b"a",)):
    return Block.make(view, parent.seq + 1, txs, parent.digest)


field_values = st.recursive(
    st.one_of(st.none(), st.booleans(), st.integers(), st.binary(max_size=8),
              st.text(max_size=8)),
    lambda inner: st.lists(inner, max_size=4).map(tuple),
    max_leaves=10,
)


@given(field_values, field_values)
def test_canonical_encoding_is_injective(a, b):
    if canonical_bytes(a) == canonical_bytes(b):
        assert repr(a) == repr(b)


@given(st.lists(st.binary(max_size=6), max_size=5), st.lists(st.binary(max_size=6), max_size=5))
def test_payload_boundaries_change_the_digest(x, y):
    bx = Block.make(0, 1, x, GENESIS.digest)
    by = Block.make(0, 1, y, GENESIS.digest)
    assert (bx.digest == by.digest) == (tuple(x) == tuple(y))


def test_block_digest_covers_every_field():
    b = child()
    assert b.is_well_formed()
    for other in (Block.make(1, 1, (b"a",), GENESIS.digest), Block.make(0, 2, (b"a",), GENESIS.digest),
                  Block.make(0, 1, (b"b",), GENESIS.digest), Block.make(0, 1, (b"a",), b"\x01" * 32)):
        assert other.digest != b.digest
    forged = Block(0, 1, (b"z",), GENESIS.digest, b.digest)
    assert not forged.is_well_formed()


def test_signatures_bind_sender_and_fields(auth):
    m = auth.sign(PREPARE, 0, 1, b"\x02" * 32, 3)
    assert auth.verify_message(m)
    tampered = core.SignedMessage(m.kind, m.view, m.seq + 1, m.digest, m.sender, m.body, m.signature)
    assert not auth.verify_message(tampered)
    impostor = core.SignedMessage(m.kind, m.view, m.seq, m.digest, 4, m.body, m.signature)
    assert not auth.verify_message(impostor)


def test_ed25519_scheme_round_trip():
    pytest.importorskip("cryptography")
    auth = Ed25519Authenticator(4, b"k")
    m = auth.sign(COMMIT, 1, 2, b"\x03" * 32, 1)
    assert auth.verify_message(m)
    bad = core.SignedMessage(m.kind, m.view, m.seq, m.digest, 2, m.body, m.signature)
    assert not auth.verify_message(bad)


def test_root_quorum_needs_committee_signers(auth):
    b = child()
    cert = aggregate_quorum_cert(votes(auth, COMMIT, [0, 1, 2], b), ROOT, COMMITTEE, F, C, auth)
    assert cert.signers == COMMITTEE
    assert verify_quorum_cert(cert, b.digest, COMMITTEE, F, C, auth)
    with pytest.raises(core.InsufficientVotes):
        aggregate_quorum_cert(votes(auth, COMMIT, [0, 1, 5, 6], b), ROOT, COMMITTEE, F, C, auth)


def test_duplicate_signers_count_once(auth):
    b = child()
    vs = votes(auth, APPROVAL, [0, 0, 0, 1, 1], b)
    with pytest.raises(core.InsufficientVotes):
        aggregate_quorum_cert(vs, GLOBAL, (), F, C, auth)


def test_mixed_digests_and_bad_signatures_rejected(auth):
    a, b = child(), child(txs=(b"other",))
    with pytest.raises(core.MixedDigests):
        aggregate_quorum_cert(votes(auth, COMMIT, [0], a) + votes(auth, COMMIT, [1], b),
                              GLOBAL, (), F, C, auth)
    good = votes(auth, COMMIT, [0, 1, 2, 3], a)
    forged = core.SignedMessage(COMMIT, 0, a.seq, a.digest, 4, None, b"\x00" * 32)
    with pytest.raises(core.BadSignature):
        aggregate_quorum_cert(good + [forged], GLOBAL, (), F, C, auth)


def test_global_cert_wrong_digest_or_kind_fails(auth):
    b = child()
    cert = aggregate_quorum_cert(votes(auth, APPROVAL, range(5), b), GLOBAL, (), F, C, auth)
    assert verify_quorum_cert(cert, b.digest, (), F, C, auth)
    assert not verify_quorum_cert(cert, b"\x09" * 32, (), F, C, auth)
    prepares = votes(auth, PREPARE, range(5), b)
    fake = core.QuorumCertificate(b.digest, 0, 1, GLOBAL, tuple(prepares))
    assert not verify_quorum_cert(fake, b.digest, (), F, C, auth)
    assert not verify_quorum_cert(None, b.digest, (), F, C, auth)


@given(st.integers(min_value=0, max_value=N), st.integers(min_value=0, max_value=4))
def test_cert_valid_iff_enough_distinct_signers(distinct, dupes):
    auth = KeyedDigestAuthenticator(N, b"prop")
    b = child()
    signers = list(range(distinct)) + [0] * (dupes if distinct else 0)
    vs = votes(auth, APPROVAL, signers, b)
    if distinct >= 2 * F + 1:
        cert = aggregate_quorum_cert(vs, GLOBAL, (), F, C, auth)
        assert len(cert.votes) == distinct
    else:
        with pytest.raises(core.InsufficientVotes):
            aggregate_quorum_cert(vs, GLOBAL, (), F, C, auth)


def test_chain_append_and_validate(auth):
    chain = Chain()
    b1 = child()
    c1 = aggregate_quorum_cert(votes(auth, APPROVAL, range(5), b1), GLOBAL, (), F, C, auth)
    append_block(chain, b1, c1, F, auth)
    assert chain.height == 1 and chain.tip == b1
    validate_chain(chain, F, auth)
    b3 = Block.make(0, 3, (), b1.digest)
    with pytest.raises(core.GapDetected):
        append_block(chain, b3, c1, F, auth)
    fork = Block.make(0, 2, (), b"\x07" * 32)
    cf = aggregate_quorum_cert(votes(auth, APPROVAL, range(5), fork), GLOBAL, (), F, C, auth)
    with pytest.raises(core.ForkDetected):
        append_block(chain, fork, cf, F, auth)
    b2 = child(b1)
    with pytest.raises(core.BadCertificate):
        append_block(chain, b2, c1, F, auth)
    assert chain.height == 1


def test_validate_chain_catches_tampering(auth):
    chain = Chain()
    b1 = child()
    append_block(chain, b1, aggregate_quorum_cert(votes(auth, APPROVAL, range(5), b1),
                                                 GLOBAL, (), F, C, auth), F, auth)
    chain.blocks[1] = Block(0, 1, (b"swapped",), GENESIS.digest, b1.digest)
    with pytest.raises(core.BadCertificate):
        validate_chain(chain, F, auth)
