"""
Authenticators standing in for per-replica signatures.

Two schemes share one interface: a keyed-digest scheme (HMAC-SHA256 with a
per-replica secret derived from a run seed) that is cheap enough for large
simulations, and Ed25519 via ``cryptography`` for when real signatures are
wanted. Signatures are computed over ``SignedMessage.signed_digest``.
"""

from __future__ import annotations

import hashlib
import hmac

from .core import SignedMessage, sha256, signing_bytes


class Authenticator:
    """Holds every replica's verification key; signs on behalf of one id at a time."""

    name = "abstract"

    def __init__(self, n: int):
        self.n = n
        self._cache: dict = {}

    def sign_digest(self, signer: int, digest: bytes) -> bytes:
        raise NotImplementedError

    def verify_digest(self, signer: int, digest: bytes, signature: bytes) -> bool:
        raise NotImplementedError

    def sign(self, kind: str, view: int, seq: int, digest: bytes, sender: int,
             body=None) -> SignedMessage:
        signed = sha256(signing_bytes(kind, view, seq, digest, sender, body))
        msg = SignedMessage(kind, view, seq, digest, sender, body,
                            self.sign_digest(sender, signed))
        msg.__dict__["signed_digest"] = signed
        return msg

    def verify_message(self, msg: SignedMessage) -> bool:
        if not isinstance(msg, SignedMessage) or not 0 <= msg.sender < self.n:
            return False
        key = (msg.sender, msg.signed_digest, msg.signature)
        ok = self._cache.get(key)
        if ok is None:
            ok = self.verify_digest(msg.sender, msg.signed_digest, msg.signature)
            self._cache[key] = ok
        return ok

    def signer_for(self, replica_id: int) -> "Signer":
        return Signer(self, replica_id)


class Signer:
    """Signing capability bound to one replica id; it cannot sign as anyone else."""

    def __init__(self, auth: Authenticator, replica_id: int):
        self.auth = auth
        self.id = replica_id

    def sign(self, kind: str, view: int, seq: int, digest: bytes, body=None) -> SignedMessage:
        return self.auth.sign(kind, view, seq, digest, self.id, body)


class KeyedDigestAuthenticator(Authenticator):
    """Deterministic test scheme: HMAC-SHA256 under a secret derived from (seed, id)."""

    name = "hmac-sha256"

    def __init__(self, n: int, seed: bytes = b"proteus"):
        super().__init__(n)
        self._keys = [hashlib.sha256(b"key|" + seed + b"|" + str(i).encode()).digest()
                      for i in range(n)]

    def sign_digest(self, signer: int, digest: bytes) -> bytes:
        return hmac.new(self._keys[signer], digest, hashlib.sha256).digest()

    def verify_digest(self, signer: int, digest: bytes, signature: bytes) -> bool:
        if not 0 <= signer < self.n:
            return False
        return hmac.compare_digest(self.sign_digest(signer, digest), signature)


class Ed25519Authenticator(Authenticator):
    """Ed25519 signatures with keys derived deterministically from (seed, id)."""

    name = "ed25519"

    def __init__(self, n: int, seed: bytes = b"proteus"):
        super().__init__(n)
        from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PrivateKey

        self._private = [
            Ed25519PrivateKey.from_private_bytes(
                hashlib.sha256(b"ed25519|" + seed + b"|" + str(i).encode()).digest())
            for i in range(n)
        ]
        self._public = [k.public_key() for k in self._private]

    def sign_digest(self, signer: int, digest: bytes) -> bytes:
        return self._private[signer].sign(digest)

    def verify_digest(self, signer: int, digest: bytes, signature: bytes) -> bool:
        from cryptography.exceptions import InvalidSignature

        try:
            self._public[signer].verify(signature, digest)
        except (InvalidSignature, ValueError):
            return False
        return True


SCHEMES = {
    KeyedDigestAuthenticator.name: KeyedDigestAuthenticator,
    Ed25519Authenticator.name: Ed25519Authenticator,
}
