"""Signature and hash substrate.

Two signature suites share one sign/verify interface so the rest of the
protocol never depends on a concrete scheme:

* SIMULATED_MAC — HMAC-SHA-256 under a 32-byte shared secret. This is the
  desk-scale default and is NOT a public-key signature: verification
  requires the verifier to hold the same secret, which is acceptable only
  when verifier and principal console are co-deployed. The "public key" is
  sha256(secret), used purely as a lookup handle.
* ML_DSA_87 — slot for a FIPS 204 lattice signature backend. No backend
  ships with this package; register one with register_mldsa_backend().
  The provider enforces the ML-DSA-87 signature length (4,627 bytes) on
  whatever backend is plugged in.

The suite tag is mixed into every MAC/signature input, so a signature
produced under one suite can never verify under another.

Every sign/verify call is counted, which lets tests assert that the cached
boundary-check hot path performs zero cryptographic operations.
"""

from __future__ import annotations

import hashlib
import hmac
import secrets
from dataclasses import dataclass
from typing import Protocol

from .errors import SigningFailure, UnsupportedSuite

SUITE_SIMULATED_MAC = 1
SUITE_ML_DSA_87 = 2

SUITE_NAMES = {SUITE_SIMULATED_MAC: "SIMULATED_MAC", SUITE_ML_DSA_87: "ML_DSA_87"}

DIGEST_LEN = 32
ZERO_DIGEST = b"\x00" * DIGEST_LEN

MAC_SECRET_LEN = 32
MAC_SIG_LEN = 32
ML_DSA_87_SIG_LEN = 4627
ML_DSA_87_PK_LEN = 2592


def sha256(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def is_digest(value: bytes) -> bool:
    return isinstance(value, bytes) and len(value) == DIGEST_LEN


@dataclass(frozen=True)
class KeyPair:
    suite_id: int
    pubkey: bytes
    secret: bytes


class MlDsaBackend(Protocol):
    """Pluggable ML-DSA-87 implementation."""

    def generate_keypair(self) -> tuple[bytes, bytes]:
        """Return (secret, pubkey)."""
        ...

    def sign(self, secret: bytes, message: bytes) -> bytes: ...

    def verify(self, pubkey: bytes, message: bytes, signature: bytes) -> bool: ...


_mldsa_backend: MlDsaBackend | None = None


def register_mldsa_backend(backend: MlDsaBackend | None) -> None:
    global _mldsa_backend
    _mldsa_backend = backend


def _tagged(suite_id: int, message: bytes) -> bytes:
    return bytes([suite_id]) + message


class CryptoProvider:
    """Suite dispatch, key registry, and operation counters.

    Thread-safe in the free-threading sense that matters here: all state
    mutation is single-attribute dict/int updates and all operations are
    pure given their inputs.
    """

    def __init__(self) -> None:
        self._mac_secrets: dict[bytes, bytes] = {}
        self.sign_count = 0
        self.verify_count = 0

    # -- key management -------------------------------------------------

    def generate_keypair(self, suite_id: int = SUITE_SIMULATED_MAC) -> KeyPair:
        if suite_id == SUITE_SIMULATED_MAC:
            secret = secrets.token_bytes(MAC_SECRET_LEN)
            return self.register_secret(secret)
        if suite_id == SUITE_ML_DSA_87:
            backend = self._require_backend()
            secret, pubkey = backend.generate_keypair()
            return KeyPair(SUITE_ML_DSA_87, pubkey, secret)
        raise UnsupportedSuite(f"unknown suite {suite_id}")

    def register_secret(self, secret: bytes) -> KeyPair:
        """Register a SIMULATED_MAC shared secret; pubkey = sha256(secret)."""
        if len(secret) != MAC_SECRET_LEN:
            raise SigningFailure(f"SIMULATED_MAC secret must be {MAC_SECRET_LEN} bytes")
        pubkey = sha256(secret)
        self._mac_secrets[pubkey] = secret
        return KeyPair(SUITE_SIMULATED_MAC, pubkey, secret)

    def knows_pubkey(self, pubkey: bytes) -> bool:
        return pubkey in self._mac_secrets

    # -- sign / verify ---------------------------------------------------

    def sign(self, secret: bytes, suite_id: int, message: bytes) -> bytes:
        self.sign_count += 1
        if suite_id == SUITE_SIMULATED_MAC:
            if len(secret) != MAC_SECRET_LEN:
                raise SigningFailure(f"SIMULATED_MAC secret must be {MAC_SECRET_LEN} bytes")
            return hmac.new(secret, _tagged(suite_id, message), hashlib.sha256).digest()
        if suite_id == SUITE_ML_DSA_87:
            backend = self._require_backend()
            sig = backend.sign(secret, _tagged(suite_id, message))
            if len(sig) != ML_DSA_87_SIG_LEN:
                raise SigningFailure(
                    f"ML-DSA-87 backend produced {len(sig)}-byte signature, "
                    f"expected {ML_DSA_87_SIG_LEN}"
                )
            return sig
        raise UnsupportedSuite(f"unknown suite {suite_id}")

    def verify(self, pubkey: bytes, suite_id: int, message: bytes, signature: bytes) -> bool:
        self.verify_count += 1
        if suite_id == SUITE_SIMULATED_MAC:
            secret = self._mac_secrets.get(pubkey)
            if secret is None:
                return False
            expected = hmac.new(secret, _tagged(suite_id, message), hashlib.sha256).digest()
            return hmac.compare_digest(expected, signature)
        if suite_id == SUITE_ML_DSA_87:
            if _mldsa_backend is None:
                return False
            if len(signature) != ML_DSA_87_SIG_LEN:
                return False
            return _mldsa_backend.verify(pubkey, _tagged(suite_id, message), signature)
        return False

    def reset_counters(self) -> None:
        self.sign_count = 0
        self.verify_count = 0

    @staticmethod
    def _require_backend() -> MlDsaBackend:
        if _mldsa_backend is None:
            raise UnsupportedSuite("no ML-DSA-87 backend registered in this build")
        return _mldsa_backend
