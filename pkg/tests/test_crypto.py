from __future__ import annotations

import random

import pytest

from aith import crypto
from aith.crypto import (
    ML_DSA_87_SIG_LEN,
    SUITE_ML_DSA_87,
    SUITE_SIMULATED_MAC,
    CryptoProvider,
    register_mldsa_backend,
    sha256,
)
from aith.errors import SigningFailure, UnsupportedSuite

# published digest of the empty input for the standard hash function
SHA256_EMPTY = "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"


def test_sign_verify_roundtrip(provider, principal):
    msg = b"hello continuous delegation"
    sig = provider.sign(principal.secret, SUITE_SIMULATED_MAC, msg)
    assert len(sig) == 32
    assert provider.verify(principal.pubkey, SUITE_SIMULATED_MAC, msg, sig)


def test_flipped_bit_fails(provider, principal):
    msg = bytearray(b"some message to protect")
    sig = provider.sign(principal.secret, SUITE_SIMULATED_MAC, bytes(msg))
    msg[3] ^= 0x01
    assert not provider.verify(principal.pubkey, SUITE_SIMULATED_MAC, bytes(msg), sig)


def test_euf_behavioral_10k_mutations(provider, principal):
    """No mutated message verifies under the original signature."""
    rng = random.Random(42)
    failures = 0
    for i in range(10_000):
        msg = rng.randbytes(rng.randint(1, 64))
        sig = provider.sign(principal.secret, SUITE_SIMULATED_MAC, msg)
        mutated = bytearray(msg)
        pos = rng.randrange(len(mutated))
        bit = 1 << rng.randrange(8)
        mutated[pos] ^= bit
        if provider.verify(principal.pubkey, SUITE_SIMULATED_MAC, bytes(mutated), sig):
            failures += 1
    assert failures == 0


def test_suite_confusion_rejected(provider, principal):
    """A MAC-suite signature never verifies under the lattice suite tag."""
    msg = b"suite binding"
    sig = provider.sign(principal.secret, SUITE_SIMULATED_MAC, msg)
    assert not provider.verify(principal.pubkey, SUITE_ML_DSA_87, msg, sig)


def test_unknown_pubkey_rejected(provider, principal):
    sig = provider.sign(principal.secret, SUITE_SIMULATED_MAC, b"m")
    assert not provider.verify(sha256(b"not-registered"), SUITE_SIMULATED_MAC, b"m", sig)


def test_hash_empty_is_published_constant():
    assert sha256(b"").hex() == SHA256_EMPTY


def test_hash_deterministic():
    assert sha256(b"same input") == sha256(b"same input")


def test_hash_collision_scan_10k():
    """Oracle: exhaustive uniqueness over a corpus of distinct messages."""
    corpus = {f"message-{i}".encode() for i in range(10_000)}
    digests = {sha256(m) for m in corpus}
    assert len(digests) == len(corpus)
    assert all(len(d) == 32 for d in digests)


def test_bad_secret_length(provider):
    with pytest.raises(SigningFailure):
        provider.sign(b"short", SUITE_SIMULATED_MAC, b"m")


def test_counters(provider, principal):
    provider.reset_counters()
    sig = provider.sign(principal.secret, SUITE_SIMULATED_MAC, b"m")
    provider.verify(principal.pubkey, SUITE_SIMULATED_MAC, b"m", sig)
    assert (provider.sign_count, provider.verify_count) == (1, 1)


class _StubMlDsa:
    """Length-faithful stand-in: real lattice signing is an external plugin."""

    def __init__(self, sig_len=ML_DSA_87_SIG_LEN):
        self.sig_len = sig_len

    def generate_keypair(self):
        return b"\x01" * 64, b"\x02" * crypto.ML_DSA_87_PK_LEN

    def sign(self, secret, message):
        base = sha256(secret + message)
        return (base * ((self.sig_len // 32) + 1))[: self.sig_len]

    def verify(self, pubkey, message, signature):
        return len(signature) == self.sig_len


class TestMlDsaSlot:
    def teardown_method(self):
        register_mldsa_backend(None)

    def test_unavailable_without_backend(self, provider):
        with pytest.raises(UnsupportedSuite):
            provider.sign(b"\x01" * 64, SUITE_ML_DSA_87, b"m")

    def test_signature_length_contract(self, provider):
        """The provider pins the 4,627-byte ML-DSA-87 signature size."""
        register_mldsa_backend(_StubMlDsa())
        key = provider.generate_keypair(SUITE_ML_DSA_87)
        sig = provider.sign(key.secret, SUITE_ML_DSA_87, b"m")
        assert len(sig) == 4627
        assert provider.verify(key.pubkey, SUITE_ML_DSA_87, b"m", sig)

    def test_wrong_length_backend_rejected(self, provider):
        register_mldsa_backend(_StubMlDsa(sig_len=100))
        with pytest.raises(SigningFailure, match="4627"):
            provider.sign(b"\x01" * 64, SUITE_ML_DSA_87, b"m")
