"""Delegation certificates: the one-time-signed credential.

A certificate binds the principal's identity and public key, the agent's
weight-hash identity, a delegation level, the constraint and trigger sets,
the registered target endpoints, and a half-open validity window
[t_issue, t_expire) under a single signature. After issuance the
certificate is immutable; every boundary decision traces back to it.

Canonical serialization is length-prefixed field concatenation in a fixed
field order, with the constraint/trigger/target sets sorted by their
encoded bytes. It is injective and implementation-neutral; the certificate
id is the first 16 bytes (hex) of the SHA-256 of the canonical form, so
equal ids imply equal content.

The wire format is the canonical bytes followed by the suite-tagged
signature. A structured-text export (protocol field names id_H, pk_H, h_A,
sigma_H, ...) is provided for the console and evidence records.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, replace
from enum import IntEnum

from . import codec
from .crypto import DIGEST_LEN, SUITE_NAMES, CryptoProvider, sha256
from .errors import InvalidWindow, SigningFailure
from .policy import Constraint, EscalationTrigger, validate_policy

CERT_ID_HEX_LEN = 32  # first 16 bytes of the canonical digest


class DelegationLevel(IntEnum):
    LIMITED = 1
    GENERAL = 2
    FULL = 3


class CertCheck(IntEnum):
    """verify_certificate outcome; sub-checks run signature -> temporal -> identity."""

    OK = 0
    SIGNATURE_FAILURE = 1
    TEMPORAL_FAILURE = 2
    IDENTITY_FAILURE = 3


@dataclass(frozen=True)
class TargetEndpoint:
    target_id: str
    address: str

    def canonical_bytes(self) -> bytes:
        return codec.enc_str(self.target_id) + codec.enc_str(self.address)

    @classmethod
    def from_bytes(cls, data: bytes) -> "TargetEndpoint":
        r = codec.Reader(data)
        return cls(target_id=r.str_(), address=r.str_())


@dataclass(frozen=True)
class DelegationCertificate:
    principal_id: str  # id_H
    principal_pubkey: bytes  # pk_H
    suite_id: int
    agent_id: str  # id_A
    agent_hash: bytes  # h_A, sha256 of agent model weights
    level: DelegationLevel
    constraints: tuple[Constraint, ...]
    triggers: tuple[EscalationTrigger, ...]
    targets: tuple[TargetEndpoint, ...]
    t_issue: int
    t_expire: int
    semantic_auditor_pubkey: bytes | None = None
    signature: bytes = b""  # sigma_H

    def validate_shape(self) -> None:
        if len(self.agent_hash) != DIGEST_LEN:
            raise ValueError("agent_hash must be exactly 32 bytes")
        if self.t_issue >= self.t_expire:
            raise InvalidWindow(f"t_issue {self.t_issue} >= t_expire {self.t_expire}")
        validate_policy(self.constraints, self.triggers)
        seen = set()
        for t in self.targets:
            if t.target_id in seen:
                raise ValueError(f"duplicate target_id {t.target_id!r}")
            seen.add(t.target_id)

    @functools.cached_property
    def canonical(self) -> bytes:
        return canonical_bytes(self)

    @functools.cached_property
    def cert_id(self) -> str:
        return sha256(self.canonical).hex()[:CERT_ID_HEX_LEN]


def canonical_bytes(cert: DelegationCertificate) -> bytes:
    """Signing input: every field except the signature, in fixed order."""
    return b"".join(
        (
            codec.enc_str(cert.principal_id),
            codec.enc_u8(cert.suite_id),
            codec.enc_bytes(cert.principal_pubkey),
            codec.enc_str(cert.agent_id),
            cert.agent_hash,
            codec.enc_u8(cert.level),
            codec.enc_list((c.canonical_bytes() for c in cert.constraints), sort=True),
            codec.enc_list((t.canonical_bytes() for t in cert.triggers), sort=True),
            codec.enc_list((t.canonical_bytes() for t in cert.targets), sort=True),
            codec.enc_i64(cert.t_issue),
            codec.enc_i64(cert.t_expire),
            codec.enc_opt_bytes(cert.semantic_auditor_pubkey),
        )
    )


def issue(
    cert: DelegationCertificate,
    provider: CryptoProvider,
    principal_secret: bytes,
    chains=None,
    now: int | None = None,
) -> DelegationCertificate:
    """Sign an unsigned certificate.

    The signature covers sha256(canonical_bytes). When a ChainSet is given,
    a Tier 2 CERT_ISSUED entry (counter-signed by the principal) records
    the issuance.
    """
    cert.validate_shape()
    payload = sha256(canonical_bytes(cert))
    signature = provider.sign(principal_secret, cert.suite_id, payload)
    if not signature:
        raise SigningFailure("empty signature")
    signed = replace(cert, signature=signature)
    if chains is not None:
        body = codec.enc_str(signed.cert_id) + codec.enc_bytes(to_wire(signed))
        counter = provider.sign(principal_secret, cert.suite_id, body)
        chains.t2.append(
            kind="CERT_ISSUED",
            body=body,
            timestamp=now if now is not None else signed.t_issue,
            counter_signature=counter,
        )
    return signed


def verify_certificate(
    cert: DelegationCertificate,
    provider: CryptoProvider,
    now: int,
    presented_agent_hash: bytes,
) -> CertCheck:
    """Full certificate check; returns the first failing sub-check.

    Signature is checked before the validity window so a forged certificate
    never learns whether its window would have been live.
    """
    payload = sha256(cert.canonical)
    if not provider.verify(cert.principal_pubkey, cert.suite_id, payload, cert.signature):
        return CertCheck.SIGNATURE_FAILURE
    if not cert.t_issue <= now < cert.t_expire:
        return CertCheck.TEMPORAL_FAILURE
    if presented_agent_hash != cert.agent_hash:
        return CertCheck.IDENTITY_FAILURE
    return CertCheck.OK


def to_wire(cert: DelegationCertificate) -> bytes:
    return cert.canonical + codec.enc_u8(cert.suite_id) + codec.enc_bytes(cert.signature)


def from_wire(data: bytes) -> DelegationCertificate:
    r = codec.Reader(data)
    principal_id = r.str_()
    suite_id = r.u8()
    principal_pubkey = r.bytes_()
    agent_id = r.str_()
    agent_hash = r.fixed(DIGEST_LEN)
    level = DelegationLevel(r.u8())
    constraints = tuple(Constraint.from_bytes(b) for b in r.list_())
    triggers = tuple(EscalationTrigger.from_bytes(b) for b in r.list_())
    targets = tuple(TargetEndpoint.from_bytes(b) for b in r.list_())
    t_issue = r.i64()
    t_expire = r.i64()
    sem = r.opt_bytes()
    trailer_suite = r.u8()
    signature = r.bytes_()
    if not r.at_end():
        raise ValueError("trailing bytes after certificate")
    if trailer_suite != suite_id:
        raise ValueError("wire suite tag does not match certificate suite")
    cert = DelegationCertificate(
        principal_id=principal_id,
        principal_pubkey=principal_pubkey,
        suite_id=suite_id,
        agent_id=agent_id,
        agent_hash=agent_hash,
        level=level,
        constraints=constraints,
        triggers=triggers,
        targets=targets,
        t_issue=t_issue,
        t_expire=t_expire,
        semantic_auditor_pubkey=sem,
        signature=signature,
    )
    cert.validate_shape()
    return cert


def to_text(cert: DelegationCertificate) -> str:
    """Human-readable export using the protocol's field names."""
    lines = [
        "-----BEGIN DELEGATION CERTIFICATE-----",
        f"cert_id: {cert.cert_id}",
        f"id_H: {cert.principal_id}",
        f"suite: {SUITE_NAMES.get(cert.suite_id, cert.suite_id)}",
        f"pk_H: {cert.principal_pubkey.hex()}",
        f"id_A: {cert.agent_id}",
        f"h_A: {cert.agent_hash.hex()}",
        f"level: {cert.level.name}",
        f"t_issue: {cert.t_issue}",
        f"t_expire: {cert.t_expire}",
    ]
    for c in sorted(cert.constraints, key=lambda c: c.constraint_id):
        parts = [f"kind={c.kind.name}", f"action={c.action.name}"]
        if c.max_amount is not None:
            parts.append(f"max_amount={c.max_amount}")
        if c.window_seconds is not None:
            parts.append(f"window_seconds={c.window_seconds}")
        for label, vals in (
            ("op_types", c.op_types),
            ("assets", c.assets),
            ("destinations", c.destinations),
        ):
            if vals:
                parts.append(f"{label}={{{','.join(sorted(vals))}}}")
        if c.window_start is not None:
            parts.append(f"daily=[{c.window_start},{c.window_end})")
        lines.append(f"constraint {c.constraint_id}: " + " ".join(parts))
    for t in sorted(cert.triggers, key=lambda t: t.trigger_id):
        parts = [f"kind={t.kind.name}"]
        if t.constraint_id:
            parts.append(f"constraint={t.constraint_id}")
        if t.fraction_ppm is not None:
            parts.append(f"fraction={t.fraction_ppm / 1e6:g}")
        if t.known_op_types:
            parts.append(f"known={{{','.join(sorted(t.known_op_types))}}}")
        if t.window_seconds is not None:
            parts.append(f"window_seconds={t.window_seconds}")
        if t.op_types:
            parts.append(f"op_types={{{','.join(sorted(t.op_types))}}}")
        if t.max_count is not None:
            parts.append(f"max_count={t.max_count}")
        if t.max_sum is not None:
            parts.append(f"max_sum={t.max_sum}")
        if t.timeout_seconds is not None:
            parts.append(f"timeout={t.timeout_seconds}")
        lines.append(f"trigger {t.trigger_id}: " + " ".join(parts))
    for t in sorted(cert.targets, key=lambda t: t.target_id):
        lines.append(f"target {t.target_id}: {t.address}")
    if cert.semantic_auditor_pubkey is not None:
        lines.append(f"sem: {cert.semantic_auditor_pubkey.hex()}")
    lines.append(f"sigma_H: {cert.signature.hex()}")
    lines.append("-----END DELEGATION CERTIFICATE-----")
    return "\n".join(lines)
