"""Three-tier tamper-evident audit chain.

Tier 1 records every boundary decision the engine makes, Tier 2 records
human confirmations (counter-signed) and system dispositions of escalated
operations, Tier 3 records executions. The tiers are three physically
separate hash chains cross-referenced by cert_id/op_id/ticket_id carried
in the entry bodies; every body starts with the owning cert_id so entries
can be joined without kind-specific parsing.

Each entry hashes all of its fields — seq, tier, kind, timestamp, body,
prev_hash and the counter-signature — so any single-field mutation,
deletion, insertion or reorder breaks either an entry hash or a prev_hash
link. Genesis entries link to 32 zero bytes.

Persistence is an append-only record file per chain (u32 length prefix per
record). On open the whole chain is re-verified before new appends are
accepted; a trailing partial record (crash artifact) is truncated away.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, replace
from enum import IntEnum
from pathlib import Path
from typing import Callable, Iterable

from . import codec
from .crypto import DIGEST_LEN, ZERO_DIGEST, sha256
from .errors import ClockRegression, MissingCounterSignature, TamperedChain


class Tier(IntEnum):
    T1_AI_DECISION = 1
    T2_HUMAN_CONFIRMATION = 2
    T3_SYSTEM_EXECUTION = 3


# Entry kinds. Tier 2 kinds marked "system" are signed by the verifier's
# own key rather than the principal's.
KIND_OP_DECISION = "OP_DECISION"  # T1
KIND_CERT_ISSUED = "CERT_ISSUED"  # T2, principal
KIND_CERT_INSTALLED = "CERT_INSTALLED"  # T1
KIND_ESCALATION_RAISED = "ESCALATION_RAISED"  # T1
KIND_APPROVAL = "APPROVAL"  # T2, principal
KIND_DENY = "DENY"  # T2, principal
KIND_MODIFY = "MODIFY"  # T2, principal
KIND_TIMEOUT_DENY = "TIMEOUT_DENY"  # T2, system
KIND_DENIED_BY_REVOCATION = "DENIED_BY_REVOCATION"  # T2, system
KIND_EXECUTION = "EXECUTION"  # T3
KIND_REVOCATION = "REVOCATION"  # T2, principal
KIND_BASELINE_RESET = "BASELINE_RESET"  # T1
KIND_PROTOCOL_REJECT = "PROTOCOL_REJECT"  # T1: replay / clock regression
KIND_SUSPEND = "SUSPEND"  # T2, principal
KIND_RESUME = "RESUME"  # T2, principal

SYSTEM_SIGNED_KINDS = frozenset({KIND_TIMEOUT_DENY, KIND_DENIED_BY_REVOCATION})


@dataclass(frozen=True)
class ChainEntry:
    seq: int
    tier: Tier
    kind: str
    timestamp: int
    body: bytes
    prev_hash: bytes
    entry_hash: bytes
    counter_signature: bytes | None = None

    def hash_input(self) -> bytes:
        return b"".join(
            (
                codec.enc_i64(self.seq),
                codec.enc_u8(self.tier),
                codec.enc_str(self.kind),
                codec.enc_i64(self.timestamp),
                codec.enc_bytes(self.body),
                self.prev_hash,
                codec.enc_opt_bytes(self.counter_signature),
            )
        )

    def record_bytes(self) -> bytes:
        return self.hash_input() + self.entry_hash

    @classmethod
    def from_record(cls, data: bytes) -> "ChainEntry":
        r = codec.Reader(data)
        entry = cls(
            seq=r.i64(),
            tier=Tier(r.u8()),
            kind=r.str_(),
            timestamp=r.i64(),
            body=r.bytes_(),
            prev_hash=r.fixed(DIGEST_LEN),
            counter_signature=r.opt_bytes(),
            entry_hash=r.fixed(DIGEST_LEN),
        )
        if not r.at_end():
            raise ValueError("trailing bytes in chain record")
        return entry

    def body_cert_id(self) -> str:
        return codec.Reader(self.body).str_()


# Optional per-append signature validation hook: (kind, body, signature) -> bool.
SignatureCheck = Callable[[str, bytes, bytes], bool]


class Chain:
    """Single-tier hash chain, optionally file-backed.

    Appends are serialized by the owning session/service; verification may
    run concurrently against a snapshot length.
    """

    def __init__(
        self,
        tier: Tier,
        path: str | Path | None = None,
        signature_check: SignatureCheck | None = None,
        read_only: bool = False,
    ):
        self.tier = tier
        self.entries: list[ChainEntry] = []
        self.signature_check = signature_check
        self._path = Path(path) if path is not None else None
        self._read_only = read_only
        self._file = None
        if self._path is not None:
            self._load()
            if not read_only:
                self._file = open(self._path, "ab")

    # -- persistence -----------------------------------------------------

    def _load(self) -> None:
        """Read and verify every record.

        A partial trailing record is a crash artifact: the owning verifier
        truncates it away and resumes. In read_only mode (offline audit
        tooling) nothing is forgiven and nothing is mutated — any
        undecodable tail is reported as tampering.
        """
        if not self._path.exists():
            return
        raw = self._path.read_bytes()
        pos = 0
        good_end = 0
        while pos + 4 <= len(raw):
            length = codec.Reader(raw[pos:pos + 4]).u32()
            if pos + 4 + length > len(raw):
                break
            self.entries.append(ChainEntry.from_record(raw[pos + 4:pos + 4 + length]))
            pos += 4 + length
            good_end = pos
        if good_end < len(raw):
            if self._read_only:
                raise TamperedChain(
                    len(self.entries),
                    f"{len(raw) - good_end} undecodable trailing bytes in {self._path}",
                )
            with open(self._path, "r+b") as f:
                f.truncate(good_end)
        bad = self.verify()
        if bad is not None:
            raise TamperedChain(bad, f"on load of {self._path}")

    def close(self) -> None:
        if self._file is not None:
            self._file.close()
            self._file = None

    # -- append / verify ---------------------------------------------------

    @property
    def head_hash(self) -> bytes:
        return self.entries[-1].entry_hash if self.entries else ZERO_DIGEST

    def __len__(self) -> int:
        return len(self.entries)

    def append(
        self,
        kind: str,
        body: bytes,
        timestamp: int,
        counter_signature: bytes | None = None,
    ) -> ChainEntry:
        if self.tier == Tier.T2_HUMAN_CONFIRMATION:
            if counter_signature is None:
                raise MissingCounterSignature(f"tier 2 entry {kind} needs a counter-signature")
            if self.signature_check is not None and not self.signature_check(
                kind, body, counter_signature
            ):
                raise MissingCounterSignature(f"tier 2 entry {kind}: signature does not verify")
        if self.entries and timestamp < self.entries[-1].timestamp:
            raise ClockRegression(
                f"chain timestamp {timestamp} < previous {self.entries[-1].timestamp}"
            )
        seq = len(self.entries)
        partial = ChainEntry(
            seq=seq,
            tier=self.tier,
            kind=kind,
            timestamp=timestamp,
            body=body,
            prev_hash=self.head_hash,
            entry_hash=b"",
            counter_signature=counter_signature,
        )
        entry = replace(partial, entry_hash=sha256(partial.hash_input()))
        if self._file is not None:
            record = entry.record_bytes()
            self._file.write(codec.enc_u32(len(record)) + record)
            self._file.flush()
        self.entries.append(entry)
        return entry

    def verify(self, upto: int | None = None) -> int | None:
        """Recompute every hash and link; return the first bad seq, or None."""
        prev = ZERO_DIGEST
        entries = self.entries if upto is None else self.entries[:upto]
        for i, e in enumerate(entries):
            if e.seq != i:
                return i
            if e.prev_hash != prev:
                return i
            if sha256(e.hash_input()) != e.entry_hash:
                return i
            prev = e.entry_hash
        return None


class ChainSet:
    """The three tier chains of one deployment."""

    def __init__(
        self,
        data_dir: str | Path | None = None,
        signature_check: SignatureCheck | None = None,
        read_only: bool = False,
    ):
        paths = {1: None, 2: None, 3: None}
        if data_dir is not None:
            d = Path(data_dir)
            if not read_only:
                os.makedirs(d, exist_ok=True)
            paths = {t: d / f"tier{t}.chain" for t in (1, 2, 3)}
        self.t1 = Chain(Tier.T1_AI_DECISION, paths[1], read_only=read_only)
        self.t2 = Chain(Tier.T2_HUMAN_CONFIRMATION, paths[2], signature_check,
                        read_only=read_only)
        self.t3 = Chain(Tier.T3_SYSTEM_EXECUTION, paths[3], read_only=read_only)

    def tiers(self) -> dict[Tier, Chain]:
        return {Tier.T1_AI_DECISION: self.t1, Tier.T2_HUMAN_CONFIRMATION: self.t2,
                Tier.T3_SYSTEM_EXECUTION: self.t3}

    def chain(self, tier: Tier | int) -> Chain:
        return self.tiers()[Tier(tier)]

    def verify_all(self) -> dict[Tier, int | None]:
        return {tier: chain.verify() for tier, chain in self.tiers().items()}

    def all_ok(self) -> bool:
        return all(v is None for v in self.verify_all().values())

    def close(self) -> None:
        for chain in self.tiers().values():
            chain.close()

    def entries(self, tiers: Iterable[Tier] | None = None) -> list[ChainEntry]:
        selected = list(tiers) if tiers is not None else list(Tier)
        out: list[ChainEntry] = []
        for t in selected:
            out.extend(self.chain(t).entries)
        return out
