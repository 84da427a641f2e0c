"""Evidence extraction from the responsibility chains.

An evidence bundle is a self-contained JSON document holding, per tier,
a contiguous run of chain entries covering the requested time range plus
the hash context needed to verify the run without the rest of the chain:
the predecessor hash just before the run and the hash of the run's last
entry. Anyone holding the bundle can re-derive every link; trimming,
reordering, or editing any entry (or the claimed endpoints) is detectable
offline.

Entries matching the requested cert_id are flagged; surrounding entries in
the range stay in the bundle because the hash walk needs contiguity.
Extraction refuses to run on a chain that fails verification.
"""

from __future__ import annotations

import json
import time
from typing import Iterable

from .chain import ChainEntry, ChainSet, Tier
from .crypto import ZERO_DIGEST, sha256
from .errors import EmptyRange, TamperedChain

BUNDLE_FORMAT = "aith-evidence/1"


def _entry_json(e: ChainEntry, matches: bool) -> dict:
    return {
        "seq": e.seq,
        "kind": e.kind,
        "timestamp": e.timestamp,
        "cert_id": e.body_cert_id(),
        "matches": matches,
        "record": e.record_bytes().hex(),
    }


def extract_evidence(
    chains: ChainSet,
    from_ts: int,
    to_ts: int,
    cert_id: str | None = None,
    tiers: Iterable[Tier] | None = None,
) -> dict:
    """Build a standalone evidence bundle for [from_ts, to_ts] (inclusive)."""
    selected = [Tier(t) for t in tiers] if tiers is not None else list(Tier)
    bundle_tiers: dict[str, dict] = {}
    matched = 0
    for tier in selected:
        chain = chains.chain(tier)
        bad = chain.verify()
        if bad is not None:
            raise TamperedChain(bad, f"tier {int(tier)}")
        rows = [e for e in chain.entries if from_ts <= e.timestamp <= to_ts]
        if not rows:
            continue
        start = rows[0].seq
        predecessor = chain.entries[start - 1].entry_hash if start > 0 else ZERO_DIGEST
        entries = []
        for e in rows:
            m = cert_id is None or e.body_cert_id() == cert_id
            matched += m
            entries.append(_entry_json(e, m))
        bundle_tiers[str(int(tier))] = {
            "start_seq": start,
            "predecessor_hash": predecessor.hex(),
            "end_hash": rows[-1].entry_hash.hex(),
            "entries": entries,
        }
    if matched == 0:
        raise EmptyRange(
            f"no entries in [{from_ts}, {to_ts}]"
            + (f" for cert {cert_id}" if cert_id else "")
        )
    return {
        "format": BUNDLE_FORMAT,
        "created_at": int(time.time()),
        "filter": {
            "from_ts": from_ts,
            "to_ts": to_ts,
            "cert_id": cert_id,
            "tiers": [int(t) for t in selected],
        },
        "tiers": bundle_tiers,
    }


def verify_evidence(bundle: dict) -> tuple[bool, str]:
    """Standalone bundle check; needs no access to the source chains."""
    if bundle.get("format") != BUNDLE_FORMAT:
        return False, f"unknown bundle format {bundle.get('format')!r}"
    tiers = bundle.get("tiers", {})
    if not tiers:
        return False, "bundle has no tiers"
    for tier_key, seg in tiers.items():
        try:
            prev = bytes.fromhex(seg["predecessor_hash"])
            end = bytes.fromhex(seg["end_hash"])
            start_seq = int(seg["start_seq"])
        except (KeyError, ValueError) as exc:
            return False, f"tier {tier_key}: malformed segment header ({exc})"
        expected_seq = start_seq
        last_hash = prev
        for row in seg.get("entries", []):
            try:
                entry = ChainEntry.from_record(bytes.fromhex(row["record"]))
            except (KeyError, ValueError) as exc:
                return False, f"tier {tier_key} seq {expected_seq}: bad record ({exc})"
            if entry.seq != expected_seq:
                return False, f"tier {tier_key}: seq gap at {expected_seq}"
            if int(entry.tier) != int(tier_key):
                return False, f"tier {tier_key} seq {entry.seq}: wrong tier tag"
            if entry.prev_hash != last_hash:
                return False, f"tier {tier_key} seq {entry.seq}: broken prev link"
            if sha256(entry.hash_input()) != entry.entry_hash:
                return False, f"tier {tier_key} seq {entry.seq}: entry hash mismatch"
            if (entry.seq, entry.kind, entry.timestamp, entry.body_cert_id()) != (
                row["seq"], row["kind"], row["timestamp"], row["cert_id"],
            ):
                return False, f"tier {tier_key} seq {entry.seq}: summary/record mismatch"
            last_hash = entry.entry_hash
            expected_seq += 1
        if last_hash != end:
            return False, f"tier {tier_key}: end hash mismatch"
    return True, "ok"


def bundle_to_json(bundle: dict) -> str:
    return json.dumps(bundle, indent=2, sort_keys=True)


def bundle_from_json(text: str) -> dict:
    return json.loads(text)
