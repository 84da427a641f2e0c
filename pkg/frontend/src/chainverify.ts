// Client-side re-verification of chain records for display integrity: the
// explorer recomputes every entry hash and link before trusting what it
// renders.

import { Reader, bytesToHex, hexToBytes } from "./codec.js";
import { sha256 } from "./crypto.js";
import { ChainEntryRow } from "./types.js";

export interface DecodedEntry {
  seq: number;
  tier: number;
  kind: string;
  timestamp: number;
  certId: string;
  prevHashHex: string;
  entryHashHex: string;
  counterSigned: boolean;
  hashInput: Uint8Array;
}

export function decodeRecord(recordHex: string): DecodedEntry {
  const record = hexToBytes(recordHex);
  const r = new Reader(record);
  const seq = r.i64();
  const tier = r.u8();
  const kind = r.str();
  const timestamp = r.i64();
  const body = r.bytes();
  const prevHash = r.fixed(32);
  const counterSig = r.optBytes();
  const entryHash = r.fixed(32);
  if (!r.atEnd()) throw new Error("trailing bytes in record");
  const certId = new Reader(body).str();
  return {
    seq,
    tier,
    kind,
    timestamp,
    certId,
    prevHashHex: bytesToHex(prevHash),
    entryHashHex: bytesToHex(entryHash),
    counterSigned: counterSig !== null,
    hashInput: record.subarray(0, record.length - 32),
  };
}

export interface VerifiedRow extends ChainEntryRow {
  verified: boolean;
  problem?: string;
}

/**
 * Recompute hashes and links over a contiguous run of entries.
 * previousHashHex anchors the first entry (zeros for a run from genesis).
 */
export async function verifyEntries(
  rows: ChainEntryRow[],
  previousHashHex?: string,
): Promise<{ ok: boolean; rows: VerifiedRow[]; firstBadSeq: number | null }> {
  let prev = previousHashHex ?? null;
  let firstBad: number | null = null;
  const out: VerifiedRow[] = [];
  for (const row of rows) {
    let verified = true;
    let problem: string | undefined;
    try {
      const decoded = decodeRecord(row.record);
      const recomputed = bytesToHex(await sha256(decoded.hashInput));
      if (recomputed !== decoded.entryHashHex) {
        verified = false;
        problem = "entry hash mismatch";
      } else if (decoded.entryHashHex !== row.entry_hash) {
        verified = false;
        problem = "summary disagrees with record";
      } else if (prev !== null && decoded.prevHashHex !== prev) {
        verified = false;
        problem = "broken prev link";
      }
      prev = decoded.entryHashHex;
    } catch (err) {
      verified = false;
      problem = String(err);
      prev = null;
    }
    if (!verified && firstBad === null) firstBad = row.seq;
    out.push({ ...row, verified, problem });
  }
  return { ok: firstBad === null, rows: out, firstBadSeq: firstBad };
}
