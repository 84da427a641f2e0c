// Client-side construction and signing of every management object: the
// console holds the principal key (desk-scale build) and the verifier
// only ever sees finished signatures.

import {
  bytesToHex,
  concat,
  encBytes,
  encI64,
  encList,
  encOptBytes,
  encOptI64,
  encOptStr,
  encStr,
  encStrSet,
  encU8,
  hexToBytes,
} from "./codec.js";
import { sha256, signDigest, signRaw } from "./crypto.js";
import {
  CONSTRAINT_KIND,
  CertificateForm,
  ConstraintForm,
  LEVEL,
  TRIGGER_KIND,
  Ticket,
  TriggerForm,
  WireOperation,
} from "./types.js";

export function constraintBytes(c: ConstraintForm): Uint8Array {
  return concat([
    encStr(c.constraintId),
    encU8(CONSTRAINT_KIND[c.kind]),
    encU8(c.action === "BLOCK" ? 1 : 2),
    encOptI64(c.maxAmount),
    encOptI64(c.windowSeconds),
    encStrSet(c.opTypes ?? []),
    encStrSet(c.assets ?? []),
    encStrSet(c.destinations ?? []),
    encOptI64(c.windowStart),
    encOptI64(c.windowEnd),
  ]);
}

export function triggerBytes(t: TriggerForm): Uint8Array {
  return concat([
    encStr(t.triggerId),
    encU8(TRIGGER_KIND[t.kind]),
    encOptStr(t.constraintId),
    encOptI64(t.fractionPpm),
    encStrSet(t.knownOpTypes ?? []),
    encOptI64(t.windowSeconds),
    encStrSet(t.opTypes ?? []),
    encOptI64(t.maxCount),
    encOptI64(t.maxSum),
    encOptI64(t.timeoutSeconds),
  ]);
}

export function certificateCanonicalBytes(form: CertificateForm): Uint8Array {
  return concat([
    encStr(form.principalId),
    encU8(form.suite),
    encBytes(hexToBytes(form.principalPubkeyHex)),
    encStr(form.agentId),
    hexToBytes(form.agentHashHex),
    encU8(LEVEL[form.level]),
    encList(form.constraints.map(constraintBytes), true),
    encList(form.triggers.map(triggerBytes), true),
    encList(
      form.targets.map((t) => concat([encStr(t.targetId), encStr(t.address)])),
      true,
    ),
    encI64(form.tIssue),
    encI64(form.tExpire),
    encOptBytes(form.semHex ? hexToBytes(form.semHex) : null),
  ]);
}

export async function certId(form: CertificateForm): Promise<string> {
  const digest = await sha256(certificateCanonicalBytes(form));
  return bytesToHex(digest).slice(0, 32);
}

export async function buildSignedCertificate(
  form: CertificateForm,
  secret: Uint8Array,
): Promise<{ wireHex: string; certId: string }> {
  const canonical = certificateCanonicalBytes(form);
  const sig = await signDigest(secret, form.suite, canonical);
  const wire = concat([canonical, encU8(form.suite), encBytes(sig)]);
  const digest = await sha256(canonical);
  return { wireHex: bytesToHex(wire), certId: bytesToHex(digest).slice(0, 32) };
}

export function operationCanonicalBytes(op: WireOperation): Uint8Array {
  return concat([
    encStr(op.op_id),
    encStr(op.op_type),
    encI64(op.timestamp),
    encOptI64(op.amount),
    encOptStr(op.asset),
    encOptStr(op.destination),
    op.payload_digest ? hexToBytes(op.payload_digest) : new Uint8Array(32),
  ]);
}

export const DECISION = { APPROVE: 1, DENY: 2, MODIFY: 3 } as const;
export type DecisionName = keyof typeof DECISION;

export async function decisionPayload(
  ticket: Ticket,
  decision: DecisionName,
  modifiedOp?: WireOperation,
): Promise<Uint8Array> {
  const opDigest = await sha256(operationCanonicalBytes(ticket.op));
  const parts = [
    encStr(ticket.cert_id),
    encStr(ticket.ticket_id),
    encU8(DECISION[decision]),
    opDigest,
  ];
  if (decision === "MODIFY") {
    if (!modifiedOp) throw new Error("MODIFY needs the replacement operation");
    parts.push(encBytes(operationCanonicalBytes(modifiedOp)));
  }
  return concat(parts);
}

export async function signDecision(
  secret: Uint8Array,
  suite: number,
  ticket: Ticket,
  decision: DecisionName,
  modifiedOp?: WireOperation,
): Promise<string> {
  const payload = await decisionPayload(ticket, decision, modifiedOp);
  return bytesToHex(await signRaw(secret, suite, payload));
}

export const REVOCATION_MODE = { IMMEDIATE: 1, GRACEFUL: 2, PARTIAL: 3 } as const;
export type RevocationModeName = keyof typeof REVOCATION_MODE;

export async function buildSignedRevocation(
  secret: Uint8Array,
  suite: number,
  certIdValue: string,
  mode: RevocationModeName,
  reason: string,
  timestamp: number,
  replacementWireHex?: string,
): Promise<string> {
  const canonical = concat([
    encStr(certIdValue),
    encU8(REVOCATION_MODE[mode]),
    encStr(reason),
    encI64(timestamp),
    encOptBytes(replacementWireHex ? hexToBytes(replacementWireHex) : null),
  ]);
  const sig = await signDigest(secret, suite, canonical);
  return bytesToHex(concat([canonical, encU8(suite), encBytes(sig)]));
}

export async function signAdminAction(
  secret: Uint8Array,
  suite: number,
  certIdValue: string,
  action: "suspend" | "resume",
  timestamp: number,
): Promise<string> {
  const payload = concat([encStr(certIdValue), encStr(action), encI64(timestamp)]);
  return bytesToHex(await signRaw(secret, suite, payload));
}
