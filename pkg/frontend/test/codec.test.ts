// Cross-implementation byte compatibility: this file recreates the
// verifier test suite's frozen golden certificate and must reproduce its
// canonical digest, cert id, and signature exactly.

import { describe, expect, it } from "vitest";

import { bytesToHex, encI64, encList, encStr, encU32 } from "../src/codec.js";
import { sha256, signDigest, SUITE_SIMULATED_MAC } from "../src/crypto.js";
import {
  buildSignedCertificate,
  certificateCanonicalBytes,
  decisionPayload,
  operationCanonicalBytes,
} from "../src/signer.js";
import { CertificateForm } from "../src/types.js";

const GOLDEN_DIGEST =
  "56432b231c85966e502b5eec0827e9f184ca23c2e3f8f77922641c63e48d56ae";
const GOLDEN_CERT_ID = "56432b231c85966e502b5eec0827e9f1";
const GOLDEN_SIGNATURE =
  "0638a956c42c869c5c9f98ce578f893096160abb5d5031ac80cf6f843c74f9bc";

const utf8 = (s: string) => new TextEncoder().encode(s);

async function goldenForm(): Promise<{ form: CertificateForm; secret: Uint8Array }> {
  const secret = await sha256(utf8("golden-principal-secret"));
  const pubkey = await sha256(secret);
  const agentHash = await sha256(utf8("golden-agent-weights"));
  const form: CertificateForm = {
    principalId: "golden-principal",
    principalPubkeyHex: bytesToHex(pubkey),
    suite: SUITE_SIMULATED_MAC,
    agentId: "golden-agent",
    agentHashHex: bytesToHex(agentHash),
    level: "GENERAL",
    constraints: [
      { constraintId: "limit-1", kind: "AMOUNT_LIMIT_PER_OP", action: "BLOCK",
        maxAmount: 1_000_000 },
      { constraintId: "agg-1", kind: "AGGREGATE_LIMIT_WINDOWED", action: "BLOCK",
        maxAmount: 5_000_000, windowSeconds: 86_400 },
      { constraintId: "deny-1", kind: "OP_TYPE_DENYLIST", action: "BLOCK",
        opTypes: ["external_transfer_unverified"] },
    ],
    triggers: [
      { triggerId: "th-1", kind: "THRESHOLD", constraintId: "agg-1",
        fractionPpm: 800_000 },
      { triggerId: "nv-1", kind: "NOVELTY", knownOpTypes: ["query", "trade"] },
    ],
    targets: [{ targetId: "t-1", address: "https://verifier.example/listener" }],
    tIssue: 1_700_000_000,
    tExpire: 1_731_536_000,
  };
  return { form, secret };
}

describe("canonical encoding", () => {
  it("matches the verifier's frozen golden certificate vector", async () => {
    const { form } = await goldenForm();
    const canonical = certificateCanonicalBytes(form);
    expect(bytesToHex(await sha256(canonical))).toBe(GOLDEN_DIGEST);
  });

  it("derives the golden cert id and signature", async () => {
    const { form, secret } = await goldenForm();
    const { certId, wireHex } = await buildSignedCertificate(form, secret);
    expect(certId).toBe(GOLDEN_CERT_ID);
    const sig = await signDigest(secret, form.suite,
                                 certificateCanonicalBytes(form));
    expect(bytesToHex(sig)).toBe(GOLDEN_SIGNATURE);
    expect(wireHex.endsWith(GOLDEN_SIGNATURE)).toBe(true);
  });

  it("sorts sets independently of construction order", async () => {
    const { form } = await goldenForm();
    const reordered: CertificateForm = {
      ...form,
      constraints: [form.constraints[2], form.constraints[0], form.constraints[1]],
      triggers: [form.triggers[1], form.triggers[0]],
    };
    expect(bytesToHex(certificateCanonicalBytes(reordered)))
      .toBe(bytesToHex(certificateCanonicalBytes(form)));
  });

  it("primitive encodings are big-endian length-prefixed", () => {
    expect(bytesToHex(encU32(0x01020304))).toBe("01020304");
    expect(bytesToHex(encI64(-1))).toBe("ffffffffffffffff");
    expect(bytesToHex(encStr("ab"))).toBe("000000026162");
    expect(bytesToHex(encList([utf8("b"), utf8("a")], true)))
      .toBe("00000002" + "0000000161" + "0000000162");
  });

  it("operation canonical bytes default the payload digest to zeros", () => {
    const bytes = operationCanonicalBytes({
      op_id: "x", op_type: "trade", timestamp: 5, amount: 7,
    });
    expect(bytes.length).toBe(
      (4 + 1) + (4 + 5) + 8 + (1 + 8) + 1 + 1 + 32);
  });

  it("decision payload embeds the op digest and replacement op", async () => {
    const ticket = {
      ticket_id: "tk-1", cert_id: "c1",
      op: { op_id: "o", op_type: "trade", timestamp: 1, amount: 2 },
      reason_kind: "", reason_id: "", raised_at: 0, deadline: 300,
      status: "PENDING",
    };
    const approve = await decisionPayload(ticket as any, "APPROVE");
    const modify = await decisionPayload(ticket as any, "MODIFY",
      { op_id: "o2", op_type: "trade", timestamp: 2, amount: 1 });
    expect(modify.length).toBeGreaterThan(approve.length);
    await expect(decisionPayload(ticket as any, "MODIFY")).rejects.toThrow();
  });
});
