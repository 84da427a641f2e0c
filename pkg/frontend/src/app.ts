// Operator console: issue certificates, watch the live decision feed,
// answer escalations against their deadlines, revoke, inspect chains.
// One event-stream subscription per session; all state flows through the
// reducer.

import { VerifierClient } from "./client.js";
import { verifyEntries } from "./chainverify.js";
import { bytesToHex, hexToBytes } from "./codec.js";
import { pubkeyOf, sha256, SUITE_SIMULATED_MAC } from "./crypto.js";
import {
  SessionView,
  emptySession,
  executedWithoutT3,
  pendingTickets,
  reduce,
  secondsLeft,
} from "./reducer.js";
import {
  buildSignedCertificate,
  buildSignedRevocation,
  signDecision,
} from "./signer.js";
import { CertificateForm, Ticket } from "./types.js";

interface Principal {
  secret: Uint8Array;
  pubkeyHex: string;
}

let client = new VerifierClient("");
let principal: Principal | null = null;
let view: SessionView | null = null;
let closeStream: (() => void) | null = null;
let serviceClockSkew = 0; // serviceNow ~= localNow + skew, from event timestamps

const $ = <T extends HTMLElement>(id: string) => document.getElementById(id) as T;

function setStatus(text: string, isError = false) {
  const el = $("status");
  el.textContent = text;
  el.className = isError ? "status error" : "status";
}

async function loadKeyFile(file: File) {
  const parsed = JSON.parse(await file.text());
  const secret = hexToBytes(parsed.secret_hex);
  principal = { secret, pubkeyHex: bytesToHex(await pubkeyOf(secret)) };
  $("key-state").textContent = `principal key loaded (pk ${principal.pubkeyHex.slice(0, 16)}...)`;
}

function requirePrincipal(): Principal {
  if (!principal) throw new Error("load the principal key file first");
  return principal;
}

async function issueCertificate() {
  const p = requirePrincipal();
  const now = Math.floor(Date.now() / 1000) + serviceClockSkew;
  const agentSeed = ($("agent-seed") as HTMLInputElement).value || "demo-agent";
  const agentHashHex = bytesToHex(await sha256(new TextEncoder().encode(agentSeed)));
  const perOpLimit = Number(($("per-op-limit") as HTMLInputElement).value || 1000000);
  const aggLimit = Number(($("agg-limit") as HTMLInputElement).value || 7500000);
  const timeout = Number(($("timeout") as HTMLInputElement).value || 300);
  const hours = Number(($("valid-hours") as HTMLInputElement).value || 24);
  const form: CertificateForm = {
    principalId: ($("principal-id") as HTMLInputElement).value || "console-principal",
    principalPubkeyHex: p.pubkeyHex,
    suite: SUITE_SIMULATED_MAC,
    agentId: ($("agent-id") as HTMLInputElement).value || "console-agent",
    agentHashHex,
    level: "GENERAL",
    constraints: [
      { constraintId: "per-op-limit", kind: "AMOUNT_LIMIT_PER_OP",
        action: "BLOCK", maxAmount: perOpLimit },
      { constraintId: "daily-aggregate", kind: "AGGREGATE_LIMIT_WINDOWED",
        action: "BLOCK", maxAmount: aggLimit, windowSeconds: 86400 },
    ],
    triggers: [
      { triggerId: "agg-threshold", kind: "THRESHOLD",
        constraintId: "daily-aggregate", fractionPpm: 800000,
        timeoutSeconds: timeout },
      { triggerId: "unknown-op-type", kind: "NOVELTY",
        knownOpTypes: ["query", "trade"], timeoutSeconds: timeout },
    ],
    targets: [],
    tIssue: now - 60,
    tExpire: now + hours * 3600,
  };
  const { wireHex, certId } = await buildSignedCertificate(form, p.secret);
  await client.installCertificate(wireHex);
  setStatus(`certificate ${certId} installed`);
  await attachSession(certId);
  ($("agent-hash-out") as HTMLElement).textContent =
    `h_A for the agent: ${agentHashHex}`;
}

async function attachSession(certId: string) {
  closeStream?.();
  view = emptySession(certId);
  const summary = await client.summary(certId);
  $("session-panel").classList.remove("hidden");
  $("cert-meta").textContent =
    `${summary.cert_id} · ${summary.level} · principal ${summary.principal_id} ` +
    `· expires ${new Date(summary.t_expire * 1000).toISOString()}`;
  closeStream = client.streamEvents(certId, (ev) => {
    if (!view) return;
    serviceClockSkew = ev.timestamp - Math.floor(Date.now() / 1000);
    view = reduce(view, ev);
    render();
  });
  render();
}

function render() {
  if (!view) return;
  const badge = $("state-badge");
  badge.textContent = view.state;
  badge.className = `badge badge-${view.state.toLowerCase()}`;

  const broken = executedWithoutT3(view);
  if (broken.length) {
    setStatus(`INVARIANT VIOLATION: executed rows without Tier-3 refs: ` +
      broken.map((r) => r.opId).join(", "), true);
  }

  const feed = $("feed");
  feed.innerHTML = "";
  for (const row of view.feed.slice(-80).reverse()) {
    const tr = document.createElement("tr");
    tr.innerHTML =
      `<td>${row.seq}</td><td>${new Date(row.timestamp * 1000)
        .toISOString().slice(11, 19)}</td>` +
      `<td>${row.kind}</td><td>${row.opId ?? ""}</td>` +
      `<td class="v-${(row.verdict ?? "").toLowerCase()}">${row.detail}</td>` +
      `<td>${row.executed ? `t3 #${row.t3Seq}` : ""}</td>`;
    feed.appendChild(tr);
  }

  const ticketsEl = $("tickets");
  ticketsEl.innerHTML = "";
  const serviceNow = Math.floor(Date.now() / 1000) + serviceClockSkew;
  for (const ticket of pendingTickets(view)) {
    const left = secondsLeft(ticket, serviceNow);
    const div = document.createElement("div");
    div.className = "ticket";
    div.innerHTML =
      `<span class="countdown ${left < 60 ? "urgent" : ""}">${left}s</span>` +
      `<strong>${ticket.ticket_id}</strong> op ${ticket.op.op_id} ` +
      `(${ticket.reason_kind}:${ticket.reason_id})`;
    for (const decision of ["APPROVE", "DENY", "MODIFY"] as const) {
      const btn = document.createElement("button");
      btn.textContent = decision.toLowerCase();
      btn.onclick = () => respond(ticket, decision);
      div.appendChild(btn);
    }
    ticketsEl.appendChild(div);
  }
  $("ticket-header").textContent =
    `pending escalations (${pendingTickets(view).length})`;
}

async function respond(ticket: Ticket, decision: "APPROVE" | "DENY" | "MODIFY") {
  try {
    const p = requirePrincipal();
    const full = (await client.listEscalations(ticket.cert_id))
      .find((t) => t.ticket_id === ticket.ticket_id) ?? ticket;
    let modified;
    if (decision === "MODIFY") {
      const amount = Number(prompt("new amount (minor units)?",
        String(full.op.amount ?? 0)));
      if (!Number.isFinite(amount)) return;
      modified = { ...full.op, op_id: `${full.op.op_id}-mod-${Date.now()}`,
                   op_type: "trade", amount };
    }
    const sig = await signDecision(p.secret, SUITE_SIMULATED_MAC, full,
                                   decision, modified);
    const outcome = await client.respondEscalation(full.ticket_id, decision,
                                                   sig, modified);
    setStatus(`ticket ${full.ticket_id}: ${outcome.status}` +
      (outcome.executed ? ` (executed, t3 #${outcome.t3_seq})` : ""));
  } catch (err) {
    setStatus(String(err), true);
  }
}

async function revoke(mode: "IMMEDIATE" | "GRACEFUL") {
  if (!view) return;
  try {
    const p = requirePrincipal();
    const reason = prompt("reason?", "operator revocation") ?? "operator revocation";
    const now = Math.floor(Date.now() / 1000) + serviceClockSkew;
    const wireHex = await buildSignedRevocation(
      p.secret, SUITE_SIMULATED_MAC, view.certId, mode, reason, now);
    const result = await client.revoke(wireHex);
    const delta = result.report.delta_t_max_observed;
    setStatus(`revoked (${mode}); ${result.report.targets.length} targets, ` +
      `delta_t_max ${delta != null ? (delta * 1000).toFixed(1) + " ms" : "n/a"}`);
  } catch (err) {
    setStatus(String(err), true);
  }
}

async function explore() {
  if (!view) return;
  const tier = Number(($("tier-select") as HTMLSelectElement).value);
  const { entries } = await client.chain(tier, { limit: 500 });
  // anchor at the genesis zero-hash when the run starts the chain
  const anchor = entries.length && entries[0].seq === 0 ? "0".repeat(64) : undefined;
  const { ok, rows, firstBadSeq } = await verifyEntries(entries, anchor);
  const table = $("chain-table");
  table.innerHTML = "";
  for (const row of rows.slice(-200)) {
    const tr = document.createElement("tr");
    tr.innerHTML =
      `<td>${row.seq}</td><td>${row.kind}</td><td>${row.cert_id.slice(0, 12)}</td>` +
      `<td>${row.timestamp}</td>` +
      `<td class="${row.verified ? "ok" : "tampered"}">` +
      `${row.verified ? "ok" : `TAMPERED (${row.problem})`}</td>` +
      `<td class="hash">${row.entry_hash.slice(0, 16)}...</td>`;
    table.appendChild(tr);
  }
  $("chain-status").textContent = ok
    ? `tier ${tier}: ${rows.length} entries, all hashes verify client-side`
    : `tier ${tier}: TAMPERED at seq ${firstBadSeq}`;
  $("chain-status").className = ok ? "status" : "status error";
}

function wire() {
  client = new VerifierClient(
    (window.location.origin.startsWith("http") ? "" : "http://127.0.0.1:8787"));
  ($("key-file") as HTMLInputElement).addEventListener("change", (e) => {
    const file = (e.target as HTMLInputElement).files?.[0];
    if (file) loadKeyFile(file).catch((err) => setStatus(String(err), true));
  });
  $("issue-btn").onclick = () =>
    issueCertificate().catch((err) => setStatus(String(err), true));
  $("attach-btn").onclick = () => {
    const certId = ($("attach-cert-id") as HTMLInputElement).value.trim();
    if (certId) attachSession(certId).catch((err) => setStatus(String(err), true));
  };
  $("revoke-immediate").onclick = () => revoke("IMMEDIATE");
  $("revoke-graceful").onclick = () => revoke("GRACEFUL");
  $("explore-btn").onclick = () => explore().catch((err) => setStatus(String(err), true));
  setInterval(render, 1000); // countdown refresh
  client.health().then(
    (h) => setStatus(`connected: ${h.sessions} session(s)`),
    () => setStatus("verifier unreachable", true),
  );
}

if (typeof document !== "undefined") {
  document.addEventListener("DOMContentLoaded", wire);
}
