// View-model derivation. Rendered state comes solely from the service's
// event stream and queries — no client-side protocol re-implementation
// that could diverge from the verifier's decisions.
//
// Invariant enforced here and by test: an operation is rendered as
// executed only when an event carried its Tier-3 sequence number.

import { ConsoleEvent, Ticket } from "./types.js";

export interface FeedRow {
  seq: number;
  timestamp: number;
  kind: string;
  opId?: string;
  verdict?: string;
  detail: string;
  executed: boolean;
  t1Seq?: number | null;
  t3Seq?: number | null;
}

export interface TicketView extends Ticket {
  executedT3: number | null;
}

export interface SessionView {
  certId: string;
  state: string;
  feed: FeedRow[];
  tickets: Record<string, TicketView>;
  executedOpIds: Set<string>;
  lastEventSeq: number;
  revocation?: { mode: string; reason: string; timestamp: number };
}

export function emptySession(certId: string): SessionView {
  return {
    certId,
    state: "UNINITIALIZED",
    feed: [],
    tickets: {},
    executedOpIds: new Set(),
    lastEventSeq: -1,
  };
}

function describeDecision(ev: ConsoleEvent): string {
  const verdict = ev.verdict as string;
  if (verdict === "ALLOWED") return "allowed";
  const reason = ev.reason_id ? `${ev.reason_kind}:${ev.reason_id}` : "";
  if (verdict === "BLOCKED") {
    return `blocked at check ${ev.failed_check} (${reason})`;
  }
  if (verdict === "ESCALATED") return `escalated (${reason})`;
  return `${verdict} ${reason}`.trim();
}

export function reduce(view: SessionView, ev: ConsoleEvent): SessionView {
  if (ev.seq <= view.lastEventSeq) return view; // exactly-once guard
  const next: SessionView = {
    ...view,
    feed: view.feed.slice(),
    tickets: { ...view.tickets },
    executedOpIds: new Set(view.executedOpIds),
    lastEventSeq: ev.seq,
  };
  if (typeof ev.state === "string") next.state = ev.state;

  switch (ev.type) {
    case "installed":
      next.feed.push({
        seq: ev.seq,
        timestamp: ev.timestamp,
        kind: "installed",
        detail: `certificate installed (t1 #${ev.t1_seq})`,
        executed: false,
        t1Seq: ev.t1_seq as number,
      });
      break;
    case "decision": {
      const t3 = (ev.t3_seq ?? null) as number | null;
      const executed = t3 !== null;
      if (executed) next.executedOpIds.add(ev.op_id as string);
      next.feed.push({
        seq: ev.seq,
        timestamp: ev.timestamp,
        kind: "decision",
        opId: ev.op_id as string,
        verdict: ev.verdict as string,
        detail: describeDecision(ev),
        executed,
        t1Seq: ev.t1_seq as number | null,
        t3Seq: t3,
      });
      break;
    }
    case "ticket": {
      const ticketId = ev.ticket_id as string;
      const existing = next.tickets[ticketId];
      const t3 = (ev.t3_seq ?? null) as number | null;
      const status = ev.status as string;
      next.tickets[ticketId] = {
        ticket_id: ticketId,
        cert_id: ev.cert_id,
        op: (existing?.op ?? { op_id: ev.op_id, op_type: "", timestamp: 0 }) as any,
        reason_kind: (ev.reason_kind as string) ?? existing?.reason_kind ?? "",
        reason_id: (ev.reason_id as string) ?? existing?.reason_id ?? "",
        raised_at: (ev.raised_at as number) ?? existing?.raised_at ?? ev.timestamp,
        deadline: (ev.deadline as number) ?? existing?.deadline ?? 0,
        status,
        executedT3: t3 ?? existing?.executedT3 ?? null,
      };
      if (status === "APPROVED" && t3 !== null) {
        next.executedOpIds.add(ev.op_id as string);
      }
      next.feed.push({
        seq: ev.seq,
        timestamp: ev.timestamp,
        kind: "ticket",
        opId: ev.op_id as string,
        detail: `ticket ${ticketId} ${status}`,
        executed: status === "APPROVED" && t3 !== null,
        t3Seq: t3,
      });
      break;
    }
    case "revocation":
      next.revocation = {
        mode: ev.mode as string,
        reason: ev.reason as string,
        timestamp: ev.timestamp,
      };
      next.feed.push({
        seq: ev.seq,
        timestamp: ev.timestamp,
        kind: "revocation",
        detail: `revoked (${ev.mode}: ${ev.reason})`,
        executed: false,
      });
      break;
    case "state":
      next.feed.push({
        seq: ev.seq,
        timestamp: ev.timestamp,
        kind: "state",
        detail: `state -> ${ev.state}`,
        executed: false,
      });
      break;
  }
  return next;
}

export function pendingTickets(view: SessionView): TicketView[] {
  return Object.values(view.tickets)
    .filter((t) => t.status === "PENDING")
    .sort((a, b) => a.raised_at - b.raised_at);
}

/** Countdown from service-supplied timestamps, never the local clock alone. */
export function secondsLeft(ticket: Ticket, serviceNow: number): number {
  return Math.max(0, ticket.deadline - serviceNow);
}

/** The invariant the renderer relies on: executed implies a Tier-3 ref. */
export function executedWithoutT3(view: SessionView): FeedRow[] {
  return view.feed.filter((row) => row.executed && row.t3Seq == null);
}
