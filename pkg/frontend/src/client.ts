// Thin wire client: JSON endpoints plus the fetch-based SSE reader (works
// in browsers and node without EventSource).

import {
  ChainEntryRow,
  ConsoleEvent,
  Receipt,
  SessionSummary,
  Ticket,
  WireOperation,
} from "./types.js";

export class ApiError extends Error {
  constructor(public status: number, detail: string) {
    super(`${status}: ${detail}`);
  }
}

async function jsonOrThrow(resp: Response): Promise<any> {
  const body = await resp.json().catch(() => ({}));
  if (!resp.ok) throw new ApiError(resp.status, body.detail ?? resp.statusText);
  return body;
}

export class VerifierClient {
  constructor(public baseUrl: string) {}

  private url(path: string): string {
    return `${this.baseUrl}${path}`;
  }

  private async get(path: string): Promise<any> {
    return jsonOrThrow(await fetch(this.url(path)));
  }

  private async post(path: string, body: unknown): Promise<any> {
    return jsonOrThrow(
      await fetch(this.url(path), {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify(body),
      }),
    );
  }

  health(): Promise<{ status: string; sessions: number }> {
    return this.get("/api/health");
  }

  installCertificate(wireHex: string): Promise<SessionSummary> {
    return this.post("/api/certificates", { cert_hex: wireHex });
  }

  summary(certId: string): Promise<SessionSummary> {
    return this.get(`/api/certificates/${certId}`);
  }

  submitOperation(
    certId: string,
    op: WireOperation,
    presentedAgentHashHex: string,
  ): Promise<Receipt> {
    return this.post(`/api/certificates/${certId}/operations`, {
      ...op,
      presented_agent_hash: presentedAgentHashHex,
    });
  }

  listEscalations(certId: string): Promise<Ticket[]> {
    return this.get(`/api/certificates/${certId}/escalations`);
  }

  respondEscalation(
    ticketId: string,
    decision: "APPROVE" | "DENY" | "MODIFY",
    signatureHex: string,
    modifiedOp?: WireOperation,
  ): Promise<any> {
    return this.post(`/api/escalations/${ticketId}/response`, {
      decision,
      signature_hex: signatureHex,
      modified_op: modifiedOp ?? null,
    });
  }

  revoke(messageHex: string): Promise<any> {
    return this.post("/api/revocations", { message_hex: messageHex });
  }

  chain(
    tier: number,
    params: { cert_id?: string; from_ts?: number; to_ts?: number;
              from_seq?: number; limit?: number } = {},
  ): Promise<{ tier: number; entries: ChainEntryRow[]; verify: Record<string, number | null> }> {
    const q = new URLSearchParams();
    for (const [k, v] of Object.entries(params)) {
      if (v !== undefined) q.set(k, String(v));
    }
    const suffix = q.toString() ? `?${q}` : "";
    return this.get(`/api/chains/${tier}${suffix}`);
  }

  evidence(params: { from_ts: number; to_ts: number; cert_id?: string;
                     tiers?: string }): Promise<any> {
    const q = new URLSearchParams();
    for (const [k, v] of Object.entries(params)) {
      if (v !== undefined) q.set(k, String(v));
    }
    return this.get(`/api/evidence?${q}`);
  }

  verifyEvidence(bundle: unknown): Promise<{ ok: boolean; reason: string }> {
    return this.post("/api/evidence/verify", bundle);
  }

  /**
   * Subscribe to the event stream. Returns a close function. Events replay
   * from fromSeq then continue live, in chain order, exactly once.
   */
  streamEvents(
    certId: string,
    onEvent: (event: ConsoleEvent) => void,
    options: { fromSeq?: number; maxEvents?: number;
               onClose?: (err?: unknown) => void } = {},
  ): () => void {
    const controller = new AbortController();
    const q = new URLSearchParams({ from_seq: String(options.fromSeq ?? 0) });
    if (options.maxEvents !== undefined) {
      q.set("max_events", String(options.maxEvents));
    }
    const run = async () => {
      const resp = await fetch(this.url(`/api/events/${certId}?${q}`), {
        signal: controller.signal,
        headers: { accept: "text/event-stream" },
      });
      if (!resp.ok || !resp.body) {
        throw new ApiError(resp.status, "event stream unavailable");
      }
      const reader = resp.body.getReader();
      const decoder = new TextDecoder();
      let buffer = "";
      for (;;) {
        const { done, value } = await reader.read();
        if (done) break;
        buffer += decoder.decode(value, { stream: true });
        let sep;
        while ((sep = buffer.indexOf("\n\n")) >= 0) {
          const frame = buffer.slice(0, sep);
          buffer = buffer.slice(sep + 2);
          for (const line of frame.split("\n")) {
            if (line.startsWith("data: ")) {
              onEvent(JSON.parse(line.slice(6)) as ConsoleEvent);
            }
          }
        }
      }
    };
    run().then(
      () => options.onClose?.(),
      (err) => {
        if (!controller.signal.aborted) options.onClose?.(err);
      },
    );
    return () => controller.abort();
  }
}
