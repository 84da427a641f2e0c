// Wire-facing shapes; field names follow docs/wire.md.

export type ConstraintKindName =
  | "AMOUNT_LIMIT_PER_OP"
  | "AGGREGATE_LIMIT_WINDOWED"
  | "ASSET_ALLOWLIST"
  | "ASSET_DENYLIST"
  | "OP_TYPE_DENYLIST"
  | "TIME_WINDOW"
  | "DESTINATION_ALLOWLIST";

export const CONSTRAINT_KIND: Record<ConstraintKindName, number> = {
  AMOUNT_LIMIT_PER_OP: 1,
  AGGREGATE_LIMIT_WINDOWED: 2,
  ASSET_ALLOWLIST: 3,
  ASSET_DENYLIST: 4,
  OP_TYPE_DENYLIST: 5,
  TIME_WINDOW: 6,
  DESTINATION_ALLOWLIST: 7,
};

export interface ConstraintForm {
  constraintId: string;
  kind: ConstraintKindName;
  action: "BLOCK" | "ESCALATE";
  maxAmount?: number;
  windowSeconds?: number;
  opTypes?: string[];
  assets?: string[];
  destinations?: string[];
  windowStart?: number;
  windowEnd?: number;
}

export type TriggerKindName = "THRESHOLD" | "NOVELTY" | "COMPOSITION";

export const TRIGGER_KIND: Record<TriggerKindName, number> = {
  THRESHOLD: 1,
  NOVELTY: 2,
  COMPOSITION: 3,
};

export interface TriggerForm {
  triggerId: string;
  kind: TriggerKindName;
  constraintId?: string;
  fractionPpm?: number;
  knownOpTypes?: string[];
  windowSeconds?: number;
  opTypes?: string[];
  maxCount?: number;
  maxSum?: number;
  timeoutSeconds?: number;
}

export type LevelName = "LIMITED" | "GENERAL" | "FULL";
export const LEVEL: Record<LevelName, number> = { LIMITED: 1, GENERAL: 2, FULL: 3 };

export interface CertificateForm {
  principalId: string;
  principalPubkeyHex: string;
  suite: number;
  agentId: string;
  agentHashHex: string;
  level: LevelName;
  constraints: ConstraintForm[];
  triggers: TriggerForm[];
  targets: { targetId: string; address: string }[];
  tIssue: number;
  tExpire: number;
  semHex?: string;
}

export interface WireOperation {
  op_id: string;
  op_type: string;
  timestamp: number;
  amount?: number | null;
  asset?: string | null;
  destination?: string | null;
  payload_digest?: string | null;
}

export interface Ticket {
  ticket_id: string;
  cert_id: string;
  op: WireOperation;
  reason_kind: string;
  reason_id: string;
  raised_at: number;
  deadline: number;
  status: string;
}

export interface Receipt {
  op_id: string;
  status: string;
  checks_executed?: number;
  failed_check?: number | null;
  reason_kind?: string | null;
  reason_id?: string | null;
  t1_seq?: number | null;
  t3_seq?: number | null;
  state?: string;
  ticket?: Ticket;
  reason?: string;
}

export interface ConsoleEvent {
  seq: number;
  type: "installed" | "decision" | "ticket" | "state" | "revocation";
  cert_id: string;
  timestamp: number;
  [key: string]: unknown;
}

export interface ChainEntryRow {
  seq: number;
  tier: number;
  kind: string;
  timestamp: number;
  cert_id: string;
  entry_hash: string;
  prev_hash: string;
  counter_signed: boolean;
  record: string;
}

export interface SessionSummary {
  cert_id: string;
  principal_id: string;
  agent_id: string;
  agent_hash: string;
  level: string;
  t_issue: number;
  t_expire: number;
  state: string;
  pending_tickets: number;
  ledger: { executed: number; total_minor_units: number };
  chain_heads: Record<string, string>;
  text_export: string;
}
