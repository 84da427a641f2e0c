// SIMULATED_MAC suite via WebCrypto (browser and node 20+ share
// globalThis.crypto.subtle). The principal key lives client-side in this
// desk-scale build; see the README warning.

import { concat, encU8 } from "./codec.js";

export const SUITE_SIMULATED_MAC = 1;
export const SUITE_ML_DSA_87 = 2;

export async function sha256(data: Uint8Array): Promise<Uint8Array> {
  const src = data.slice();  // detached copy: subtle rejects SAB-backed views
  return new Uint8Array(await crypto.subtle.digest("SHA-256", src));
}

export async function hmacSha256(
  key: Uint8Array,
  data: Uint8Array,
): Promise<Uint8Array> {
  const k = await crypto.subtle.importKey(
    "raw",
    key.slice(),
    { name: "HMAC", hash: "SHA-256" },
    false,
    ["sign"],
  );
  return new Uint8Array(await crypto.subtle.sign("HMAC", k, data.slice()));
}

/** MAC over suite_tag ++ sha256(payload): certificates, revocations. */
export async function signDigest(
  secret: Uint8Array,
  suite: number,
  payload: Uint8Array,
): Promise<Uint8Array> {
  const digest = await sha256(payload);
  return hmacSha256(secret, concat([encU8(suite), digest]));
}

/** MAC over suite_tag ++ payload: escalation decisions, suspend/resume. */
export async function signRaw(
  secret: Uint8Array,
  suite: number,
  payload: Uint8Array,
): Promise<Uint8Array> {
  return hmacSha256(secret, concat([encU8(suite), payload]));
}

export async function pubkeyOf(secret: Uint8Array): Promise<Uint8Array> {
  return sha256(secret);
}
