// Canonical byte encoding, mirroring docs/wire.md exactly. Signed objects
// are built client-side from these encoders; the cross-implementation
// golden-vector test pins byte compatibility with the verifier.

export function encU8(v: number): Uint8Array {
  return new Uint8Array([v & 0xff]);
}

export function encU32(v: number): Uint8Array {
  const out = new Uint8Array(4);
  new DataView(out.buffer).setUint32(0, v, false);
  return out;
}

export function encI64(v: number | bigint): Uint8Array {
  const out = new Uint8Array(8);
  new DataView(out.buffer).setBigInt64(0, BigInt(v), false);
  return out;
}

export function concat(parts: Uint8Array[]): Uint8Array {
  const total = parts.reduce((n, p) => n + p.length, 0);
  const out = new Uint8Array(total);
  let at = 0;
  for (const p of parts) {
    out.set(p, at);
    at += p.length;
  }
  return out;
}

export function encBytes(b: Uint8Array): Uint8Array {
  return concat([encU32(b.length), b]);
}

const utf8 = new TextEncoder();

export function encStr(s: string): Uint8Array {
  return encBytes(utf8.encode(s));
}

export function encOptBytes(b: Uint8Array | null | undefined): Uint8Array {
  return b == null ? encU8(0) : concat([encU8(1), encBytes(b)]);
}

export function encOptStr(s: string | null | undefined): Uint8Array {
  return s == null ? encU8(0) : concat([encU8(1), encStr(s)]);
}

export function encOptI64(v: number | bigint | null | undefined): Uint8Array {
  return v == null ? encU8(0) : concat([encU8(1), encI64(v)]);
}

function compareBytes(a: Uint8Array, b: Uint8Array): number {
  const n = Math.min(a.length, b.length);
  for (let i = 0; i < n; i++) {
    if (a[i] !== b[i]) return a[i] - b[i];
  }
  return a.length - b.length;
}

export function encList(items: Uint8Array[], sort = false): Uint8Array {
  const encoded = items.map(encBytes);
  if (sort) encoded.sort(compareBytes);
  return concat([encU32(items.length), ...encoded]);
}

export function encStrSet(values: Iterable<string>): Uint8Array {
  return encList([...values].map((v) => utf8.encode(v)), true);
}

export function hexToBytes(hex: string): Uint8Array {
  if (hex.length % 2 !== 0) throw new Error("odd-length hex");
  const out = new Uint8Array(hex.length / 2);
  for (let i = 0; i < out.length; i++) {
    out[i] = parseInt(hex.slice(2 * i, 2 * i + 2), 16);
  }
  return out;
}

export function bytesToHex(b: Uint8Array): string {
  return [...b].map((x) => x.toString(16).padStart(2, "0")).join("");
}

// Sequential reader for decoding chain records client-side.
export class Reader {
  private pos = 0;
  constructor(private data: Uint8Array) {}

  private take(n: number): Uint8Array {
    if (this.pos + n > this.data.length) throw new Error("truncated record");
    const out = this.data.subarray(this.pos, this.pos + n);
    this.pos += n;
    return out;
  }

  u8(): number {
    return this.take(1)[0];
  }

  u32(): number {
    const b = this.take(4);
    return new DataView(b.buffer, b.byteOffset, 4).getUint32(0, false);
  }

  i64(): number {
    const b = this.take(8);
    return Number(new DataView(b.buffer, b.byteOffset, 8).getBigInt64(0, false));
  }

  bytes(): Uint8Array {
    return this.take(this.u32());
  }

  str(): string {
    return new TextDecoder().decode(this.bytes());
  }

  fixed(n: number): Uint8Array {
    return this.take(n);
  }

  optBytes(): Uint8Array | null {
    return this.u8() ? this.bytes() : null;
  }

  atEnd(): boolean {
    return this.pos === this.data.length;
  }
}
