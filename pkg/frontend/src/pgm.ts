/** Decoding of the gateway's base64 binary PGM (P5) image payloads. */

export interface GrayImage {
  width: number;
  height: number;
  /** intensities normalized to [0, 1], row-major */
  pixels: Float32Array;
}

function base64ToBytes(b64: string): Uint8Array {
  const bin = atob(b64);
  const out = new Uint8Array(bin.length);
  for (let i = 0; i < bin.length; i++) out[i] = bin.charCodeAt(i);
  return out;
}

const WS = new Set([0x20, 0x09, 0x0a, 0x0d, 0x0b, 0x0c]);

/** Decode a base64 P5 PGM (maxval up to 65535, big-endian 16-bit). */
export function decodePgm(b64: string): GrayImage {
  const bytes = base64ToBytes(b64);
  if (bytes[0] !== 0x50 || bytes[1] !== 0x35) throw new Error("not a P5 PGM payload");
  let pos = 2;
  const fields: number[] = [];
  while (fields.length < 3) {
    while (pos < bytes.length && WS.has(bytes[pos]!)) pos++;
    if (bytes[pos] === 0x23) { // '#' comment
      while (pos < bytes.length && bytes[pos] !== 0x0a) pos++;
      continue;
    }
    let v = 0;
    const start = pos;
    while (pos < bytes.length && !WS.has(bytes[pos]!)) {
      const d = bytes[pos]! - 0x30;
      if (d < 0 || d > 9) throw new Error("bad PGM header");
      v = v * 10 + d;
      pos++;
    }
    if (pos === start) throw new Error("truncated PGM header");
    fields.push(v);
  }
  pos++; // single whitespace after maxval
  const [width, height, maxval] = fields as [number, number, number];
  const n = width * height;
  const pixels = new Float32Array(n);
  if (maxval < 256) {
    if (bytes.length - pos < n) throw new Error("truncated PGM data");
    for (let i = 0; i < n; i++) pixels[i] = bytes[pos + i]! / maxval;
  } else {
    if (bytes.length - pos < 2 * n) throw new Error("truncated PGM data");
    for (let i = 0; i < n; i++) {
      pixels[i] = ((bytes[pos + 2 * i]! << 8) | bytes[pos + 2 * i + 1]!) / maxval;
    }
  }
  return { width, height, pixels };
}

/** Raw payload bytes, for byte-level comparisons in tests. */
export function pgmBytes(b64: string): Uint8Array {
  return base64ToBytes(b64);
}
