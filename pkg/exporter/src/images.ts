// Minimal netpbm (PPM/PGM) decoding: binary P6/P5 and ascii P3/P2,
// 8-bit samples. Enough for fixture corpora without native codecs.

import { readFileSync } from "node:fs";

export interface RgbImage {
  width: number;
  height: number;
  rgb: Uint8Array; // length width * height * 3
}

function isSpace(byte: number): boolean {
  return byte === 0x20 || byte === 0x09 || byte === 0x0a || byte === 0x0d;
}

class Scanner {
  pos = 0;
  constructor(readonly buf: Buffer) {}

  token(): string {
    // skip whitespace and '#' comments
    while (this.pos < this.buf.length) {
      const b = this.buf[this.pos];
      if (isSpace(b)) {
        this.pos++;
      } else if (b === 0x23) {
        while (this.pos < this.buf.length && this.buf[this.pos] !== 0x0a) this.pos++;
      } else {
        break;
      }
    }
    const start = this.pos;
    while (this.pos < this.buf.length && !isSpace(this.buf[this.pos])) this.pos++;
    if (start === this.pos) throw new Error("unexpected end of header");
    return this.buf.subarray(start, this.pos).toString("ascii");
  }

  int(): number {
    const v = Number.parseInt(this.token(), 10);
    if (!Number.isFinite(v)) throw new Error("bad integer in header");
    return v;
  }
}

export function decodeNetpbm(buf: Buffer): RgbImage {
  const scan = new Scanner(buf);
  const magic = scan.token();
  if (!["P2", "P3", "P5", "P6"].includes(magic)) {
    throw new Error(`unsupported image magic ${magic}`);
  }
  const width = scan.int();
  const height = scan.int();
  const maxval = scan.int();
  if (maxval <= 0 || maxval > 255) throw new Error(`unsupported maxval ${maxval}`);
  const gray = magic === "P2" || magic === "P5";
  const samples = width * height * (gray ? 1 : 3);
  const raw = new Uint8Array(samples);
  if (magic === "P5" || magic === "P6") {
    scan.pos += 1; // single whitespace after maxval
    if (buf.length - scan.pos < samples) throw new Error("truncated pixel data");
    raw.set(buf.subarray(scan.pos, scan.pos + samples));
  } else {
    for (let i = 0; i < samples; i++) raw[i] = scan.int();
  }
  const rgb = new Uint8Array(width * height * 3);
  for (let p = 0; p < width * height; p++) {
    if (gray) {
      rgb[3 * p] = rgb[3 * p + 1] = rgb[3 * p + 2] = raw[p];
    } else {
      rgb[3 * p] = raw[3 * p];
      rgb[3 * p + 1] = raw[3 * p + 1];
      rgb[3 * p + 2] = raw[3 * p + 2];
    }
  }
  return { width, height, rgb };
}

export function readImage(path: string): RgbImage {
  return decodeNetpbm(readFileSync(path));
}

export function encodePpm(img: RgbImage): Buffer {
  const header = Buffer.from(`P6\n${img.width} ${img.height}\n255\n`, "ascii");
  return Buffer.concat([header, Buffer.from(img.rgb)]);
}
