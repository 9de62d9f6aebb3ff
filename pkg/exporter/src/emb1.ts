// EMB1 binary embedding files, the format the cpr toolkit consumes.
//
// Layout (little-endian):
//   "EMB1" | u32 version=1 | u32 N | u32 d | u32 C | u8 hasLabels
//   f32[N*d] features row-major | u32[N] labels | C x (u32 len + utf8 name)

import { readFileSync, writeFileSync } from "node:fs";

export interface EmbeddingFile {
  dim: number;
  features: Float32Array; // length n * dim, row-major
  labels: Uint32Array;
  classNames: string[];
}

const MAGIC = Buffer.from("EMB1", "ascii");
const VERSION = 1;

export function encodeEmb1(data: EmbeddingFile): Buffer {
  const n = data.labels.length;
  if (data.features.length !== n * data.dim) {
    throw new Error(
      `feature block has ${data.features.length} values, expected ${n} x ${data.dim}`,
    );
  }
  for (const label of data.labels) {
    if (label >= data.classNames.length) {
      throw new Error(`label ${label} outside the ${data.classNames.length} known classes`);
    }
  }
  const names = data.classNames.map((s) => Buffer.from(s, "utf-8"));
  const size =
    4 + 16 + 1 + 4 * data.features.length + 4 * n + names.reduce((a, b) => a + 4 + b.length, 0);
  const buf = Buffer.alloc(size);
  let pos = 0;
  MAGIC.copy(buf, pos);
  pos += 4;
  for (const v of [VERSION, n, data.dim, data.classNames.length]) {
    buf.writeUInt32LE(v, pos);
    pos += 4;
  }
  buf.writeUInt8(1, pos);
  pos += 1;
  for (const v of data.features) {
    buf.writeFloatLE(v, pos);
    pos += 4;
  }
  for (const v of data.labels) {
    buf.writeUInt32LE(v, pos);
    pos += 4;
  }
  for (const name of names) {
    buf.writeUInt32LE(name.length, pos);
    pos += 4;
    name.copy(buf, pos);
    pos += name.length;
  }
  return buf;
}

export function writeEmb1(path: string, data: EmbeddingFile): void {
  writeFileSync(path, encodeEmb1(data));
}

export function readEmb1(path: string): EmbeddingFile {
  const buf = readFileSync(path);
  if (!buf.subarray(0, 4).equals(MAGIC)) {
    throw new Error(`bad magic in ${path}`);
  }
  let pos = 4;
  const version = buf.readUInt32LE(pos);
  pos += 4;
  if (version !== VERSION) throw new Error(`unsupported version ${version}`);
  const n = buf.readUInt32LE(pos);
  pos += 4;
  const dim = buf.readUInt32LE(pos);
  pos += 4;
  const classes = buf.readUInt32LE(pos);
  pos += 4;
  const hasLabels = buf.readUInt8(pos);
  pos += 1;
  const features = new Float32Array(n * dim);
  for (let i = 0; i < features.length; i++) {
    features[i] = buf.readFloatLE(pos);
    pos += 4;
  }
  const labels = new Uint32Array(n);
  if (hasLabels) {
    for (let i = 0; i < n; i++) {
      labels[i] = buf.readUInt32LE(pos);
      pos += 4;
    }
  }
  const classNames: string[] = [];
  for (let i = 0; i < classes; i++) {
    const len = buf.readUInt32LE(pos);
    pos += 4;
    classNames.push(buf.subarray(pos, pos + len).toString("utf-8"));
    pos += len;
  }
  if (pos !== buf.length) throw new Error(`${buf.length - pos} trailing bytes in ${path}`);
  return { dim, features, labels, classNames };
}
