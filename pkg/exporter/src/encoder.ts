// Deterministic stand-in encoders with a shared hashed token space.
//
// Real deployments swap in a frozen VLM behind the same two functions; the
// built-in encoders need no downloads and are bit-reproducible, which is
// what the downstream toolkit's fixtures care about. Text features average
// hashed word vectors; image features combine color/layout statistics with
// the word vector of the image's dominant palette color, so color-themed
// fixtures classify far above chance under plain cosine matching.

import { createHash } from "node:crypto";

import type { RgbImage } from "./images.js";

export const DEFAULT_DIM = 64;

// sfc32 over sha256 bytes: stable stream of uniforms from a string key
function prng(key: string): () => number {
  const digest = createHash("sha256").update(key).digest();
  let a = digest.readUInt32LE(0);
  let b = digest.readUInt32LE(4);
  let c = digest.readUInt32LE(8);
  let d = digest.readUInt32LE(12);
  return () => {
    const t = (((a + b) | 0) + d) | 0;
    d = (d + 1) | 0;
    a = b ^ (b >>> 9);
    b = (c + (c << 3)) | 0;
    c = (c << 21) | (c >>> 11);
    c = (c + t) | 0;
    return (t >>> 0) / 4294967296;
  };
}

function gaussians(key: string, count: number): Float64Array {
  const next = prng(key);
  const out = new Float64Array(count);
  for (let i = 0; i < count; i += 2) {
    const u = Math.max(next(), 1e-12);
    const v = next();
    const r = Math.sqrt(-2 * Math.log(u));
    out[i] = r * Math.cos(2 * Math.PI * v);
    if (i + 1 < count) out[i + 1] = r * Math.sin(2 * Math.PI * v);
  }
  return out;
}

export function normalize(v: Float64Array): Float64Array {
  let norm = 0;
  for (const x of v) norm += x * x;
  norm = Math.sqrt(norm);
  if (norm < 1e-12) throw new Error("zero-norm feature vector");
  return v.map((x) => x / norm) as Float64Array;
}

export function wordVector(token: string, dim: number): Float64Array {
  const scale = 1 / Math.sqrt(dim);
  return gaussians(`word:${token.toLowerCase()}`, dim).map((x) => x * scale) as Float64Array;
}

export function encodeText(text: string, dim = DEFAULT_DIM): Float64Array {
  const tokens = text.toLowerCase().match(/[a-z0-9]+/g) ?? [];
  if (tokens.length === 0) throw new Error(`no tokens in text ${JSON.stringify(text)}`);
  const sum = new Float64Array(dim);
  for (const token of tokens) {
    const w = wordVector(token, dim);
    for (let i = 0; i < dim; i++) sum[i] += w[i];
  }
  for (let i = 0; i < dim; i++) sum[i] /= tokens.length;
  return normalize(sum);
}

const PALETTE: Array<[string, [number, number, number]]> = [
  ["red", [220, 40, 40]],
  ["green", [40, 200, 60]],
  ["blue", [40, 70, 220]],
  ["yellow", [230, 220, 50]],
  ["cyan", [60, 210, 210]],
  ["magenta", [210, 60, 200]],
  ["orange", [240, 140, 40]],
  ["purple", [130, 60, 180]],
  ["white", [240, 240, 240]],
  ["gray", [128, 128, 128]],
  ["black", [20, 20, 20]],
  ["brown", [130, 90, 50]],
];

export function dominantColorName(img: RgbImage): string {
  let r = 0;
  let g = 0;
  let b = 0;
  const pixels = img.width * img.height;
  for (let p = 0; p < pixels; p++) {
    r += img.rgb[3 * p];
    g += img.rgb[3 * p + 1];
    b += img.rgb[3 * p + 2];
  }
  r /= pixels;
  g /= pixels;
  b /= pixels;
  let best = PALETTE[0][0];
  let bestDist = Number.POSITIVE_INFINITY;
  for (const [name, [pr, pg, pb]] of PALETTE) {
    const dist = (r - pr) ** 2 + (g - pg) ** 2 + (b - pb) ** 2;
    if (dist < bestDist) {
      bestDist = dist;
      best = name;
    }
  }
  return best;
}

const HIST_BINS = 4; // per channel -> 64 color bins
const GRID = 4; // 4x4 luma layout cells
const STAT_DIM = HIST_BINS ** 3 + GRID * GRID;

function imageStats(img: RgbImage): Float64Array {
  const stats = new Float64Array(STAT_DIM);
  const pixels = img.width * img.height;
  for (let y = 0; y < img.height; y++) {
    for (let x = 0; x < img.width; x++) {
      const p = y * img.width + x;
      const r = img.rgb[3 * p];
      const g = img.rgb[3 * p + 1];
      const b = img.rgb[3 * p + 2];
      const bin =
        Math.min(HIST_BINS - 1, r >> 6) * HIST_BINS * HIST_BINS +
        Math.min(HIST_BINS - 1, g >> 6) * HIST_BINS +
        Math.min(HIST_BINS - 1, b >> 6);
      stats[bin] += 1 / pixels;
      const cell =
        Math.min(GRID - 1, Math.floor((y * GRID) / img.height)) * GRID +
        Math.min(GRID - 1, Math.floor((x * GRID) / img.width));
      stats[HIST_BINS ** 3 + cell] += (0.299 * r + 0.587 * g + 0.114 * b) / 255 / pixels;
    }
  }
  return stats;
}

const projectionCache = new Map<number, Float64Array>();

function projection(dim: number): Float64Array {
  let proj = projectionCache.get(dim);
  if (!proj) {
    proj = gaussians(`image-proj:${dim}`, STAT_DIM * dim).map(
      (x) => x / Math.sqrt(STAT_DIM),
    ) as Float64Array;
    projectionCache.set(dim, proj);
  }
  return proj;
}

const COLOR_WORD_WEIGHT = 2.0;

export function encodeImage(img: RgbImage, dim = DEFAULT_DIM): Float64Array {
  const stats = imageStats(img);
  const proj = projection(dim);
  const out = new Float64Array(dim);
  for (let s = 0; s < STAT_DIM; s++) {
    const value = stats[s];
    if (value === 0) continue;
    for (let j = 0; j < dim; j++) out[j] += value * proj[s * dim + j];
  }
  const colorWord = wordVector(dominantColorName(img), dim);
  for (let j = 0; j < dim; j++) out[j] += COLOR_WORD_WEIGHT * colorWord[j];
  return normalize(out);
}
