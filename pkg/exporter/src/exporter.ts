// The export job: images and class templates in, EMB1 files plus the
// dataset manifest the downstream toolkit loads.

import { existsSync, mkdirSync, readFileSync, writeFileSync } from "node:fs";
import { dirname, join, resolve } from "node:path";

import { DEFAULT_DIM, encodeImage, encodeText } from "./encoder.js";
import { writeEmb1, type EmbeddingFile } from "./emb1.js";
import { readImage } from "./images.js";
import { zeroShotAccuracy } from "./zeroShot.js";

export interface ImageEntry {
  path: string;
  class: string;
}

export interface ExportJob {
  images: ImageEntry[];
  classNames: string[];
  template: string; // "{}" is replaced with the class name
  outDir: string;
  dim?: number;
  anchorSentences?: string[]; // one per class, optional
  failFast?: boolean; // otherwise unreadable images are skipped with a warning
}

export interface ExportResult {
  imagesPath: string;
  textPath: string;
  anchorsPath: string | null;
  manifestPath: string;
  reportPath: string;
  exported: number;
  skipped: string[];
  zeroShotAccuracy: number;
}

export function readImageManifest(path: string): ImageEntry[] {
  const doc = JSON.parse(readFileSync(path, "utf-8"));
  if (!Array.isArray(doc.images)) {
    throw new Error(`image manifest ${path} needs an "images" array`);
  }
  const base = dirname(resolve(path));
  return doc.images.map((e: { path: string; class: string }) => ({
    path: resolve(base, e.path),
    class: String(e.class),
  }));
}

export function readClassList(path: string): string[] {
  const names = readFileSync(path, "utf-8")
    .split("\n")
    .map((s) => s.trim())
    .filter((s) => s.length > 0);
  if (names.length === 0) throw new Error(`no class names in ${path}`);
  for (const name of names) {
    if (name.length === 0) throw new Error("empty class name");
  }
  return names;
}

export function fillTemplate(template: string, className: string): string {
  if (!template.includes("{}")) {
    throw new Error(`template ${JSON.stringify(template)} has no {} placeholder`);
  }
  return template.replaceAll("{}", className);
}

function toEmbedding(
  rows: Float64Array[],
  labels: number[],
  classNames: string[],
  dim: number,
): EmbeddingFile {
  const features = new Float32Array(rows.length * dim);
  rows.forEach((row, i) => features.set(Float32Array.from(row), i * dim));
  return { dim, features, labels: Uint32Array.from(labels), classNames };
}

export function exportImages(job: ExportJob): { file: EmbeddingFile; skipped: string[] } {
  const dim = job.dim ?? DEFAULT_DIM;
  const classIndex = new Map(job.classNames.map((name, i) => [name, i]));
  const rows: Float64Array[] = [];
  const labels: number[] = [];
  const skipped: string[] = [];
  for (const entry of job.images) {
    const label = classIndex.get(entry.class);
    if (label === undefined) {
      throw new Error(`image ${entry.path} has unknown class ${JSON.stringify(entry.class)}`);
    }
    try {
      rows.push(encodeImage(readImage(entry.path), dim));
      labels.push(label);
    } catch (err) {
      if (job.failFast) throw err;
      skipped.push(entry.path);
      console.warn(`warning: skipping unreadable image ${entry.path}: ${err}`);
    }
  }
  if (rows.length === 0) throw new Error("no readable images to export");
  return { file: toEmbedding(rows, labels, job.classNames, dim), skipped };
}

export function exportText(
  classNames: string[],
  template: string,
  dim = DEFAULT_DIM,
): EmbeddingFile {
  const rows = classNames.map((name) => encodeText(fillTemplate(template, name), dim));
  return toEmbedding(
    rows,
    classNames.map((_, i) => i),
    classNames,
    dim,
  );
}

export function exportAnchors(
  classNames: string[],
  sentences: string[],
  dim = DEFAULT_DIM,
): EmbeddingFile {
  if (sentences.length !== classNames.length) {
    throw new Error(
      `${sentences.length} anchor sentences for ${classNames.length} classes`,
    );
  }
  const rows = sentences.map((s) => encodeText(s, dim));
  return toEmbedding(
    rows,
    classNames.map((_, i) => i),
    classNames,
    dim,
  );
}

export function runExport(job: ExportJob): ExportResult {
  const dim = job.dim ?? DEFAULT_DIM;
  mkdirSync(job.outDir, { recursive: true });
  const { file: images, skipped } = exportImages(job);
  const text = exportText(job.classNames, job.template, dim);

  const imagesPath = join(job.outDir, "images.emb");
  const textPath = join(job.outDir, "text.emb");
  writeEmb1(imagesPath, images);
  writeEmb1(textPath, text);

  let anchorsPath: string | null = null;
  if (job.anchorSentences) {
    anchorsPath = join(job.outDir, "anchors.emb");
    writeEmb1(anchorsPath, exportAnchors(job.classNames, job.anchorSentences, dim));
  }

  // dataset manifest in the schema the downstream loader expects
  const manifestPath = join(job.outDir, "manifest.json");
  writeFileSync(
    manifestPath,
    JSON.stringify(
      {
        train: "images.emb",
        test: "images.emb",
        anchors: anchorsPath ? "anchors.emb" : null,
        split: null,
      },
      null,
      2,
    ) + "\n",
  );

  const accuracy = zeroShotAccuracy(images.features, images.labels, text.features, dim);
  const reportPath = join(job.outDir, "report.json");
  writeFileSync(
    reportPath,
    JSON.stringify(
      {
        exported: images.labels.length,
        skipped,
        dim,
        classes: job.classNames,
        template: job.template,
        zero_shot_accuracy: accuracy,
      },
      null,
      2,
    ) + "\n",
  );
  return {
    imagesPath,
    textPath,
    anchorsPath,
    manifestPath,
    reportPath,
    exported: images.labels.length,
    skipped,
    zeroShotAccuracy: accuracy,
  };
}

export function loadAnchorSentences(path: string): string[] {
  if (!existsSync(path)) throw new Error(`anchor sentence file ${path} not found`);
  return readFileSync(path, "utf-8")
    .split("\n")
    .map((s) => s.trim())
    .filter((s) => s.length > 0);
}
