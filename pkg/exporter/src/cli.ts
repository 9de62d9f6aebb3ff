// export --images manifest.json --classes names.txt
//        --template "a photo of a {}" --out dir/
//
// Writes images.emb, text.emb, (optional) anchors.emb, the dataset
// manifest, and report.json with the exporter-side zero-shot accuracy.

import { parseArgs } from "node:util";

import {
  loadAnchorSentences,
  readClassList,
  readImageManifest,
  runExport,
} from "./exporter.js";

export function main(argv: string[]): number {
  const { values, positionals } = parseArgs({
    args: argv,
    allowPositionals: true,
    options: {
      images: { type: "string" },
      classes: { type: "string" },
      template: { type: "string", default: "a photo of a {}" },
      out: { type: "string" },
      dim: { type: "string", default: "64" },
      "anchor-sentences": { type: "string" },
      "fail-fast": { type: "boolean", default: false },
    },
  });
  if (positionals[0] !== "export") {
    console.error("usage: exporter export --images m.json --classes names.txt --out dir/");
    return 2;
  }
  for (const flag of ["images", "classes", "out"] as const) {
    if (!values[flag]) {
      console.error(`error: --${flag} is required`);
      return 2;
    }
  }
  const dim = Number.parseInt(values.dim as string, 10);
  if (!Number.isFinite(dim) || dim < 2) {
    console.error(`error: --dim must be an integer >= 2, got ${values.dim}`);
    return 2;
  }
  try {
    const result = runExport({
      images: readImageManifest(values.images as string),
      classNames: readClassList(values.classes as string),
      template: values.template as string,
      outDir: values.out as string,
      dim,
      anchorSentences: values["anchor-sentences"]
        ? loadAnchorSentences(values["anchor-sentences"] as string)
        : undefined,
      failFast: values["fail-fast"] as boolean,
    });
    console.log(
      `exported ${result.exported} images (${result.skipped.length} skipped), ` +
        `zero-shot ${result.zeroShotAccuracy.toFixed(4)} -> ${result.manifestPath}`,
    );
    return 0;
  } catch (err) {
    console.error(`error: ${err instanceof Error ? err.message : err}`);
    return 1;
  }
}

if (import.meta.url === `file://${process.argv[1]}`) {
  process.exit(main(process.argv.slice(2)));
}
