export { encodeEmb1, readEmb1, writeEmb1, type EmbeddingFile } from "./emb1.js";
export { decodeNetpbm, encodePpm, readImage, type RgbImage } from "./images.js";
export {
  DEFAULT_DIM,
  dominantColorName,
  encodeImage,
  encodeText,
  normalize,
  wordVector,
} from "./encoder.js";
export { cosine, zeroShotAccuracy } from "./zeroShot.js";
export {
  exportAnchors,
  exportImages,
  exportText,
  fillTemplate,
  loadAnchorSentences,
  readClassList,
  readImageManifest,
  runExport,
  type ExportJob,
  type ExportResult,
  type ImageEntry,
} from "./exporter.js";
