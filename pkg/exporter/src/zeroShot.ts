// Reference cosine-argmax accuracy, used as the exporter-side parity check
// against the downstream toolkit's own zero-shot evaluation.

export function cosine(a: ArrayLike<number>, b: ArrayLike<number>): number {
  let dot = 0;
  let na = 0;
  let nb = 0;
  for (let i = 0; i < a.length; i++) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const denom = Math.sqrt(na) * Math.sqrt(nb);
  if (denom < 1e-12) throw new Error("cosine of a zero vector");
  return dot / denom;
}

export function zeroShotAccuracy(
  features: Float32Array | Float64Array,
  labels: ArrayLike<number>,
  prototypes: Float32Array | Float64Array,
  dim: number,
): number {
  const n = labels.length;
  const classes = prototypes.length / dim;
  let correct = 0;
  for (let i = 0; i < n; i++) {
    const row = features.subarray(i * dim, (i + 1) * dim);
    let best = -1;
    let bestSim = Number.NEGATIVE_INFINITY;
    for (let c = 0; c < classes; c++) {
      const sim = cosine(row, prototypes.subarray(c * dim, (c + 1) * dim));
      if (sim > bestSim) {
        bestSim = sim;
        best = c;
      }
    }
    if (best === labels[i]) correct++;
  }
  return (100 * correct) / n;
}
