export interface ClassMetrics {
  label: string;
  precision: number;
  recall: number;
  f1: number;
}

export interface QualityMetrics {
  accuracy: number;
  per_class: ClassMetrics[];
}

/** One-vs-rest metrics from predicted/true class indices; degenerate cases are 0. */
export function computeMetrics(
  trueLabels: ArrayLike<number>,
  predicted: ArrayLike<number>,
  classes: string[]
): QualityMetrics {
  const n = classes.length;
  const counts: number[][] = Array.from({ length: n }, () => new Array<number>(n).fill(0));
  let correct = 0;
  let total = 0;
  for (let i = 0; i < trueLabels.length; i++) {
    counts[trueLabels[i]][predicted[i]] += 1;
    if (trueLabels[i] === predicted[i]) correct += 1;
    total += 1;
  }
  const perClass: ClassMetrics[] = classes.map((label, c) => {
    const tp = counts[c][c];
    let fp = 0;
    let fn = 0;
    for (let other = 0; other < n; other++) {
      if (other !== c) {
        fp += counts[other][c];
        fn += counts[c][other];
      }
    }
    const precision = tp + fp > 0 ? tp / (tp + fp) : 0;
    const recall = tp + fn > 0 ? tp / (tp + fn) : 0;
    const f1 = precision + recall > 0 ? (2 * precision * recall) / (precision + recall) : 0;
    return { label, precision, recall, f1 };
  });
  return { accuracy: total > 0 ? correct / total : 0, per_class: perClass };
}
