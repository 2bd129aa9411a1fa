import * as fs from "node:fs";

export interface DatasetHeader {
  task_id: string;
  classes: string[];
  counts: { train: number; val: number; test: number };
  seed: number;
  channels: number;
  window: number;
}

export interface Split {
  /** Flattened [count, window, channels] features, normalized to ~[-1, 1]. */
  features: Float32Array;
  labels: Int32Array;
  count: number;
}

export interface Dataset {
  header: DatasetHeader;
  train: Split;
  val: Split;
  test: Split;
}

const SPLIT_NAMES = ["train", "val", "test"] as const;
const SAMPLE_SCALE = 2048; // 12-bit ADC full scale

/**
 * Reads the engine's dataset file: one JSON header line, then fixed rows of
 * u8 split tag, u8 class index, and channels x window little-endian i16
 * samples (channel-major).
 */
export function loadDataset(path: string): Dataset {
  const raw = fs.readFileSync(path);
  const newline = raw.indexOf(0x0a);
  if (newline < 0) {
    throw new Error(`${path}: missing dataset header line`);
  }
  const header = JSON.parse(raw.subarray(0, newline).toString("utf-8")) as DatasetHeader;
  const { channels, window } = header;
  const rowBytes = 2 + channels * window * 2;
  const body = raw.subarray(newline + 1);
  if (body.length % rowBytes !== 0) {
    throw new Error(`${path}: body is not a whole number of rows`);
  }
  const rows = body.length / rowBytes;

  const buckets: { features: number[][]; labels: number[] }[] = [
    { features: [], labels: [] },
    { features: [], labels: [] },
    { features: [], labels: [] },
  ];
  for (let r = 0; r < rows; r++) {
    const base = r * rowBytes;
    const splitTag = body[base];
    const label = body[base + 1];
    if (splitTag > 2) {
      throw new Error(`${path}: row ${r} has invalid split tag ${splitTag}`);
    }
    const sampleBase = base + 2;
    const feature = new Array<number>(window * channels);
    for (let t = 0; t < window; t++) {
      for (let c = 0; c < channels; c++) {
        const value = body.readInt16LE(sampleBase + (c * window + t) * 2);
        feature[t * channels + c] = value / SAMPLE_SCALE;
      }
    }
    buckets[splitTag].features.push(feature);
    buckets[splitTag].labels.push(label);
  }

  const toSplit = (bucket: { features: number[][]; labels: number[] }): Split => {
    const count = bucket.features.length;
    const features = new Float32Array(count * window * channels);
    bucket.features.forEach((row, i) => features.set(row, i * window * channels));
    return { features, labels: Int32Array.from(bucket.labels), count };
  };

  const [train, val, test] = buckets.map(toSplit);
  for (const [i, name] of SPLIT_NAMES.entries()) {
    const expected = header.counts[name];
    if (expected !== undefined && buckets[i].labels.length !== expected) {
      throw new Error(
        `${path}: ${name} split has ${buckets[i].labels.length} rows, header says ${expected}`
      );
    }
  }
  return { header, train, val, test };
}
