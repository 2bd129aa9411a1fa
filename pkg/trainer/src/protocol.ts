import { ArchParams } from "./model";
import { QualityMetrics } from "./metrics";

export interface Hyperparams {
  lr: number;
  batch: number;
  dropout: number;
  beta1: number;
  beta2: number;
  maxEpochs: number;
}

export const DEFAULT_HP: Hyperparams = {
  lr: 0.001,
  batch: 128,
  dropout: 0.2,
  beta1: 0.9,
  beta2: 0.999,
  maxEpochs: 50,
};

export interface TrainRequest {
  id: string;
  arch: ArchParams;
  classes: string[];
  dataset: string;
  hp: Hyperparams;
}

export type Response =
  | { id: string; status: "ok"; metrics: QualityMetrics }
  | { id: string; status: "failed"; reason: string };

export function okResponse(id: string, metrics: QualityMetrics): Response {
  return { id, status: "ok", metrics };
}

export function failedResponse(id: string, reason: string): Response {
  return { id, status: "failed", reason };
}

export function encodeResponse(response: Response): string {
  return `${JSON.stringify(response)}\n`;
}

/** Pulls a usable id out of any half-parsed line so failures stay matchable. */
export function extractId(value: unknown): string {
  if (value && typeof value === "object" && "id" in value) {
    const id = (value as { id: unknown }).id;
    if (typeof id === "string") return id;
    if (typeof id === "number") return String(id);
  }
  return "";
}

function asFiniteNumber(value: unknown, fallback: number): number {
  return typeof value === "number" && Number.isFinite(value) ? value : fallback;
}

/**
 * Validates one request line. Returns either the request or a failure
 * reason; never throws, since every line must produce exactly one response.
 */
export function parseRequest(line: string): { request?: TrainRequest; error?: string; id: string } {
  let data: unknown;
  try {
    data = JSON.parse(line);
  } catch (exc) {
    return { error: `parse: ${(exc as Error).message}`, id: "" };
  }
  const id = extractId(data);
  if (typeof data !== "object" || data === null) {
    return { error: "parse: request is not an object", id };
  }
  const obj = data as Record<string, unknown>;
  if (!id) {
    return { error: "parse: missing request id", id };
  }
  const arch = obj.arch as Record<string, unknown> | undefined;
  if (!arch || typeof arch !== "object") {
    return { error: "parse: missing arch", id };
  }
  const { B, x, z } = arch as { B?: unknown; x?: unknown; z?: unknown };
  if (typeof B !== "number" || typeof x !== "number" || typeof z !== "number") {
    return { error: "parse: arch needs numeric B, x, z", id };
  }
  const task = obj.task as Record<string, unknown> | undefined;
  if (!task || typeof task !== "object" || !Array.isArray(task.classes)) {
    return { error: "parse: missing task.classes", id };
  }
  const classes = task.classes.map(String);
  if (classes.length < 2) {
    return { error: "parse: task needs at least two classes", id };
  }
  if (typeof task.dataset !== "string" || task.dataset.length === 0) {
    return { error: "parse: missing task.dataset path", id };
  }
  const hpRaw = (obj.hp ?? {}) as Record<string, unknown>;
  const hp: Hyperparams = {
    lr: asFiniteNumber(hpRaw.lr, DEFAULT_HP.lr),
    batch: Math.max(1, Math.floor(asFiniteNumber(hpRaw.batch, DEFAULT_HP.batch))),
    dropout: asFiniteNumber(hpRaw.dropout, DEFAULT_HP.dropout),
    beta1: asFiniteNumber(hpRaw.beta1, DEFAULT_HP.beta1),
    beta2: asFiniteNumber(hpRaw.beta2, DEFAULT_HP.beta2),
    maxEpochs: Math.max(1, Math.floor(asFiniteNumber(hpRaw.max_epochs, DEFAULT_HP.maxEpochs))),
  };
  return {
    id,
    request: {
      id,
      arch: { blocks: B, filterInterval: x, lstmExp: z },
      classes,
      dataset: task.dataset,
      hp,
    },
  };
}
