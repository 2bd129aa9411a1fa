import { ChildProcessWithoutNullStreams, spawn } from "node:child_process";
import * as fs from "node:fs";
import * as path from "node:path";
import * as readline from "node:readline";

export const DIST_MAIN = path.join(__dirname, "..", "dist", "main.js");

/**
 * Writes a linearly separable two-class dataset in the engine's file format:
 * class 0 windows sit around -600 ADC counts, class 1 around +600, with
 * small noise. 70/10/20 split by round-robin tagging.
 */
export function writeSeparableDataset(
  filePath: string,
  windows = 60,
  window = 256,
  channels = 1
): void {
  const classes = ["Normal", "Anomaly"];
  const counts = { train: 0, val: 0, test: 0 };
  const rows: Buffer[] = [];
  for (let i = 0; i < windows; i++) {
    const label = i % 2;
    // Deterministic split tags in proportion 70/10/20.
    const slot = i % 10;
    const split = slot < 7 ? 0 : slot < 8 ? 1 : 2;
    counts[(["train", "val", "test"] as const)[split]] += 1;
    const row = Buffer.alloc(2 + channels * window * 2);
    row[0] = split;
    row[1] = label;
    for (let c = 0; c < channels; c++) {
      for (let t = 0; t < window; t++) {
        const base = label === 0 ? -600 : 600;
        const noise = Math.round(Math.sin(i * 31 + t * 7 + c) * 60);
        row.writeInt16LE(base + noise, 2 + (c * window + t) * 2);
      }
    }
    rows.push(row);
  }
  const header = {
    task_id: "DNN1",
    classes,
    counts,
    seed: 0,
    channels,
    window,
  };
  fs.writeFileSync(filePath, Buffer.concat([Buffer.from(`${JSON.stringify(header)}\n`), ...rows]));
}

export interface TrainerHandle {
  proc: ChildProcessWithoutNullStreams;
  send(line: string): void;
  nextLine(timeoutMs: number): Promise<string>;
  stop(): Promise<number | null>;
}

export function startTrainer(env: Record<string, string> = {}): TrainerHandle {
  const proc = spawn(process.execPath, [DIST_MAIN], {
    stdio: ["pipe", "pipe", "pipe"],
    env: { ...process.env, ...env },
  });
  proc.stderr.on("data", () => undefined); // drain logs
  const pending: string[] = [];
  const waiters: ((line: string) => void)[] = [];
  const rl = readline.createInterface({ input: proc.stdout });
  rl.on("line", (line) => {
    const waiter = waiters.shift();
    if (waiter) waiter(line);
    else pending.push(line);
  });
  return {
    proc,
    send(line: string) {
      proc.stdin.write(`${line}\n`);
    },
    nextLine(timeoutMs: number): Promise<string> {
      const ready = pending.shift();
      if (ready !== undefined) return Promise.resolve(ready);
      return new Promise((resolve, reject) => {
        const timer = setTimeout(
          () => reject(new Error(`no trainer response within ${timeoutMs} ms`)),
          timeoutMs
        );
        waiters.push((line) => {
          clearTimeout(timer);
          resolve(line);
        });
      });
    },
    stop(): Promise<number | null> {
      return new Promise((resolve) => {
        proc.on("exit", (code) => resolve(code));
        proc.stdin.end();
        setTimeout(() => proc.kill("SIGKILL"), 10_000).unref();
      });
    },
  };
}

export function trainRequest(overrides: Record<string, unknown> = {}): string {
  return JSON.stringify({
    id: "t-1",
    arch: { B: 1, x: 1, z: 4 },
    task: { classes: ["Normal", "Anomaly"], dataset: "/nonexistent.bin" },
    hp: { lr: 0.001, batch: 8, dropout: 0.2, beta1: 0.9, beta2: 0.999, max_epochs: 20 },
    ...overrides,
  });
}
