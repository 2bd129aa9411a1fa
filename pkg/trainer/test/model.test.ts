import { spawnSync } from "node:child_process";
import { describe, expect, it } from "vitest";
import * as tf from "@tensorflow/tfjs";
import { buildModel, filterSchedule } from "../src/model";

/** Analytical parameter count from the engine's own cost table. */
function engineParamCount(B: number, x: number, z: number): number {
  const run = (cmd: string, args: string[]) => spawnSync(cmd, args, { encoding: "utf-8" });
  const args = ["space", "describe", "--arch", `B=${B},x=${x},z=${z}`];
  let proc = run("bionas", args);
  if (proc.error || proc.status !== 0) {
    proc = run("python3", ["-m", "bionas.cli", ...args]);
  }
  expect(proc.status).toBe(0);
  const totals = proc.stdout.trim().split("\n").at(-1)!.split(",");
  expect(totals[0]).toBe("total");
  return parseInt(totals[4], 10);
}

describe("model construction", () => {
  it("filter schedule doubles every interval", () => {
    expect(filterSchedule({ blocks: 5, filterInterval: 2, lstmExp: 4 })).toEqual([
      32, 32, 64, 64, 128,
    ]);
    expect(filterSchedule({ blocks: 0, filterInterval: 1, lstmExp: 4 })).toEqual([]);
  });

  it("parameter counts equal the engine's analytical model on 5 architectures", () => {
    const samples: [number, number, number][] = [
      [0, 1, 4],
      [1, 1, 4],
      [2, 2, 5],
      [3, 4, 6],
      [1, 3, 8],
    ];
    for (const [B, x, z] of samples) {
      const model = buildModel(
        { blocks: B, filterInterval: x, lstmExp: z },
        256,
        1,
        2,
        0.2
      );
      const counted = model.countParams();
      model.dispose();
      expect(counted, `B=${B},x=${x},z=${z}`).toBe(engineParamCount(B, x, z));
    }
  }, 120_000);

  it("classifier width follows the class count", () => {
    const model = buildModel({ blocks: 0, filterInterval: 1, lstmExp: 4 }, 256, 1, 5, 0.2);
    const output = model.outputs[0];
    expect(output.shape).toEqual([null, 5]);
    model.dispose();
  });

  it("convolution output keeps the sequence length", () => {
    const model = buildModel({ blocks: 2, filterInterval: 1, lstmExp: 4 }, 256, 1, 2, 0.2);
    const x = tf.zeros([1, 256, 1]);
    const y = model.predict(x) as tf.Tensor;
    expect(y.shape).toEqual([1, 2]);
    x.dispose();
    y.dispose();
    model.dispose();
  });
});
