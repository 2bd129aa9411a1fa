import * as tf from "@tensorflow/tfjs";
import "@tensorflow/tfjs-backend-wasm";
import { serve } from "./serve";

// stdout is reserved for protocol responses; send any library chatter to
// stderr along with our own logs.
console.log = console.error;
console.info = console.error;

async function main(): Promise<void> {
  const device = process.env.BIONAS_TRAINER_DEVICE || "wasm";
  if (!(await tf.setBackend(device))) {
    console.error(`[trainer] backend ${device} unavailable, falling back to cpu`);
    await tf.setBackend("cpu");
  }
  await tf.ready();
  console.error(`[trainer] ready on backend ${tf.getBackend()}`);
  await serve();
}

main().catch((exc) => {
  console.error(`[trainer] fatal: ${exc?.stack ?? exc}`);
  process.exit(1);
});
