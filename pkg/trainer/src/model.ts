import * as tf from "@tensorflow/tfjs";
import { MatmulConv1D } from "./conv";

export interface ArchParams {
  blocks: number; // B in [0, 15]
  filterInterval: number; // x in [1, 4]
  lstmExp: number; // z in [4, 8]; cells = 2^z
}

// Fixed initializer seed: identical weights for identical requests, so a
// re-evaluated architecture reports the same quality.
const INIT_SEED = 1717;

// Moving statistics adapt quickly; with desk-scale datasets the tfjs
// default (0.99) leaves inference-time normalization stale for the first
// hundred steps.
const BN_MOMENTUM = 0.9;

export function validateArch(arch: ArchParams): string | null {
  if (!Number.isInteger(arch.blocks) || arch.blocks < 0 || arch.blocks > 15) {
    return `blocks=${arch.blocks} outside [0, 15]`;
  }
  if (!Number.isInteger(arch.filterInterval) || arch.filterInterval < 1 || arch.filterInterval > 4) {
    return `filter interval=${arch.filterInterval} outside [1, 4]`;
  }
  if (!Number.isInteger(arch.lstmExp) || arch.lstmExp < 4 || arch.lstmExp > 8) {
    return `lstm exponent=${arch.lstmExp} outside [4, 8]`;
  }
  return null;
}

export function filterSchedule(arch: ArchParams): number[] {
  const filters: number[] = [];
  for (let i = 1; i <= arch.blocks; i++) {
    filters.push(32 * 2 ** Math.floor((i - 1) / arch.filterInterval));
  }
  return filters;
}

/**
 * The canonical stack shared with the search engine's cost model:
 * conv(16, 32) -> BN -> relu, then B residual blocks (conv/BN/relu/dropout/
 * conv/BN, projected shortcut on channel change, relu), an LSTM over the
 * full sequence emitting its final state, and a softmax classifier.
 */
export function buildModel(
  arch: ArchParams,
  inputLen: number,
  channels: number,
  numClasses: number,
  dropout: number
): tf.LayersModel {
  let seed = INIT_SEED;
  const conv = (filters: number, kernelSize: number) =>
    new MatmulConv1D({ filters, kernelSize, seed: seed++ });
  const bn = () => tf.layers.batchNormalization({ momentum: BN_MOMENTUM });

  const input = tf.input({ shape: [inputLen, channels] });
  let x = conv(32, 16).apply(input) as tf.SymbolicTensor;
  x = bn().apply(x) as tf.SymbolicTensor;
  x = tf.layers.activation({ activation: "relu" }).apply(x) as tf.SymbolicTensor;

  let currentChannels = 32;
  for (const filters of filterSchedule(arch)) {
    let y = conv(filters, 16).apply(x) as tf.SymbolicTensor;
    y = bn().apply(y) as tf.SymbolicTensor;
    y = tf.layers.activation({ activation: "relu" }).apply(y) as tf.SymbolicTensor;
    y = tf.layers.dropout({ rate: dropout, seed: seed++ }).apply(y) as tf.SymbolicTensor;
    y = conv(filters, 16).apply(y) as tf.SymbolicTensor;
    y = bn().apply(y) as tf.SymbolicTensor;
    let shortcut = x;
    if (currentChannels !== filters) {
      shortcut = conv(filters, 1).apply(x) as tf.SymbolicTensor;
    }
    x = tf.layers.add().apply([y, shortcut]) as tf.SymbolicTensor;
    x = tf.layers.activation({ activation: "relu" }).apply(x) as tf.SymbolicTensor;
    currentChannels = filters;
  }

  // Variance-scaled initializers throughout; the default orthogonal
  // recurrent initializer decomposes a units x 4*units matrix in JS, which
  // takes minutes for the larger LSTM sizes.
  x = tf.layers
    .lstm({
      units: 2 ** arch.lstmExp,
      kernelInitializer: tf.initializers.heNormal({ seed: seed++ }),
      recurrentInitializer: tf.initializers.glorotNormal({ seed: seed++ }),
    })
    .apply(x) as tf.SymbolicTensor;
  const output = tf.layers
    .dense({
      units: numClasses,
      activation: "softmax",
      kernelInitializer: tf.initializers.heNormal({ seed: seed++ }),
    })
    .apply(x) as tf.SymbolicTensor;
  return tf.model({ inputs: input, outputs: output });
}
