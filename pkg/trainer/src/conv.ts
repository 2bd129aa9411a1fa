import * as tf from "@tensorflow/tfjs";

export interface MatmulConv1DConfig {
  filters: number;
  kernelSize: number;
  seed?: number;
  name?: string;
}

/**
 * Stride-1 "same"-padding 1-D convolution expressed as im2col + matMul.
 *
 * The WASM backend has no gradient kernels for the native conv ops, but it
 * trains matMul/pad/slice/concat just fine, so the layer unrolls the k taps
 * into columns and multiplies once. Weight shapes (kernel [k, cin, cout],
 * bias [cout]) match the stock conv1d layer, keeping parameter counts
 * identical to the engine's analytical cost model.
 */
export class MatmulConv1D extends tf.layers.Layer {
  static className = "MatmulConv1D";

  private readonly filters: number;
  private readonly kernelSize: number;
  private readonly seed: number | undefined;
  private kernel: tf.LayerVariable | null = null;
  private bias: tf.LayerVariable | null = null;

  constructor(config: MatmulConv1DConfig) {
    super({ name: config.name });
    this.filters = config.filters;
    this.kernelSize = config.kernelSize;
    this.seed = config.seed;
  }

  override build(inputShape: tf.Shape | tf.Shape[]): void {
    const shape = (Array.isArray(inputShape[0]) ? inputShape[0] : inputShape) as number[];
    const cin = shape[shape.length - 1];
    this.kernel = this.addWeight(
      "kernel",
      [this.kernelSize, cin, this.filters],
      "float32",
      tf.initializers.heNormal({ seed: this.seed })
    );
    this.bias = this.addWeight("bias", [this.filters], "float32", tf.initializers.zeros());
    super.build(inputShape);
  }

  override computeOutputShape(inputShape: tf.Shape | tf.Shape[]): tf.Shape {
    const shape = (Array.isArray(inputShape[0]) ? inputShape[0] : inputShape) as number[];
    return [shape[0], shape[1], this.filters];
  }

  override call(inputs: tf.Tensor | tf.Tensor[]): tf.Tensor {
    return tf.tidy(() => {
      const x = (Array.isArray(inputs) ? inputs[0] : inputs) as tf.Tensor3D;
      const [n, len, cin] = x.shape;
      const k = this.kernelSize;
      const left = Math.floor((k - 1) / 2);
      const padded = tf.pad(x, [
        [0, 0],
        [left, k - 1 - left],
        [0, 0],
      ]);
      const taps: tf.Tensor[] = [];
      for (let i = 0; i < k; i++) {
        taps.push(tf.slice(padded, [0, i, 0], [n, len, cin]));
      }
      const columns = tf.concat(taps, 2).reshape([n * len, k * cin]);
      const weights = this.kernel!.read().reshape([k * cin, this.filters]);
      const out = tf.matMul(columns, weights).reshape([n, len, this.filters]);
      return tf.add(out, this.bias!.read());
    });
  }

  override getConfig(): tf.serialization.ConfigDict {
    return { ...super.getConfig(), filters: this.filters, kernelSize: this.kernelSize };
  }
}

tf.serialization.registerClass(MatmulConv1D);
