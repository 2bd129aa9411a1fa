import * as tf from "@tensorflow/tfjs";
import { Dataset, Split, loadDataset } from "./dataset";
import { QualityMetrics, computeMetrics } from "./metrics";
import { buildModel, validateArch } from "./model";
import { Hyperparams, TrainRequest } from "./protocol";

const LOSS_PLATEAU = 1e-4; // loss counts as unchanged below this delta

export class TrainingError extends Error {}

function splitTensors(split: Split, window: number, channels: number, numClasses: number) {
  const xs = tf.tensor3d(split.features, [split.count, window, channels]);
  const ys = tf.oneHot(tf.tensor1d(split.labels, "int32"), numClasses);
  return { xs, ys };
}

export class TrainerSession {
  private readonly datasets = new Map<string, Dataset>();
  private readonly results = new Map<string, QualityMetrics>();

  private dataset(path: string): Dataset {
    let ds = this.datasets.get(path);
    if (!ds) {
      ds = loadDataset(path);
      this.datasets.set(path, ds);
    }
    return ds;
  }

  async handle(request: TrainRequest): Promise<QualityMetrics> {
    const cacheKey = JSON.stringify([request.arch, request.dataset, request.hp]);
    const cached = this.results.get(cacheKey);
    if (cached) return cached;

    const archError = validateArch(request.arch);
    if (archError) {
      throw new TrainingError(`build: ${archError}`);
    }
    let ds: Dataset;
    try {
      ds = this.dataset(request.dataset);
    } catch (exc) {
      throw new TrainingError(`dataset: ${(exc as Error).message}`);
    }
    const fileClasses = ds.header.classes;
    if (JSON.stringify(fileClasses) !== JSON.stringify(request.classes)) {
      throw new TrainingError(
        `dataset: classes [${fileClasses}] do not match request [${request.classes}]`
      );
    }
    if (ds.train.count === 0 || ds.test.count === 0) {
      throw new TrainingError("dataset: empty train or test split");
    }
    const metrics = await this.trainAndEvaluate(ds, request.hp, request.arch);
    this.results.set(cacheKey, metrics);
    return metrics;
  }

  private async trainAndEvaluate(
    ds: Dataset,
    hp: Hyperparams,
    arch: TrainRequest["arch"]
  ): Promise<QualityMetrics> {
    const { window, channels, classes } = ds.header;
    const model = buildModel(arch, window, channels, classes.length, hp.dropout);
    try {
      model.compile({
        optimizer: tf.train.adam(hp.lr, hp.beta1, hp.beta2),
        loss: "categoricalCrossentropy",
        metrics: ["accuracy"],
      });
      let previousLoss: number | null = null;
      let sawNaN = false;
      let epochsRun = 0;
      const train = splitTensors(ds.train, window, channels, classes.length);
      try {
        await model.fit(train.xs, train.ys, {
          batchSize: Math.min(hp.batch, ds.train.count),
          epochs: hp.maxEpochs,
          verbose: 0,
          callbacks: {
            // Early stop: training loss unchanged between consecutive epochs.
            onEpochEnd: async (_epoch, logs) => {
              epochsRun += 1;
              const loss = logs?.loss;
              if (typeof loss !== "number") return;
              if (!Number.isFinite(loss)) {
                sawNaN = true;
                model.stopTraining = true;
                return;
              }
              if (previousLoss !== null && Math.abs(loss - previousLoss) < LOSS_PLATEAU) {
                model.stopTraining = true;
              }
              previousLoss = loss;
            },
          },
        });
      } finally {
        train.xs.dispose();
        train.ys.dispose();
      }
      if (sawNaN) {
        throw new TrainingError("train: loss became non-finite");
      }
      console.error(
        `[trainer] B=${arch.blocks},x=${arch.filterInterval},z=${arch.lstmExp} ` +
          `trained ${epochsRun} epoch(s), params=${model.countParams()}`
      );
      return this.evaluate(model, ds.test, window, channels, classes);
    } finally {
      model.dispose();
    }
  }

  private evaluate(
    model: tf.LayersModel,
    split: Split,
    window: number,
    channels: number,
    classes: string[]
  ): QualityMetrics {
    const xs = tf.tensor3d(split.features, [split.count, window, channels]);
    try {
      const predicted = tf.tidy(() =>
        (model.predict(xs, { batchSize: 64 }) as tf.Tensor).argMax(-1)
      );
      const predictedData = predicted.dataSync();
      predicted.dispose();
      return computeMetrics(split.labels, predictedData, classes);
    } finally {
      xs.dispose();
    }
  }
}
