// Toy CNN architecture and MNIST training.

import * as tf from '@tensorflow/tfjs';

export function buildTinyCnn(seed = 42): tf.LayersModel {
  const init = (s: number) => tf.initializers.glorotUniform({ seed: seed + s });
  const model = tf.sequential();
  model.add(tf.layers.conv2d({
    inputShape: [28, 28, 1], filters: 4, kernelSize: 3, padding: 'same',
    activation: 'linear', kernelInitializer: init(1), name: 'c1',
  }));
  model.add(tf.layers.reLU());
  model.add(tf.layers.maxPooling2d({ poolSize: 2 }));
  model.add(tf.layers.conv2d({
    filters: 8, kernelSize: 3, padding: 'same', activation: 'linear',
    kernelInitializer: init(2), name: 'c2',
  }));
  model.add(tf.layers.reLU());
  model.add(tf.layers.maxPooling2d({ poolSize: 2 }));
  model.add(tf.layers.flatten());
  model.add(tf.layers.dense({ units: 10, activation: 'linear', kernelInitializer: init(3) }));
  model.add(tf.layers.softmax());
  return model;
}

export interface DigitData {
  x: tf.Tensor4D;
  y: tf.Tensor2D;
  testX: tf.Tensor4D;
  testY: tf.Tensor2D;
}

export function loadDigits(nTrain: number, nTest: number): DigitData {
  // bundled MNIST digits, inputs already scaled to [0, 1]
  // eslint-disable-next-line @typescript-eslint/no-var-requires
  const mnist = require('mnist');
  const set = mnist.set(nTrain, nTest);
  const toTensors = (rows: { input: number[]; output: number[] }[]) => ({
    x: tf.tensor4d(rows.map((r) => r.input).flat(), [rows.length, 28, 28, 1]),
    y: tf.tensor2d(rows.map((r) => r.output).flat(), [rows.length, 10]),
  });
  const tr = toTensors(set.training);
  const te = toTensors(set.test);
  return { x: tr.x, y: tr.y, testX: te.x, testY: te.y };
}

export async function trainTinyCnn(
  model: tf.LayersModel, data: DigitData, epochs: number,
): Promise<number> {
  model.compile({
    optimizer: tf.train.adam(),
    loss: 'categoricalCrossentropy',
    metrics: ['accuracy'],
  });
  await model.fit(data.x, data.y, { epochs, batchSize: 32, verbose: 0 });
  const evl = model.evaluate(data.testX, data.testY) as tf.Scalar[];
  return (await evl[1].data())[0];
}
