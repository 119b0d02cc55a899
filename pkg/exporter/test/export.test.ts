import * as fs from 'fs';
import * as os from 'os';
import * as path from 'path';
import * as tf from '@tensorflow/tfjs';
import { beforeAll, describe, expect, it } from 'vitest';
import { readBlob } from '../src/blob';
import { exportModel } from '../src/export';
import { buildTinyCnn } from '../src/model';
import { translateModel } from '../src/translate';

let outDir: string;
let doc: any;

beforeAll(() => {
  outDir = fs.mkdtempSync(path.join(os.tmpdir(), 'export-'));
  const model = buildTinyCnn(7);
  const inputs = tf.randomUniform([3, 28, 28, 1], 0, 1, 'float32', 11) as tf.Tensor4D;
  exportModel({ model, outDir, fixtureInputs: inputs });
  doc = JSON.parse(fs.readFileSync(path.join(outDir, 'manifest.json'), 'utf-8'));
});

describe('manifest translation', () => {
  it('emits the expected layer chain', () => {
    const kinds = doc.layers.map((l: any) => l.kind);
    expect(kinds).toEqual([
      'input', 'conv', 'relu', 'max_pool', 'conv', 'relu', 'max_pool',
      'dense', 'softmax',
    ]);
    expect(doc.input_shape).toEqual([28, 28, 1]);
    expect(doc.output_size).toBe(10);
  });

  it('chains layer inputs linearly', () => {
    for (let i = 1; i < doc.layers.length; i++) {
      expect(doc.layers[i].inputs).toEqual([doc.layers[i - 1].id]);
    }
  });

  it('writes channels-last kernel blobs of the declared shapes', () => {
    const conv1 = doc.layers[1];
    const blob = readBlob(path.join(outDir, `${conv1.weight_ref}.blob`));
    expect(blob.dims).toEqual([3, 3, 1, 4]);
    const dense = doc.layers[7];
    const dblob = readBlob(path.join(outDir, `${dense.weight_ref}.blob`));
    expect(dblob.dims).toEqual([7 * 7 * 8, 10]);
    expect(conv1.params.padding).toEqual([1, 1]);
    expect(conv1.params.bias_ref).toBeDefined();
  });
});

describe('reference activations', () => {
  it('covers every bearing layer for every fixture', () => {
    const ref = JSON.parse(
      fs.readFileSync(path.join(outDir, 'reference_activations.json'), 'utf-8'));
    expect(ref.precision).toBe('float32');
    expect(ref.fixtures.length).toBe(3);
    const bearing = doc.layers
      .filter((l: any) => !['relu', 'softmax', 'batch_norm'].includes(l.kind))
      .map((l: any) => l.id);
    for (const fx of ref.fixtures) {
      expect(Object.keys(fx.states).sort()).toEqual([...bearing].sort());
      const input = readBlob(path.join(outDir, fx.input));
      expect(Array.from(input.data)).toEqual(fx.states.input);
      // relu consistency: conv state is max(0, preactivation)
      const convId = doc.layers[1].id;
      fx.preactivations[convId].forEach((q: number, i: number) => {
        expect(fx.states[convId][i]).toBeCloseTo(Math.max(0, q), 6);
      });
      // logits are the dense output, prediction is their argmax
      const denseId = doc.layers[7].id;
      expect(fx.logits).toEqual(fx.states[denseId]);
      const best = fx.logits.indexOf(Math.max(...fx.logits));
      expect(fx.predicted_class).toBe(best);
    }
  });
});

describe('unsupported layers', () => {
  it('are reported by class name', () => {
    const model = tf.sequential();
    model.add(tf.layers.dense({ units: 4, inputShape: [3] }));
    model.add(tf.layers.leakyReLU());
    expect(() => translateModel(model)).toThrow(/LeakyReLU/);
  });

  it('fused activations are rejected with guidance', () => {
    const model = tf.sequential();
    model.add(tf.layers.dense({ units: 4, inputShape: [3], activation: 'relu' }));
    expect(() => translateModel(model)).toThrow(/separate activation layers/);
  });
});
