// Layer-by-layer translation of a linear-chain tfjs model into the
// interchange manifest.  Blob layouts are channels-last throughout:
// conv kernels [kh, kw, in, out] and dense kernels [in, out] come out of
// tfjs in exactly that order, so tensors are dumped as-is in float32.

import * as tf from '@tensorflow/tfjs';
import { BlobOut, LayerEntry, Manifest } from './manifest';

export interface Translation {
  manifest: Manifest;
  blobs: BlobOut[];
  /** tfjs layer whose output is the bearing layer's preactivation */
  preactOf: Map<string, tf.layers.Layer>;
  /** tfjs layer whose output is the bearing layer's stored state
   * (post decorations, pre softmax) */
  stateOf: Map<string, tf.layers.Layer>;
  bearingIds: string[];
}

function pair(v: number | number[]): [number, number] {
  return Array.isArray(v) ? [v[0], v[1]] : [v, v];
}

function samePadding(kernel: [number, number], id: string): [number, number] {
  if (kernel[0] % 2 === 0 || kernel[1] % 2 === 0) {
    throw new Error(`layer ${id}: 'same' padding with even kernels is not representable`);
  }
  return [(kernel[0] - 1) / 2, (kernel[1] - 1) / 2];
}

function tensorData(t: tf.Tensor): Float32Array {
  return t.dataSync() as Float32Array;
}

export function translateModel(model: tf.LayersModel): Translation {
  const layers: LayerEntry[] = [];
  const blobs: BlobOut[] = [];
  const preactOf = new Map<string, tf.layers.Layer>();
  const stateOf = new Map<string, tf.layers.Layer>();
  const bearingIds: string[] = [];

  let counter = 0;
  const freshId = (kind: string) => `${kind}_${counter++}`;

  // sequential models do not list their implicit input layer
  const inputShape = model.inputs[0].shape.slice(1).map((d) => d ?? 1);
  layers.push({ id: 'input', kind: 'input', inputs: [], params: {} });
  bearingIds.push('input');
  let prevId = 'input';     // id of the previous emitted IR layer
  let curBearing = 'input'; // bearing layer currently collecting decorations

  const emit = (entry: LayerEntry, tfLayer: tf.layers.Layer, bearing: boolean) => {
    layers.push(entry);
    prevId = entry.id;
    if (bearing) {
      curBearing = entry.id;
      bearingIds.push(entry.id);
      preactOf.set(entry.id, tfLayer);
      stateOf.set(entry.id, tfLayer);
    } else if (entry.kind !== 'softmax') {
      // softmax never alters the stored state (logits are kept)
      stateOf.set(curBearing, tfLayer);
    }
  };

  for (const layer of model.layers) {
    const cls = layer.getClassName();
    const cfg = layer.getConfig() as Record<string, any>;
    if (cls === 'InputLayer') {
      continue;  // already synthesized above
    }
    if (cls === 'Conv2D') {
      const kernel = pair(cfg.kernelSize);
      const strides = pair(cfg.strides ?? 1);
      const padding =
        cfg.padding === 'same' ? samePadding(kernel, layer.name) : ([0, 0] as [number, number]);
      if (cfg.activation && cfg.activation !== 'linear') {
        throw new Error(
          `layer ${layer.name}: fused activation '${cfg.activation}'; build with separate activation layers`);
      }
      const id = freshId('conv');
      const [kernelT, biasT] = layer.getWeights();
      blobs.push({ name: `${id}_w`, dims: kernelT.shape as number[], data: tensorData(kernelT) });
      const params: Record<string, unknown> = {
        kernel, stride: strides, padding, out_channels: cfg.filters,
      };
      if (biasT) {
        blobs.push({ name: `${id}_b`, dims: [biasT.shape[0] as number], data: tensorData(biasT) });
        params.bias_ref = `${id}_b`;
      }
      emit({ id, kind: 'conv', inputs: [prevId], params, weight_ref: `${id}_w` }, layer, true);
      continue;
    }
    if (cls === 'Dense') {
      if (cfg.activation && cfg.activation !== 'linear') {
        throw new Error(
          `layer ${layer.name}: fused activation '${cfg.activation}'; build with separate activation layers`);
      }
      const id = freshId('dense');
      const [kernelT, biasT] = layer.getWeights();
      blobs.push({ name: `${id}_w`, dims: kernelT.shape as number[], data: tensorData(kernelT) });
      const params: Record<string, unknown> = { out_features: cfg.units };
      if (biasT) {
        blobs.push({ name: `${id}_b`, dims: [biasT.shape[0] as number], data: tensorData(biasT) });
        params.bias_ref = `${id}_b`;
      }
      emit({ id, kind: 'dense', inputs: [prevId], params, weight_ref: `${id}_w` }, layer, true);
      continue;
    }
    if (cls === 'MaxPooling2D' || cls === 'AveragePooling2D') {
      const pool = pair(cfg.poolSize);
      const strides = pair(cfg.strides ?? cfg.poolSize);
      if (pool[0] !== pool[1]) {
        throw new Error(`layer ${layer.name}: non-square pooling window [${pool}]`);
      }
      if (cfg.padding && cfg.padding !== 'valid') {
        throw new Error(`layer ${layer.name}: '${cfg.padding}' pooling padding is not supported`);
      }
      const id = freshId(cls === 'MaxPooling2D' ? 'max_pool' : 'avg_pool');
      emit({
        id, kind: cls === 'MaxPooling2D' ? 'max_pool' : 'avg_pool',
        inputs: [prevId], params: { window: pool[0], stride: strides },
      }, layer, true);
      continue;
    }
    if (cls === 'ReLU' || (cls === 'Activation' && cfg.activation === 'relu')) {
      emit({ id: freshId('relu'), kind: 'relu', inputs: [prevId], params: {} }, layer, false);
      continue;
    }
    if (cls === 'Softmax' || (cls === 'Activation' && cfg.activation === 'softmax')) {
      emit({ id: freshId('softmax'), kind: 'softmax', inputs: [prevId], params: {} }, layer, false);
      continue;
    }
    if (cls === 'BatchNormalization') {
      const [gamma, beta, mean, variance] = layer.getWeights();
      emit({
        id: freshId('batch_norm'), kind: 'batch_norm', inputs: [prevId],
        params: {
          gamma: Array.from(tensorData(gamma)),
          beta: Array.from(tensorData(beta)),
          mean: Array.from(tensorData(mean)),
          variance: Array.from(tensorData(variance)),
          epsilon: cfg.epsilon ?? 1e-3,
        },
      }, layer, false);
      continue;
    }
    if (cls === 'Flatten' || cls === 'Dropout') {
      // flatten is a raster no-op in channels-last node order; dropout is
      // the identity at inference time
      continue;
    }
    throw new Error(`unsupported layer kind: ${cls} (${layer.name})`);
  }

  const outUnits = model.outputs[0].shape
    .slice(1)
    .reduce((a: number, b) => a * (b ?? 1), 1);
  return {
    manifest: { input_shape: inputShape, output_size: outUnits, layers },
    blobs,
    preactOf,
    stateOf,
    bearingIds,
  };
}
