// Export driver: writes manifest.json, weight blobs, fixture inputs and
// reference activations for cross-engine validation.  Weights are dumped
// as float32 whatever the source precision; reference activations are the
// tfjs float32 forward pass.

import * as fs from 'fs';
import * as path from 'path';
import * as tf from '@tensorflow/tfjs';
import { writeBlob } from './blob';
import { translateModel, Translation } from './translate';

export interface ExportJob {
  model: tf.LayersModel;
  outDir: string;
  fixtureInputs: tf.Tensor4D | null;
  fixtureLabels?: number[];
}

export interface ExportResult {
  manifestPath: string;
  translation: Translation;
  referencePath: string | null;
}

export function exportModel(job: ExportJob): ExportResult {
  const tr = translateModel(job.model);
  fs.mkdirSync(job.outDir, { recursive: true });
  const manifestPath = path.join(job.outDir, 'manifest.json');
  fs.writeFileSync(manifestPath, JSON.stringify(tr.manifest, null, 1) + '\n');
  for (const blob of tr.blobs) {
    writeBlob(path.join(job.outDir, `${blob.name}.blob`), blob.dims, blob.data);
  }

  let referencePath: string | null = null;
  if (job.fixtureInputs) {
    referencePath = path.join(job.outDir, 'reference_activations.json');
    const doc = dumpReferenceActivations(job, tr);
    fs.writeFileSync(referencePath, JSON.stringify(doc, null, 1) + '\n');
  }
  return { manifestPath, translation: tr, referencePath };
}

function dumpReferenceActivations(job: ExportJob, tr: Translation) {
  const model = job.model;
  const inputs = job.fixtureInputs as tf.Tensor4D;
  const fixDir = path.join(job.outDir, 'fixtures');
  fs.mkdirSync(fixDir, { recursive: true });

  // probe model: per bearing layer, its preactivation and stored state;
  // outputs must be unique tensors (pool layers serve as both)
  const slotOf = new Map<tf.layers.Layer, number>();
  const probeOutputs: tf.SymbolicTensor[] = [];
  const slot = (layer: tf.layers.Layer): number => {
    if (!slotOf.has(layer)) {
      slotOf.set(layer, probeOutputs.length);
      probeOutputs.push(layer.output as tf.SymbolicTensor);
    }
    return slotOf.get(layer)!;
  };
  const preSlot = new Map<string, number>();
  const stateSlot = new Map<string, number>();
  for (const id of tr.bearingIds) {
    if (id === 'input') continue;
    preSlot.set(id, slot(tr.preactOf.get(id)!));
    stateSlot.set(id, slot(tr.stateOf.get(id)!));
  }
  const probe = tf.model({ inputs: model.inputs, outputs: probeOutputs });

  const n = inputs.shape[0];
  const fixtures = [];
  for (let k = 0; k < n; k++) {
    const x = inputs.slice([k, 0, 0, 0], [1, -1, -1, -1]);
    const flat = x.dataSync() as Float32Array;
    const inputName = path.join('fixtures', `input_${k}.blob`);
    writeBlob(path.join(job.outDir, inputName),
              x.shape.slice(1) as number[], flat);
    const raw = probe.predict(x);
    const outs = Array.isArray(raw) ? raw : [raw];
    const values = outs.map((t) => Array.from(t.dataSync() as Float32Array));
    const states: Record<string, number[]> = { input: Array.from(flat) };
    const preacts: Record<string, number[]> = {};
    for (const id of tr.bearingIds) {
      if (id === 'input') continue;
      preacts[id] = values[preSlot.get(id)!];
      states[id] = values[stateSlot.get(id)!];
    }
    const outId = tr.bearingIds[tr.bearingIds.length - 1];
    const logits = states[outId];
    const predicted = logits.indexOf(Math.max(...logits));
    const entry: Record<string, unknown> = {
      input: inputName,
      states,
      preactivations: preacts,
      logits,
      predicted_class: predicted,
    };
    if (job.fixtureLabels) entry.label = job.fixtureLabels[k];
    fixtures.push(entry);
    tf.dispose(outs);
    x.dispose();
  }
  return { precision: 'float32', fixtures };
}
