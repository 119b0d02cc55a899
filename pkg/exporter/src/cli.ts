#!/usr/bin/env node
// export_model --arch tiny_cnn --train --out dir/
// export_model --source path/to/model.json --out dir/

import * as tf from '@tensorflow/tfjs';
import { exportModel } from './export';
import { buildTinyCnn, loadDigits, trainTinyCnn } from './model';

interface Args {
  arch: string;
  source: string | null;
  train: boolean;
  out: string;
  samples: number;
  epochs: number;
  fixtures: number;
  seed: number;
}

function parseArgs(argv: string[]): Args {
  const args: Args = {
    arch: 'tiny_cnn', source: null, train: false, out: '',
    samples: 2000, epochs: 3, fixtures: 6, seed: 42,
  };
  for (let i = 0; i < argv.length; i++) {
    const a = argv[i];
    if (a === '--train') args.train = true;
    else if (a === '--arch') args.arch = argv[++i];
    else if (a === '--source') args.source = argv[++i];
    else if (a === '--out') args.out = argv[++i];
    else if (a === '--samples') args.samples = parseInt(argv[++i], 10);
    else if (a === '--epochs') args.epochs = parseInt(argv[++i], 10);
    else if (a === '--fixtures') args.fixtures = parseInt(argv[++i], 10);
    else if (a === '--seed') args.seed = parseInt(argv[++i], 10);
    else throw new Error(`unknown argument ${a}`);
  }
  if (!args.out) throw new Error('--out is required');
  return args;
}

async function main(): Promise<void> {
  const args = parseArgs(process.argv.slice(2));
  let model: tf.LayersModel;
  let fixtureInputs: tf.Tensor4D | null = null;
  let fixtureLabels: number[] | undefined;

  if (args.source) {
    model = await tf.loadLayersModel(`file://${args.source}`);
  } else if (args.arch === 'tiny_cnn') {
    model = buildTinyCnn(args.seed);
  } else {
    throw new Error(`unknown architecture ${args.arch}`);
  }

  const data = loadDigits(args.samples, Math.max(args.fixtures, 64));
  if (args.train) {
    const acc = await trainTinyCnn(model, data, args.epochs);
    console.log(`test accuracy after ${args.epochs} epochs: ${(100 * acc).toFixed(1)}%`);
  }
  fixtureInputs = data.testX.slice([0, 0, 0, 0], [args.fixtures, -1, -1, -1]) as tf.Tensor4D;
  fixtureLabels = Array.from(data.testY.argMax(1).dataSync()).slice(0, args.fixtures);

  const res = exportModel({ model, outDir: args.out, fixtureInputs, fixtureLabels });
  console.log(`wrote ${res.manifestPath} (${res.translation.blobs.length} blobs)`);
  if (res.referencePath) console.log(`wrote ${res.referencePath}`);
}

main().catch((err) => {
  console.error(`error: ${err.message}`);
  process.exit(1);
});
