// Interchange manifest types mirroring the frustra JSON schema.

export interface LayerEntry {
  id: string;
  kind: string;
  inputs: string[];
  params: Record<string, unknown>;
  weight_ref?: string;
}

export interface Manifest {
  input_shape: number[];
  output_size: number;
  layers: LayerEntry[];
}

export interface BlobOut {
  name: string;
  dims: number[];
  data: Float32Array;
}

/** Layers whose tensor elements become graph nodes on the consumer side. */
export const BEARING_KINDS = new Set([
  'input', 'conv', 'grouped_conv', 'dense', 'max_pool', 'avg_pool', 'add', 'concat',
]);
