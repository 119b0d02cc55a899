// Binary tensor blobs: 8-byte magic "FRUSTBLB", u32 rank, u32 dims[],
// float32 payload, all little-endian.

import * as fs from 'fs';

const MAGIC = 'FRUSTBLB';

export function writeBlob(path: string, dims: number[], data: Float32Array): void {
  const count = dims.reduce((a, b) => a * b, 1);
  if (data.length !== count) {
    throw new Error(`blob payload ${data.length} does not match dims [${dims}]`);
  }
  const buf = Buffer.alloc(8 + 4 + 4 * dims.length + 4 * data.length);
  buf.write(MAGIC, 0, 'ascii');
  buf.writeUInt32LE(dims.length, 8);
  dims.forEach((d, i) => buf.writeUInt32LE(d, 12 + 4 * i));
  const payload = Buffer.from(data.buffer, data.byteOffset, data.byteLength);
  payload.copy(buf, 12 + 4 * dims.length);
  fs.writeFileSync(path, buf);
}

export function readBlob(path: string): { dims: number[]; data: Float32Array } {
  const buf = fs.readFileSync(path);
  if (buf.toString('ascii', 0, 8) !== MAGIC) {
    throw new Error(`${path}: bad blob magic`);
  }
  const rank = buf.readUInt32LE(8);
  const dims: number[] = [];
  for (let i = 0; i < rank; i++) {
    dims.push(buf.readUInt32LE(12 + 4 * i));
  }
  const off = 12 + 4 * rank;
  const count = dims.reduce((a, b) => a * b, 1);
  const data = new Float32Array(count);
  for (let i = 0; i < count; i++) {
    data[i] = buf.readFloatLE(off + 4 * i);
  }
  return { dims, data };
}
