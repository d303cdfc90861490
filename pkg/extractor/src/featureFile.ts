/**
 * Reader/writer for the binary feature container shared with the Python
 * toolkit.  Layout (little-endian):
 *
 *   [ 0.. 4)  magic "FIDL"
 *   [ 4.. 8)  version, u32 (currently 1)
 *   [ 8..16)  payload kind, u64
 *   [16..24)  n rows, u64
 *   [24..32)  d feature dimension, u64
 *   [32..40)  n_classes, u64 (0 without a probabilities block)
 *   [40..48)  channels k, u64 (0 without an activations block)
 *   [48..56)  spatial s, u64 (0 without an activations block)
 *   [56..64)  flags, u64: bit0 probabilities, bit1 activations, bit2 ids
 *
 * then one u64-length-prefixed block per flag, in order: features
 * (always, float32 row-major), probabilities, activations (n contiguous
 * k*s*s chunks), image IDs (per entry: u32 byte length + UTF-8 bytes).
 */

import * as fs from 'fs';

import { FormatError, ValidationError } from './errors.js';

export const MAGIC = 'FIDL';
export const VERSION = 1;

export const PROB_SUM_TOL = 1e-4;
export const ACTIVATION_TOL = 1e-5;

const FLAG_PROBABILITIES = 1;
const FLAG_ACTIVATIONS = 2;
const FLAG_IMAGE_IDS = 4;

export type FeatureKind =
  | 'generic'
  | 'pre-logits'
  | 'logits'
  | 'probabilities'
  | 'binarized';

const KIND_CODES: Record<FeatureKind, number> = {
  generic: 0,
  'pre-logits': 1,
  logits: 2,
  probabilities: 3,
  binarized: 4,
};

const CODE_KINDS = new Map<number, FeatureKind>(
  Object.entries(KIND_CODES).map(([k, v]) => [v, k as FeatureKind]),
);

/** One feature file in memory.  Matrices are flat row-major arrays. */
export interface FeaturePayload {
  kind: FeatureKind;
  /** (n, d) row-major. */
  features: Float32Array;
  n: number;
  d: number;
  /** (n, nClasses) row-major, or null. */
  probabilities: Float32Array | null;
  nClasses: number;
  /** (n, k, s, s) with per-image contiguous chunks, or null. */
  activations: Float32Array | null;
  channels: number;
  spatial: number;
  imageIds: string[] | null;
}

export interface PayloadInput {
  kind: FeatureKind;
  features: Float32Array | Float64Array | number[];
  n: number;
  d: number;
  probabilities?: Float32Array | Float64Array | number[] | null;
  nClasses?: number;
  activations?: Float32Array | Float64Array | number[] | null;
  channels?: number;
  spatial?: number;
  imageIds?: string[] | null;
}

function toF32(values: Float32Array | Float64Array | number[]): Float32Array {
  return values instanceof Float32Array ? values : Float32Array.from(values);
}

function allFinite(arr: Float32Array): boolean {
  for (let i = 0; i < arr.length; i++) {
    if (!Number.isFinite(arr[i])) return false;
  }
  return true;
}

function validatePayload(p: FeaturePayload): void {
  if (p.features.length !== p.n * p.d) {
    throw new ValidationError(
      `features block holds ${p.features.length} values, expected ${p.n}x${p.d}`,
    );
  }
  if (!allFinite(p.features)) {
    throw new ValidationError('features contain non-finite values');
  }

  if (p.probabilities !== null) {
    const probs = p.probabilities;
    if (probs.length !== p.n * p.nClasses) {
      throw new ValidationError(
        `probabilities block holds ${probs.length} values, expected ${p.n}x${p.nClasses}`,
      );
    }
    if (!allFinite(probs)) {
      throw new ValidationError('probabilities contain non-finite values');
    }
    for (let i = 0; i < p.n; i++) {
      let sum = 0;
      for (let c = 0; c < p.nClasses; c++) {
        const v = probs[i * p.nClasses + c];
        if (v < -PROB_SUM_TOL || v > 1 + PROB_SUM_TOL) {
          throw new ValidationError(`probabilities fall outside [0, 1] in row ${i}`);
        }
        sum += v;
      }
      if (Math.abs(sum - 1.0) > PROB_SUM_TOL) {
        throw new ValidationError(
          `probability row ${i} sums to ${sum.toFixed(6)}, expected 1`,
        );
      }
    }
  }

  if (p.activations !== null) {
    const acts = p.activations;
    const per = p.channels * p.spatial * p.spatial;
    if (acts.length !== p.n * per) {
      throw new ValidationError(
        `activations block holds ${acts.length} values, expected ` +
          `${p.n}x${p.channels}x${p.spatial}x${p.spatial}`,
      );
    }
    if (!allFinite(acts)) {
      throw new ValidationError('activations contain non-finite values');
    }
    if (p.kind === 'pre-logits') {
      if (p.channels !== p.d) {
        throw new ValidationError(
          `activation channels ${p.channels} do not match feature dim ${p.d}`,
        );
      }
      const worst = activationDeviations(p);
      for (let i = 0; i < p.n; i++) {
        if (worst[i] > ACTIVATION_TOL) {
          throw new ValidationError(
            `activation averages disagree with features ` +
              `(image ${i}, deviation ${worst[i].toExponential(2)})`,
          );
        }
      }
    }
  }

  if (p.imageIds !== null && p.imageIds.length !== p.n) {
    throw new ValidationError(`expected ${p.n} image IDs, got ${p.imageIds.length}`);
  }
}

/**
 * Per-image worst relative deviation between mean-pooled activations
 * and the stored features, relative to each row's feature scale.
 */
export function activationDeviations(p: FeaturePayload): Float64Array {
  if (p.activations === null) {
    throw new ValidationError('payload has no activations block');
  }
  const cells = p.spatial * p.spatial;
  const out = new Float64Array(p.n);
  for (let i = 0; i < p.n; i++) {
    let scale = 1e-12;
    for (let c = 0; c < p.d; c++) {
      const a = Math.abs(p.features[i * p.d + c]);
      if (a > scale) scale = a;
    }
    let worst = 0;
    for (let c = 0; c < p.channels; c++) {
      let sum = 0;
      const base = (i * p.channels + c) * cells;
      for (let j = 0; j < cells; j++) sum += p.activations[base + j];
      const dev = Math.abs(sum / cells - p.features[i * p.d + c]) / scale;
      if (dev > worst) worst = dev;
    }
    out[i] = worst;
  }
  return out;
}

export function makePayload(input: PayloadInput): FeaturePayload {
  const probs = input.probabilities ?? null;
  const acts = input.activations ?? null;
  const payload: FeaturePayload = {
    kind: input.kind,
    features: toF32(input.features),
    n: input.n,
    d: input.d,
    probabilities: probs === null ? null : toF32(probs),
    nClasses: probs === null ? 0 : input.nClasses ?? 0,
    activations: acts === null ? null : toF32(acts),
    channels: acts === null ? 0 : input.channels ?? 0,
    spatial: acts === null ? 0 : input.spatial ?? 0,
    imageIds: input.imageIds ?? null,
  };
  validatePayload(payload);
  return payload;
}

export function encodeFeatureFile(input: PayloadInput): Buffer {
  const p = makePayload(input);

  let flags = 0;
  if (p.probabilities !== null) flags |= FLAG_PROBABILITIES;
  if (p.activations !== null) flags |= FLAG_ACTIVATIONS;
  if (p.imageIds !== null) flags |= FLAG_IMAGE_IDS;

  const header = Buffer.alloc(64);
  header.write(MAGIC, 0, 'ascii');
  header.writeUInt32LE(VERSION, 4);
  header.writeBigUInt64LE(BigInt(KIND_CODES[p.kind]), 8);
  header.writeBigUInt64LE(BigInt(p.n), 16);
  header.writeBigUInt64LE(BigInt(p.d), 24);
  header.writeBigUInt64LE(BigInt(p.nClasses), 32);
  header.writeBigUInt64LE(BigInt(p.channels), 40);
  header.writeBigUInt64LE(BigInt(p.spatial), 48);
  header.writeBigUInt64LE(BigInt(flags), 56);

  const parts: Buffer[] = [header];
  const addBlock = (raw: Buffer) => {
    const len = Buffer.alloc(8);
    len.writeBigUInt64LE(BigInt(raw.length));
    parts.push(len, raw);
  };

  const f32Bytes = (arr: Float32Array) => {
    // Copy into a fresh buffer so byte order is explicit little-endian.
    const buf = Buffer.alloc(arr.length * 4);
    for (let i = 0; i < arr.length; i++) buf.writeFloatLE(arr[i], i * 4);
    return buf;
  };

  addBlock(f32Bytes(p.features));
  if (p.probabilities !== null) addBlock(f32Bytes(p.probabilities));
  if (p.activations !== null) addBlock(f32Bytes(p.activations));
  if (p.imageIds !== null) {
    const chunks: Buffer[] = [];
    for (const id of p.imageIds) {
      const raw = Buffer.from(id, 'utf-8');
      const len = Buffer.alloc(4);
      len.writeUInt32LE(raw.length);
      chunks.push(len, raw);
    }
    addBlock(Buffer.concat(chunks));
  }
  return Buffer.concat(parts);
}

export function writeFeatureFile(path: string, input: PayloadInput): void {
  fs.writeFileSync(path, encodeFeatureFile(input));
}

class Reader {
  offset = 0;
  constructor(private data: Buffer) {}

  take(size: number, what: string): Buffer {
    if (this.offset + size > this.data.length) {
      throw new FormatError(
        `truncated file: ${what} needs ${size} bytes at offset ${this.offset}, ` +
          `only ${this.data.length - this.offset} remain`,
      );
    }
    const raw = this.data.subarray(this.offset, this.offset + size);
    this.offset += size;
    return raw;
  }

  u64(what: string): number {
    const value = this.take(8, what).readBigUInt64LE();
    if (value > BigInt(Number.MAX_SAFE_INTEGER)) {
      throw new FormatError(`${what} value ${value} is implausibly large`);
    }
    return Number(value);
  }

  block(what: string, expectedBytes: number): Buffer {
    const length = this.u64(`${what} block length`);
    if (length !== expectedBytes) {
      throw new FormatError(
        `${what} block is ${length} bytes, header implies ${expectedBytes}`,
      );
    }
    return this.take(length, `${what} block`);
  }

  get remaining(): number {
    return this.data.length - this.offset;
  }
}

function f32From(raw: Buffer): Float32Array {
  const out = new Float32Array(raw.length / 4);
  for (let i = 0; i < out.length; i++) out[i] = raw.readFloatLE(i * 4);
  return out;
}

export function decodeFeatureFile(data: Buffer): FeaturePayload {
  const r = new Reader(data);
  const magic = r.take(4, 'magic').toString('ascii');
  if (magic !== MAGIC) {
    throw new FormatError(`bad magic ${JSON.stringify(magic)}, expected "${MAGIC}"`);
  }
  const version = r.take(4, 'version').readUInt32LE();
  if (version !== VERSION) {
    throw new FormatError(`unsupported version ${version}, expected ${VERSION}`);
  }
  const kindCode = r.u64('kind');
  const kind = CODE_KINDS.get(kindCode);
  if (kind === undefined) {
    throw new FormatError(`unknown payload kind code ${kindCode}`);
  }
  const n = r.u64('row count');
  const d = r.u64('feature dimension');
  const nClasses = r.u64('class count');
  const channels = r.u64('channel count');
  const spatial = r.u64('spatial size');
  const flags = r.u64('flags');
  if (flags & ~(FLAG_PROBABILITIES | FLAG_ACTIVATIONS | FLAG_IMAGE_IDS)) {
    throw new FormatError(`unknown flag bits in ${flags}`);
  }

  const features = f32From(r.block('features', n * d * 4));

  let probabilities: Float32Array | null = null;
  if (flags & FLAG_PROBABILITIES) {
    probabilities = f32From(r.block('probabilities', n * nClasses * 4));
  }
  let activations: Float32Array | null = null;
  if (flags & FLAG_ACTIVATIONS) {
    activations = f32From(r.block('activations', n * channels * spatial * spatial * 4));
  }
  let imageIds: string[] | null = null;
  if (flags & FLAG_IMAGE_IDS) {
    const length = r.u64('image-ids block length');
    const end = r.offset + length;
    imageIds = [];
    for (let i = 0; i < n; i++) {
      const idLen = r.take(4, `image id ${i} length`).readUInt32LE();
      imageIds.push(r.take(idLen, `image id ${i}`).toString('utf-8'));
    }
    if (r.offset !== end) {
      throw new FormatError(
        `image-ids block length ${length} does not match its ${n} entries`,
      );
    }
  }
  if (r.remaining !== 0) {
    throw new FormatError(`${r.remaining} trailing bytes after the last block`);
  }

  const payload: FeaturePayload = {
    kind,
    features,
    n,
    d,
    probabilities,
    nClasses: probabilities === null ? 0 : nClasses,
    activations,
    channels: activations === null ? 0 : channels,
    spatial: activations === null ? 0 : spatial,
    imageIds,
  };
  validatePayload(payload);
  return payload;
}

export function readFeatureFile(path: string): FeaturePayload {
  return decodeFeatureFile(fs.readFileSync(path));
}
