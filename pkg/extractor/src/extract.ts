/**
 * Folder-to-feature-file extraction.
 *
 * Rows follow sorted file-name order, batches only chunk the work and
 * the progress log, and every output kind lands in its own file inside
 * the output directory.  Activations cannot stand alone in the file
 * format, so requesting them produces (or joins) the pre-logits file.
 */

import * as fs from 'fs';
import * as path from 'path';

import { PreconditionError } from './errors.js';
import { writeFeatureFile } from './featureFile.js';
import { createModel } from './model.js';
import { readPng } from './png.js';
import { resizeBicubic } from './resize.js';

export const OUTPUT_KINDS = [
  'pre-logits',
  'logits',
  'probabilities',
  'activations',
] as const;

export type OutputKind = (typeof OUTPUT_KINDS)[number];

export interface ExtractOptions {
  imageDir: string;
  model: string;
  /** Which outputs to write; defaults to all of them. */
  outputs?: OutputKind[];
  batchSize?: number;
  outDir: string;
  /** Weight seed for the random-init model. */
  modelSeed?: number;
  /** Log and skip undecodable images instead of failing fast. */
  skipUnreadable?: boolean;
  log?: (line: string) => void;
}

export interface ExtractResult {
  /** kind -> written file path */
  files: Record<string, string>;
  imageCount: number;
  skipped: string[];
}

export function listImages(imageDir: string): string[] {
  let entries: string[];
  try {
    entries = fs.readdirSync(imageDir);
  } catch (err) {
    throw new PreconditionError(
      `cannot list ${imageDir}: ${(err as Error).message}`,
    );
  }
  return entries.filter((name) => name.toLowerCase().endsWith('.png')).sort();
}

export function extract(options: ExtractOptions): ExtractResult {
  const outputs = options.outputs ?? [...OUTPUT_KINDS];
  if (outputs.length === 0) {
    throw new PreconditionError('no outputs requested');
  }
  for (const kind of outputs) {
    if (!OUTPUT_KINDS.includes(kind)) {
      throw new PreconditionError(
        `unknown output kind '${kind}'; choose from ${OUTPUT_KINDS.join(', ')}`,
      );
    }
  }
  const batchSize = options.batchSize ?? 32;
  if (batchSize < 1) {
    throw new PreconditionError(`batch size must be >= 1, got ${batchSize}`);
  }
  const log = options.log ?? ((line: string) => process.stderr.write(line + '\n'));

  const model = createModel(options.model, options.modelSeed ?? 0);
  const names = listImages(options.imageDir);
  if (names.length === 0) {
    throw new PreconditionError(`no .png images under ${options.imageDir}`);
  }

  const size = model.inputSize;
  const d = model.dim;
  const nClasses = model.nClasses;
  const s = model.spatial;

  const kept: string[] = [];
  const skipped: string[] = [];
  const preLogits: Float64Array[] = [];
  const logits: Float64Array[] = [];
  const probabilities: Float64Array[] = [];
  const activations: Float64Array[] = [];
  const wantActs = outputs.includes('activations');

  for (let start = 0; start < names.length; start += batchSize) {
    const batch = names.slice(start, start + batchSize);
    for (const name of batch) {
      const file = path.join(options.imageDir, name);
      let image;
      try {
        image = readPng(file);
      } catch (err) {
        if (options.skipUnreadable) {
          log(`skipping unreadable image ${name}: ${(err as Error).message}`);
          skipped.push(name);
          continue;
        }
        throw err;
      }

      const pixels = new Float64Array(image.width * image.height * 3);
      for (let i = 0; i < pixels.length; i++) pixels[i] = image.data[i] / 255;
      const resized = resizeBicubic(
        pixels, image.height, image.width, 3, size, size,
      );
      const out = model.forward(resized);
      kept.push(name);
      preLogits.push(out.preLogits);
      logits.push(out.logits);
      probabilities.push(out.probabilities);
      if (wantActs) activations.push(out.activations);
    }
    log(`extracted ${Math.min(start + batchSize, names.length)}/${names.length}`);
  }
  if (kept.length === 0) {
    throw new PreconditionError('every image was skipped; nothing to write');
  }

  const n = kept.length;
  const flat = (rows: Float64Array[], width: number) => {
    const out = new Float64Array(n * width);
    rows.forEach((row, i) => out.set(row, i * width));
    return out;
  };
  const probMatrix = flat(probabilities, nClasses);

  fs.mkdirSync(options.outDir, { recursive: true });
  const files: Record<string, string> = {};
  const writtenBy: Partial<Record<OutputKind, string>> = {};

  // activations ride on the pre-logits file
  if (outputs.includes('pre-logits') || wantActs) {
    const file = path.join(options.outDir, 'pre-logits.fidl');
    writeFeatureFile(file, {
      kind: 'pre-logits',
      features: flat(preLogits, d),
      n,
      d,
      probabilities: outputs.includes('probabilities') ? probMatrix : null,
      nClasses,
      activations: wantActs ? flat(activations, d * s * s) : null,
      channels: d,
      spatial: s,
      imageIds: kept,
    });
    writtenBy['pre-logits'] = file;
    if (wantActs) writtenBy.activations = file;
  }
  if (outputs.includes('logits')) {
    const file = path.join(options.outDir, 'logits.fidl');
    writeFeatureFile(file, {
      kind: 'logits',
      features: flat(logits, nClasses),
      n,
      d: nClasses,
      imageIds: kept,
    });
    writtenBy.logits = file;
  }
  if (outputs.includes('probabilities')) {
    const file = path.join(options.outDir, 'probabilities.fidl');
    writeFeatureFile(file, {
      kind: 'probabilities',
      features: probMatrix,
      n,
      d: nClasses,
      imageIds: kept,
    });
    writtenBy.probabilities = file;
  }

  for (const kind of outputs) {
    files[kind] = writtenBy[kind]!;
  }
  return { files, imageCount: n, skipped };
}
