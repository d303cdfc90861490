/**
 * Masked-noise harness: delegates mask math to the primary toolkit's
 * CLI so both components share one bit-exact implementation, after
 * verifying locally that every image has its heatmap grid.
 */

import * as fs from 'fs';
import * as path from 'path';
import { spawnSync } from 'child_process';

import { ExtractorError, PreconditionError } from './errors.js';
import { listImages } from './extract.js';

export interface NoiseProbeOptions {
  imageDir: string;
  heatmapDir: string;
  sigmas: number[];
  region: 'important' | 'unimportant' | 'everywhere';
  seed: number;
  outDir: string;
  /** Primary CLI executable; defaults to `fidlens` on PATH. */
  fidlensBin?: string;
}

export interface NoiseProbeResult {
  outDir: string;
  layoutPath: string;
  imageCount: number;
}

const REGIONS = ['important', 'unimportant', 'everywhere'];

export function noiseProbeImages(options: NoiseProbeOptions): NoiseProbeResult {
  if (!REGIONS.includes(options.region)) {
    throw new PreconditionError(
      `unknown region '${options.region}'; choose from ${REGIONS.join(', ')}`,
    );
  }
  if (options.sigmas.length === 0) {
    throw new PreconditionError('need at least one sigma');
  }
  for (const sigma of options.sigmas) {
    if (!(Number.isFinite(sigma) && sigma >= 0)) {
      throw new PreconditionError(`sigmas must be nonnegative, got ${sigma}`);
    }
  }

  const names = listImages(options.imageDir);
  if (names.length === 0) {
    throw new PreconditionError(`no .png images under ${options.imageDir}`);
  }
  const missing = names.filter(
    (name) =>
      !fs.existsSync(
        path.join(options.heatmapDir, name.replace(/\.png$/i, '') + '.fidl'),
      ),
  );
  if (missing.length > 0) {
    throw new PreconditionError(
      `heatmap grids missing for: ${missing.join(', ')}`,
    );
  }

  const bin = options.fidlensBin ?? 'fidlens';
  const args = [
    'noise-probe',
    'apply',
    options.imageDir,
    options.heatmapDir,
    '--out',
    options.outDir,
    '--sigmas',
    options.sigmas.join(','),
    '--regions',
    options.region,
    '--seed',
    String(options.seed),
  ];
  const run = spawnSync(bin, args, { encoding: 'utf-8' });
  if (run.error !== undefined) {
    throw new ExtractorError(
      `cannot run '${bin}': ${run.error.message}; is the primary toolkit installed?`,
    );
  }
  if (run.status !== 0) {
    const detail = (run.stderr || run.stdout || '').trim();
    throw new ExtractorError(`'${bin} noise-probe apply' failed: ${detail}`);
  }
  return {
    outDir: options.outDir,
    layoutPath: path.join(options.outDir, 'layout.tsv'),
    imageCount: names.length,
  };
}
