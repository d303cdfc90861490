/**
 * Cross-component checks against the primary toolkit's CLI.  These need
 * `fidlens` on PATH and are skipped (loudly) when it is missing.
 */

import * as fs from 'fs';
import * as os from 'os';
import * as path from 'path';
import { spawnSync } from 'child_process';

import { afterAll, beforeAll, describe, expect, it } from 'vitest';

import { PreconditionError } from '../src/errors.js';
import { extract } from '../src/extract.js';
import { writeFeatureFile } from '../src/featureFile.js';
import { noiseProbeImages } from '../src/noiseProbe.js';
import { readPng, writePng } from '../src/png.js';
import { Rng } from '../src/rng.js';

const FIDLENS_OK = spawnSync('fidlens', ['--help'], { encoding: 'utf-8' }).status === 0;

const tmp = fs.mkdtempSync(path.join(os.tmpdir(), 'interop-test-'));
afterAll(() => fs.rmSync(tmp, { recursive: true, force: true }));

const IMAGES = path.join(tmp, 'images');
const HEATMAPS = path.join(tmp, 'heatmaps');

function noisyImage(seed: number, size: number) {
  const rng = new Rng(seed);
  const data = new Uint8Array(size * size * 3);
  for (let i = 0; i < data.length; i++) data[i] = Math.floor(rng.uniform() * 256);
  return { width: size, height: size, data };
}

beforeAll(() => {
  fs.mkdirSync(IMAGES);
  fs.mkdirSync(HEATMAPS);
  const rng = new Rng(99);
  for (const name of ['cat', 'dog']) {
    writePng(path.join(IMAGES, `${name}.png`), noisyImage(name.length, 32));
    // raw heatmap grid at the image's resolution
    const grid = new Float64Array(32 * 32);
    for (let i = 0; i < grid.length; i++) grid[i] = rng.normal();
    writeFeatureFile(path.join(HEATMAPS, `${name}.fidl`), {
      kind: 'generic',
      features: grid,
      n: 32,
      d: 32,
    });
  }
});

describe.skipIf(!FIDLENS_OK)('feature files feed the primary toolkit', () => {
  const out = path.join(tmp, 'features');

  beforeAll(() => {
    extract({ imageDir: IMAGES, model: 'random-init', outDir: out, log: () => {} });
  });

  it('validate accepts the pre-logits file', () => {
    const run = spawnSync(
      'fidlens',
      ['validate', path.join(out, 'pre-logits.fidl')],
      { encoding: 'utf-8' },
    );
    expect(run.status).toBe(0);
    expect(run.stdout).toContain('kind\tpre-logits');
    expect(run.stdout).toContain('consistency_passed\ttrue');
    expect(run.stdout).toContain('image-ids');
  });

  it('validate accepts the logits and probabilities files', () => {
    for (const name of ['logits.fidl', 'probabilities.fidl']) {
      const run = spawnSync('fidlens', ['validate', path.join(out, name)], {
        encoding: 'utf-8',
      });
      expect(run.status).toBe(0);
    }
  });

  it('self-distance of an extracted file is zero', () => {
    const file = path.join(out, 'pre-logits.fidl');
    const run = spawnSync('fidlens', ['fid', file, file], { encoding: 'utf-8' });
    expect(run.status).toBe(0);
    expect(run.stdout.trim()).toBe('0.0000');
  });
});

describe('noise probe through the primary CLI', () => {
  it('rejects a missing heatmap before spawning anything', () => {
    const lonely = path.join(tmp, 'lonely');
    fs.mkdirSync(lonely);
    writePng(path.join(lonely, 'cat.png'), noisyImage(1, 32));
    writePng(path.join(lonely, 'new.png'), noisyImage(2, 32));
    expect(() =>
      noiseProbeImages({
        imageDir: lonely,
        heatmapDir: HEATMAPS,
        sigmas: [0.1],
        region: 'important',
        seed: 0,
        outDir: path.join(tmp, 'never'),
      }),
    ).toThrow(/new\.png/);
  });

  it.skipIf(!FIDLENS_OK)('sigma zero leaves pixels untouched', () => {
    const outDir = path.join(tmp, 'noise-zero');
    const result = noiseProbeImages({
      imageDir: IMAGES,
      heatmapDir: HEATMAPS,
      sigmas: [0],
      region: 'important',
      seed: 0,
      outDir,
    });
    expect(result.imageCount).toBe(2);
    expect(fs.existsSync(result.layoutPath)).toBe(true);
    for (const name of ['cat.png', 'dog.png']) {
      const original = readPng(path.join(IMAGES, name));
      const noised = readPng(path.join(outDir, 'important-sigma0', name));
      expect(Buffer.from(noised.data).equals(Buffer.from(original.data))).toBe(true);
    }
  });

  it.skipIf(!FIDLENS_OK)('the two masked regions touch disjoint pixels', () => {
    const outDir = path.join(tmp, 'noise-both');
    for (const region of ['important', 'unimportant'] as const) {
      noiseProbeImages({
        imageDir: IMAGES,
        heatmapDir: HEATMAPS,
        sigmas: [0.5],
        region,
        seed: 0,
        outDir,
      });
    }
    const original = readPng(path.join(IMAGES, 'cat.png'));
    const changedBy = (dir: string) => {
      const noised = readPng(path.join(outDir, dir, 'cat.png'));
      const changed = new Set<number>();
      for (let i = 0; i < original.data.length; i++) {
        if (noised.data[i] !== original.data[i]) changed.add(Math.floor(i / 3));
      }
      return changed;
    };
    const important = changedBy('important-sigma0.5');
    const unimportant = changedBy('unimportant-sigma0.5');
    // each mask covers exactly half of the 32x32 image
    expect(important.size).toBeLessThanOrEqual(512);
    expect(unimportant.size).toBeLessThanOrEqual(512);
    expect(important.size).toBeGreaterThan(400);
    for (const pixel of important) {
      expect(unimportant.has(pixel)).toBe(false);
    }
  });
});

it('warns when the primary CLI is unavailable', () => {
  if (!FIDLENS_OK) {
    console.error('fidlens not on PATH: interop assertions were skipped');
  }
  expect(true).toBe(true);
});
