#!/usr/bin/env node
/**
 * Command-line front end.  Exit codes: 0 success, 1 domain error,
 * 2 usage error.  Progress goes to standard error, results to standard
 * output.
 */

import { parseArgs } from 'util';

import { ExtractorError } from './errors.js';
import { extract, OUTPUT_KINDS, OutputKind } from './extract.js';
import { MODEL_NAMES } from './model.js';
import { noiseProbeImages } from './noiseProbe.js';

const USAGE = `usage:
  fidlens-extract extract IMAGE_DIR --out DIR [options]
      --model NAME        one of ${MODEL_NAMES.join(', ')} (default random-init)
      --outputs LIST      comma list from ${OUTPUT_KINDS.join(', ')} (default all)
      --batch-size N      images per progress chunk (default 32)
      --model-seed N      weight seed for random-init (default 0)
      --skip-unreadable   log and skip undecodable images

  fidlens-extract noise-probe IMAGE_DIR HEATMAP_DIR --out DIR [options]
      --sigmas LIST       comma list of noise levels (default 0.05,0.1,0.2)
      --region NAME       important | unimportant | everywhere (default important)
      --seed N            noise seed (default 0)
      --fidlens-bin PATH  primary CLI executable (default fidlens)
`;

function usageError(message: string): never {
  process.stderr.write(`error: ${message}\n\n${USAGE}`);
  process.exit(2);
}

function intFlag(value: string | undefined, fallback: number, name: string): number {
  if (value === undefined) return fallback;
  const parsed = Number(value);
  if (!Number.isInteger(parsed)) usageError(`${name} must be an integer, got '${value}'`);
  return parsed;
}

function runExtract(argv: string[]): void {
  let parsed;
  try {
    parsed = parseArgs({
      args: argv,
      allowPositionals: true,
      options: {
        out: { type: 'string' },
        model: { type: 'string', default: 'random-init' },
        outputs: { type: 'string' },
        'batch-size': { type: 'string' },
        'model-seed': { type: 'string' },
        'skip-unreadable': { type: 'boolean', default: false },
      },
    });
  } catch (err) {
    usageError((err as Error).message);
  }
  if (parsed.positionals.length !== 1) {
    usageError('extract takes exactly one IMAGE_DIR argument');
  }
  if (parsed.values.out === undefined) usageError('--out is required');

  const outputs =
    parsed.values.outputs === undefined
      ? undefined
      : (parsed.values.outputs.split(',').map((s) => s.trim()) as OutputKind[]);
  const result = extract({
    imageDir: parsed.positionals[0],
    model: parsed.values.model!,
    outputs,
    batchSize: intFlag(parsed.values['batch-size'], 32, '--batch-size'),
    outDir: parsed.values.out,
    modelSeed: intFlag(parsed.values['model-seed'], 0, '--model-seed'),
    skipUnreadable: parsed.values['skip-unreadable'],
  });
  process.stdout.write(`images\t${result.imageCount}\n`);
  for (const [kind, file] of Object.entries(result.files)) {
    process.stdout.write(`${kind}\t${file}\n`);
  }
  if (result.skipped.length > 0) {
    process.stdout.write(`skipped\t${result.skipped.length}\n`);
  }
}

function runNoiseProbe(argv: string[]): void {
  let parsed;
  try {
    parsed = parseArgs({
      args: argv,
      allowPositionals: true,
      options: {
        out: { type: 'string' },
        sigmas: { type: 'string', default: '0.05,0.1,0.2' },
        region: { type: 'string', default: 'important' },
        seed: { type: 'string' },
        'fidlens-bin': { type: 'string' },
      },
    });
  } catch (err) {
    usageError((err as Error).message);
  }
  if (parsed.positionals.length !== 2) {
    usageError('noise-probe takes IMAGE_DIR and HEATMAP_DIR arguments');
  }
  if (parsed.values.out === undefined) usageError('--out is required');

  const sigmas = parsed.values.sigmas!.split(',').map((raw) => {
    const v = Number(raw.trim());
    if (!Number.isFinite(v)) usageError(`bad sigma '${raw}'`);
    return v;
  });
  const result = noiseProbeImages({
    imageDir: parsed.positionals[0],
    heatmapDir: parsed.positionals[1],
    sigmas,
    region: parsed.values.region as 'important' | 'unimportant' | 'everywhere',
    seed: intFlag(parsed.values.seed, 0, '--seed'),
    outDir: parsed.values.out,
    fidlensBin: parsed.values['fidlens-bin'],
  });
  process.stdout.write(`images\t${result.imageCount}\n`);
  process.stdout.write(`layout\t${result.layoutPath}\n`);
}

export function main(argv: string[]): void {
  const [command, ...rest] = argv;
  try {
    if (command === 'extract') {
      runExtract(rest);
    } else if (command === 'noise-probe') {
      runNoiseProbe(rest);
    } else if (command === undefined || command === '--help' || command === '-h') {
      process.stdout.write(USAGE);
    } else {
      usageError(`unknown subcommand '${command}'`);
    }
  } catch (err) {
    if (err instanceof ExtractorError) {
      process.stderr.write(`error: ${err.message}\n`);
      process.exit(1);
    }
    throw err;
  }
}

main(process.argv.slice(2));
