/** Thin PNG codec wrapper: 8-bit RGB in, RGBA handled, alpha dropped. */

import * as fs from 'fs';

import pngjs from 'pngjs';

import { PreconditionError } from './errors.js';

const { PNG } = pngjs;

/** Interleaved RGB rows in [0, 255]. */
export interface RgbImage {
  width: number;
  height: number;
  /** length = width * height * 3 */
  data: Uint8Array;
}

export function readPng(path: string): RgbImage {
  let decoded;
  try {
    decoded = PNG.sync.read(fs.readFileSync(path));
  } catch (err) {
    throw new PreconditionError(`cannot decode ${path}: ${(err as Error).message}`);
  }
  const { width, height, data } = decoded;
  const rgb = new Uint8Array(width * height * 3);
  for (let i = 0; i < width * height; i++) {
    rgb[i * 3] = data[i * 4];
    rgb[i * 3 + 1] = data[i * 4 + 1];
    rgb[i * 3 + 2] = data[i * 4 + 2];
  }
  return { width, height, data: rgb };
}

export function writePng(path: string, image: RgbImage): void {
  if (image.data.length !== image.width * image.height * 3) {
    throw new PreconditionError(
      `image buffer holds ${image.data.length} bytes, ` +
        `expected ${image.width * image.height * 3}`,
    );
  }
  const png = new PNG({ width: image.width, height: image.height });
  for (let i = 0; i < image.width * image.height; i++) {
    png.data[i * 4] = image.data[i * 3];
    png.data[i * 4 + 1] = image.data[i * 3 + 1];
    png.data[i * 4 + 2] = image.data[i * 3 + 2];
    png.data[i * 4 + 3] = 255;
  }
  fs.writeFileSync(path, PNG.sync.write(png));
}
