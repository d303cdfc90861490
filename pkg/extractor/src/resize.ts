/**
 * Separable antialiased bicubic resampling (Keys kernel, a = -0.5).
 *
 * When downscaling, the kernel is stretched by the scale factor so it
 * averages over the source footprint of each target pixel instead of
 * point-sampling; that is what keeps high-frequency content from
 * aliasing.  All arithmetic is double precision.
 */

import { PreconditionError } from './errors.js';

function cubic(x: number): number {
  // Keys (1981) kernel with a = -0.5, support [-2, 2].
  const ax = Math.abs(x);
  if (ax < 1) return 1.5 * ax * ax * ax - 2.5 * ax * ax + 1;
  if (ax < 2) return -0.5 * ax * ax * ax + 2.5 * ax * ax - 4 * ax + 2;
  return 0;
}

interface Tap {
  index: number;
  weight: number;
}

function buildTaps(srcSize: number, dstSize: number): Tap[][] {
  const scale = srcSize / dstSize;
  // Stretch the kernel only when shrinking.
  const filterScale = Math.max(scale, 1);
  const support = 2 * filterScale;
  const taps: Tap[][] = [];
  for (let i = 0; i < dstSize; i++) {
    const center = (i + 0.5) * scale - 0.5;
    const lo = Math.floor(center - support);
    const hi = Math.ceil(center + support);
    const row: Tap[] = [];
    let total = 0;
    for (let j = lo; j <= hi; j++) {
      const weight = cubic((j - center) / filterScale);
      if (weight === 0) continue;
      const index = Math.min(srcSize - 1, Math.max(0, j));
      row.push({ index, weight });
      total += weight;
    }
    for (const tap of row) tap.weight /= total;
    taps.push(row);
  }
  return taps;
}

/**
 * Resize interleaved multi-channel rows to (dstH, dstW).
 *
 * Input and output are row-major (h, w, channels) Float64Arrays; values
 * pass through unclamped so callers decide the range.
 */
export function resizeBicubic(
  src: Float64Array,
  srcH: number,
  srcW: number,
  channels: number,
  dstH: number,
  dstW: number,
): Float64Array {
  if (srcH < 1 || srcW < 1 || dstH < 1 || dstW < 1) {
    throw new PreconditionError('image sizes must be positive');
  }
  if (src.length !== srcH * srcW * channels) {
    throw new PreconditionError(
      `source buffer holds ${src.length} values, expected ${srcH * srcW * channels}`,
    );
  }

  // Horizontal pass: (srcH, srcW, c) -> (srcH, dstW, c)
  const tapsX = buildTaps(srcW, dstW);
  const mid = new Float64Array(srcH * dstW * channels);
  for (let y = 0; y < srcH; y++) {
    for (let x = 0; x < dstW; x++) {
      const row = tapsX[x];
      for (let c = 0; c < channels; c++) {
        let acc = 0;
        for (const tap of row) {
          acc += tap.weight * src[(y * srcW + tap.index) * channels + c];
        }
        mid[(y * dstW + x) * channels + c] = acc;
      }
    }
  }

  // Vertical pass: (srcH, dstW, c) -> (dstH, dstW, c)
  const tapsY = buildTaps(srcH, dstH);
  const out = new Float64Array(dstH * dstW * channels);
  for (let y = 0; y < dstH; y++) {
    const col = tapsY[y];
    for (let x = 0; x < dstW; x++) {
      for (let c = 0; c < channels; c++) {
        let acc = 0;
        for (const tap of col) {
          acc += tap.weight * mid[(tap.index * dstW + x) * channels + c];
        }
        out[(y * dstW + x) * channels + c] = acc;
      }
    }
  }
  return out;
}
