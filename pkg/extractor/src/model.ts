/**
 * Feature models.  The named pretrained backbones require weight
 * downloads and raise an explicit unavailability error; `random-init`
 * is a seeded, fully deterministic convolutional network whose features
 * exercise the whole pipeline without any external weights.
 */

import { ModelUnavailableError, PreconditionError } from './errors.js';
import { Rng } from './rng.js';

export interface ModelOutputs {
  /** (d) spatial mean of the final activation grid. */
  preLogits: Float64Array;
  /** (nClasses) */
  logits: Float64Array;
  /** (nClasses) softmax of the logits. */
  probabilities: Float64Array;
  /** (d, s, s) channel-first final activation grid. */
  activations: Float64Array;
}

export interface FeatureModel {
  readonly name: string;
  readonly inputSize: number;
  readonly dim: number;
  readonly nClasses: number;
  readonly spatial: number;
  /** image is (inputSize, inputSize, 3) row-major in [0, 1]. */
  forward(image: Float64Array): ModelOutputs;
}

export const PRETRAINED_MODELS = [
  'inception-v3-reference',
  'resnet50',
  'clip-image',
  'swav',
] as const;

export const MODEL_NAMES = [...PRETRAINED_MODELS, 'random-init'] as const;

interface ConvLayer {
  weight: Float64Array; // (cout, k, k, cin)
  cin: number;
  cout: number;
  k: number;
  stride: number;
  relu: boolean;
}

function convolve(
  src: Float64Array,
  h: number,
  w: number,
  layer: ConvLayer,
): { data: Float64Array; h: number; w: number } {
  const { weight, cin, cout, k, stride, relu } = layer;
  const oh = Math.floor((h - k) / stride) + 1;
  const ow = Math.floor((w - k) / stride) + 1;
  const out = new Float64Array(oh * ow * cout);
  for (let oy = 0; oy < oh; oy++) {
    for (let ox = 0; ox < ow; ox++) {
      const outBase = (oy * ow + ox) * cout;
      for (let oc = 0; oc < cout; oc++) {
        let acc = 0;
        const wBase = oc * k * k * cin;
        for (let ky = 0; ky < k; ky++) {
          const sy = oy * stride + ky;
          for (let kx = 0; kx < k; kx++) {
            const sBase = (sy * w + ox * stride + kx) * cin;
            const wRow = wBase + (ky * k + kx) * cin;
            for (let c = 0; c < cin; c++) {
              acc += weight[wRow + c] * src[sBase + c];
            }
          }
        }
        out[outBase + oc] = relu && acc < 0 ? 0 : acc;
      }
    }
  }
  return { data: out, h: oh, w: ow };
}

/**
 * Seeded random convolutional feature extractor.
 *
 * 299x299x3 input, three valid convolutions (5x5/3, 3x3/3, 3x3/2) to a
 * 48-channel 16x16 grid, mean pooling to 48 pre-logits, and a random
 * linear head to 16 classes.  Identical seeds give identical weights,
 * and the all-double forward pass makes outputs bit-reproducible.
 */
export class RandomInitModel implements FeatureModel {
  readonly name = 'random-init';
  readonly inputSize = 299;
  readonly dim = 48;
  readonly nClasses = 16;
  readonly spatial = 16;

  private layers: ConvLayer[];
  private head: Float64Array; // (nClasses, dim)

  constructor(seed = 0) {
    const rng = new Rng(seed);
    const makeLayer = (
      cin: number,
      cout: number,
      k: number,
      stride: number,
      relu: boolean,
    ): ConvLayer => {
      const weight = new Float64Array(cout * k * k * cin);
      rng.fillNormal(weight, Math.sqrt(2 / (k * k * cin)));
      return { weight, cin, cout, k, stride, relu };
    };
    this.layers = [
      makeLayer(3, 16, 5, 3, true),
      makeLayer(16, 32, 3, 3, true),
      makeLayer(32, 48, 3, 2, false),
    ];
    this.head = new Float64Array(this.nClasses * this.dim);
    rng.fillNormal(this.head, Math.sqrt(1 / this.dim));
  }

  forward(image: Float64Array): ModelOutputs {
    const size = this.inputSize;
    if (image.length !== size * size * 3) {
      throw new PreconditionError(
        `model input must be ${size}x${size}x3, got ${image.length} values`,
      );
    }
    // center the [0, 1] pixels to [-1, 1]
    let data: Float64Array = new Float64Array(image.length);
    for (let i = 0; i < image.length; i++) data[i] = image[i] * 2 - 1;

    let h = size;
    let w = size;
    for (const layer of this.layers) {
      const res = convolve(data, h, w, layer);
      data = res.data;
      h = res.h;
      w = res.w;
    }

    const s = this.spatial;
    const d = this.dim;
    // transpose (s, s, d) -> channel-first (d, s, s)
    const activations = new Float64Array(d * s * s);
    for (let y = 0; y < s; y++) {
      for (let x = 0; x < s; x++) {
        for (let c = 0; c < d; c++) {
          activations[c * s * s + y * s + x] = data[(y * s + x) * d + c];
        }
      }
    }

    const preLogits = new Float64Array(d);
    const cells = s * s;
    for (let c = 0; c < d; c++) {
      let sum = 0;
      for (let j = 0; j < cells; j++) sum += activations[c * cells + j];
      preLogits[c] = sum / cells;
    }

    const logits = new Float64Array(this.nClasses);
    for (let cls = 0; cls < this.nClasses; cls++) {
      let acc = 0;
      for (let c = 0; c < d; c++) acc += this.head[cls * d + c] * preLogits[c];
      logits[cls] = acc;
    }

    let peak = -Infinity;
    for (const v of logits) if (v > peak) peak = v;
    const probabilities = new Float64Array(this.nClasses);
    let total = 0;
    for (let cls = 0; cls < this.nClasses; cls++) {
      probabilities[cls] = Math.exp(logits[cls] - peak);
      total += probabilities[cls];
    }
    for (let cls = 0; cls < this.nClasses; cls++) probabilities[cls] /= total;

    return { preLogits, logits, probabilities, activations };
  }
}

export function createModel(name: string, seed = 0): FeatureModel {
  if (name === 'random-init') return new RandomInitModel(seed);
  if ((PRETRAINED_MODELS as readonly string[]).includes(name)) {
    throw new ModelUnavailableError(
      `model '${name}' needs pretrained weights, and no weight source is ` +
        `reachable from this environment; 'random-init' runs without weights`,
    );
  }
  throw new PreconditionError(
    `unknown model '${name}'; choose one of ${MODEL_NAMES.join(', ')}`,
  );
}
