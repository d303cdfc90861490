export {
  ExtractorError,
  FormatError,
  ModelUnavailableError,
  PreconditionError,
  ValidationError,
} from './errors.js';
export {
  ACTIVATION_TOL,
  PROB_SUM_TOL,
  activationDeviations,
  decodeFeatureFile,
  encodeFeatureFile,
  makePayload,
  readFeatureFile,
  writeFeatureFile,
} from './featureFile.js';
export type { FeatureKind, FeaturePayload, PayloadInput } from './featureFile.js';
export { readPng, writePng } from './png.js';
export type { RgbImage } from './png.js';
export { resizeBicubic } from './resize.js';
export { createModel, MODEL_NAMES, PRETRAINED_MODELS, RandomInitModel } from './model.js';
export type { FeatureModel, ModelOutputs } from './model.js';
export { extract, listImages, OUTPUT_KINDS } from './extract.js';
export type { ExtractOptions, ExtractResult, OutputKind } from './extract.js';
export { noiseProbeImages } from './noiseProbe.js';
export type { NoiseProbeOptions, NoiseProbeResult } from './noiseProbe.js';
