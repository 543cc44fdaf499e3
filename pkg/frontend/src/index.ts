export {
  DEFAULT_FINETUNE,
  FinetuneJob,
  GenerateJob,
  PreconditionError,
  SizeContractError,
  finetune,
  generate,
  loadCheckpoint,
} from "./adapter.js";
export {
  CapabilityError,
  ENDPOINT_ENV,
  Engine,
  FinetuneOptions,
  GenerateRequest,
  HttpEngine,
  MODEL_CACHE_ENV,
  TrainingPair,
} from "./engine.js";
export {
  IMAGE_WIDTH,
  LAYOUT_ID,
  MAX_ROWS,
  renderConditioningImage,
} from "./layout.js";
export {
  ManifestError,
  ManifestRow,
  categoryKey,
  manifestRowSchema,
  readManifest,
  resolveImagePath,
  writeManifest,
} from "./manifest.js";
export { PngError, encodeRgbPng, readPngSize } from "./png.js";
