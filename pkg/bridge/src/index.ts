export {
  Bundle,
  BundleError,
  KIND_IMAGE,
  KIND_TEXT,
  MAGIC,
  TextMeta,
  VERSION,
  normalizeRow,
  parseBundle,
  serializeBundle,
  writeBundle,
  writeTextSidecar,
} from "./bundle.js";
export {
  Manifest,
  ManifestEntry,
  ManifestError,
  fingerprintTexts,
  readManifest,
  validateManifest,
} from "./manifest.js";
export {
  EncodeError,
  IMAGE_MODELS,
  TEXT_MODELS,
  decodePnm,
  encodeImage,
  encodeText,
} from "./encoders.js";
export {
  BridgeConfig,
  DEFAULT_CONFIG,
  LabeledImage,
  encodeImages,
  encodeTexts,
  parseLabelsCsv,
  selectOneShot,
} from "./encode.js";
export { main } from "./cli.js";
