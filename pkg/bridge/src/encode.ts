/**
 * Bundle production: one embedding row per manifest entry / labeled image,
 * in input order, with labels and sidecar metadata the optimizer consumes.
 */
import { promises as fs } from "node:fs";
import path from "node:path";

import {
  Bundle,
  KIND_IMAGE,
  KIND_TEXT,
  TextMeta,
  writeBundle,
  writeTextSidecar,
} from "./bundle.js";
import { EncodeError, IMAGE_MODELS, TEXT_MODELS, encodeImage, encodeText } from "./encoders.js";
import { Manifest } from "./manifest.js";

export interface BridgeConfig {
  model: string;
  dim: number;
  seed: number;
  batchSize: number;
  device: string;
  nClasses?: number;
}

export const DEFAULT_CONFIG: BridgeConfig = {
  model: "chargram",
  dim: 64,
  seed: 0,
  batchSize: 32,
  device: "cpu",
};

export function checkConfig(config: BridgeConfig, models: string[]): void {
  if (!models.includes(config.model)) {
    throw new EncodeError(`unknown model ${config.model}; available: ${models.join(", ")}`);
  }
  if (config.batchSize < 1) throw new EncodeError("batch size must be >= 1");
  if (config.dim < 1) throw new EncodeError("dim must be >= 1");
}

export async function encodeTexts(
  manifest: Manifest,
  outPath: string,
  config: BridgeConfig,
): Promise<number> {
  checkConfig(config, TEXT_MODELS);
  const nClasses =
    config.nClasses ?? Math.max(...manifest.entries.map((e) => e.class_id)) + 1;
  const rows: Float64Array[] = [];
  // batchSize only controls how a real backbone would chunk its forward
  // passes; the featurizer is per-item either way
  for (let start = 0; start < manifest.entries.length; start += config.batchSize) {
    for (const entry of manifest.entries.slice(start, start + config.batchSize)) {
      rows.push(encodeText(entry.full_text, config.dim, config.seed));
    }
  }
  const bundle: Bundle = { kind: KIND_TEXT, dim: config.dim, nClasses, rows };
  await writeBundle(outPath, bundle);
  const meta: TextMeta[] = manifest.entries.map((e) => ({
    text_id: e.manifest_id,
    kind: e.kind,
    class_id: e.class_id,
    template_id: e.template_id,
    source_text: e.full_text,
  }));
  await writeTextSidecar(outPath, manifest.fingerprint, meta);
  return rows.length;
}

export interface LabeledImage {
  path: string;
  label: number;
}

export function parseLabelsCsv(raw: string, baseDir: string): LabeledImage[] {
  const out: LabeledImage[] = [];
  for (const line of raw.split(/\r?\n/)) {
    const trimmed = line.trim();
    if (!trimmed || trimmed === "path,label_id") continue;
    const comma = trimmed.lastIndexOf(",");
    if (comma < 1) throw new EncodeError(`malformed labels row: ${JSON.stringify(line)}`);
    const file = trimmed.slice(0, comma);
    const label = Number(trimmed.slice(comma + 1));
    if (!Number.isInteger(label) || label < 0) {
      throw new EncodeError(`bad label in row: ${JSON.stringify(line)}`);
    }
    out.push({ path: path.resolve(baseDir, file), label });
  }
  if (out.length === 0) throw new EncodeError("labels CSV lists no images");
  return out;
}

export function selectOneShot(images: LabeledImage[], seed: number): LabeledImage[] {
  // mulberry32: tiny deterministic PRNG, one pick per class
  let state = seed >>> 0;
  const rand = () => {
    state = (state + 0x6d2b79f5) >>> 0;
    let t = state;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
  const byClass = new Map<number, number[]>();
  images.forEach((img, i) => {
    const rows = byClass.get(img.label) ?? [];
    rows.push(i);
    byClass.set(img.label, rows);
  });
  const chosen = new Set<number>();
  for (const label of [...byClass.keys()].sort((a, b) => a - b)) {
    const rows = byClass.get(label)!;
    chosen.add(rows[Math.floor(rand() * rows.length)]);
  }
  return images.filter((_, i) => chosen.has(i));
}

export async function encodeImages(
  images: LabeledImage[],
  nClasses: number,
  outPath: string,
  config: BridgeConfig,
): Promise<number> {
  checkConfig(config, IMAGE_MODELS);
  const rows: Float64Array[] = [];
  const labels: number[] = [];
  for (let i = 0; i < images.length; i++) {
    const { path: file, label } = images[i];
    if (label >= nClasses) {
      throw new EncodeError(`image ${i} (${file}): label ${label} >= ${nClasses}`);
    }
    let data: Buffer;
    try {
      data = await fs.readFile(file);
    } catch (err) {
      throw new EncodeError(`image ${i} (${file}): ${err}`);
    }
    try {
      rows.push(encodeImage(data, config.dim));
    } catch (err) {
      throw new EncodeError(`image ${i} (${file}): ${(err as Error).message}`);
    }
    labels.push(label);
  }
  const bundle: Bundle = { kind: KIND_IMAGE, dim: config.dim, nClasses, rows, labels };
  await writeBundle(outPath, bundle);
  return rows.length;
}
