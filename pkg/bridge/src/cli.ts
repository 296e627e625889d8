#!/usr/bin/env node
/**
 * embed-bridge: turn encode manifests and labeled images into embedding
 * bundles.
 *
 *   embed-bridge encode-texts  --manifest m.json --out texts.bundle
 *                              [--dim 64] [--seed 0] [--model chargram]
 *                              [--classes N] [--batch 32] [--device cpu]
 *   embed-bridge encode-images --labels labels.csv --out images.bundle
 *                              --classes N [--dim 64] [--model pixelgrid]
 *                              [--base DIR] [--one-shot-seed S]
 *                              [--batch 32] [--device cpu]
 *
 * Exit statuses: 0 ok, 2 usage error, 3 data error.
 */
import { promises as fs } from "node:fs";
import path from "node:path";
import process from "node:process";

import { BundleError } from "./bundle.js";
import {
  DEFAULT_CONFIG,
  encodeImages,
  encodeTexts,
  parseLabelsCsv,
  selectOneShot,
} from "./encode.js";
import { EncodeError } from "./encoders.js";
import { ManifestError, readManifest } from "./manifest.js";

class UsageError extends Error {}

interface Flags {
  [key: string]: string;
}

const KNOWN_FLAGS = new Set([
  "manifest", "labels", "out", "dim", "seed", "model", "classes",
  "batch", "device", "base", "one-shot-seed",
]);

function parseFlags(argv: string[]): Flags {
  const flags: Flags = {};
  for (let i = 0; i < argv.length; i += 2) {
    const arg = argv[i];
    if (!arg.startsWith("--")) throw new UsageError(`unexpected argument ${arg}`);
    const name = arg.slice(2);
    if (!KNOWN_FLAGS.has(name)) throw new UsageError(`unknown flag --${name}`);
    const value = argv[i + 1];
    if (value === undefined) throw new UsageError(`--${name} needs a value`);
    flags[name] = value;
  }
  return flags;
}

function intFlag(flags: Flags, name: string, fallback: number): number {
  if (!(name in flags)) return fallback;
  const value = Number(flags[name]);
  if (!Number.isInteger(value)) throw new UsageError(`--${name} must be an integer`);
  return value;
}

function requireFlag(flags: Flags, name: string): string {
  const value = flags[name];
  if (!value) throw new UsageError(`--${name} is required`);
  return value;
}

async function cmdEncodeTexts(flags: Flags): Promise<void> {
  const manifest = await readManifest(requireFlag(flags, "manifest"));
  const out = requireFlag(flags, "out");
  const config = {
    ...DEFAULT_CONFIG,
    model: flags["model"] ?? "chargram",
    dim: intFlag(flags, "dim", 64),
    seed: intFlag(flags, "seed", 0),
    batchSize: intFlag(flags, "batch", 32),
    device: flags["device"] ?? "cpu",
    nClasses: flags["classes"] ? intFlag(flags, "classes", 0) : undefined,
  };
  const n = await encodeTexts(manifest, out, config);
  console.log(`encoded ${n} texts -> ${out}`);
}

async function cmdEncodeImages(flags: Flags): Promise<void> {
  const labelsPath = requireFlag(flags, "labels");
  const out = requireFlag(flags, "out");
  const nClasses = intFlag(flags, "classes", -1);
  if (nClasses < 1) throw new UsageError("--classes is required and must be >= 1");
  const raw = await fs.readFile(labelsPath, "utf8");
  const base = flags["base"] ?? path.dirname(path.resolve(labelsPath));
  let images = parseLabelsCsv(raw, base);
  if ("one-shot-seed" in flags) {
    images = selectOneShot(images, intFlag(flags, "one-shot-seed", 0));
  }
  const config = {
    ...DEFAULT_CONFIG,
    model: flags["model"] ?? "pixelgrid",
    dim: intFlag(flags, "dim", 64),
    seed: intFlag(flags, "seed", 0),
    batchSize: intFlag(flags, "batch", 32),
    device: flags["device"] ?? "cpu",
  };
  const n = await encodeImages(images, nClasses, out, config);
  console.log(`encoded ${n} images -> ${out}`);
}

export async function main(argv: string[]): Promise<number> {
  const [command, ...rest] = argv;
  try {
    if (command === "encode-texts") {
      await cmdEncodeTexts(parseFlags(rest));
    } else if (command === "encode-images") {
      await cmdEncodeImages(parseFlags(rest));
    } else {
      throw new UsageError(
        "usage: embed-bridge <encode-texts | encode-images> [flags]",
      );
    }
    return 0;
  } catch (err) {
    if (err instanceof UsageError) {
      console.error(`usage error: ${err.message}`);
      return 2;
    }
    if (
      err instanceof EncodeError ||
      err instanceof ManifestError ||
      err instanceof BundleError ||
      (err as NodeJS.ErrnoException).code === "ENOENT"
    ) {
      console.error(`error: ${(err as Error).message}`);
      return 3;
    }
    throw err;
  }
}

const invokedDirectly =
  process.argv[1] && import.meta.url.endsWith(path.basename(process.argv[1]));
if (invokedDirectly) {
  main(process.argv.slice(2)).then((code) => process.exit(code));
}
