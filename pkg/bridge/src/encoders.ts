/**
 * Deterministic featurizers standing in for a real vision-language encoder.
 *
 * "chargram" hashes character n-grams of a text into `dim` signed buckets;
 * "pixelgrid" decodes a PPM/PGM image and pools luminance onto a fixed grid.
 * Both are pure functions of (input, dim, seed), so duplicate inputs encode
 * to identical rows and bundles are reproducible. A real backbone can be
 * substituted behind the same (input -> unit row) interface.
 */
import { normalizeRow } from "./bundle.js";

export class EncodeError extends Error {}

function fnv1a(text: string): number {
  let hash = 0x811c9dc5;
  const bytes = Buffer.from(text, "utf8");
  for (const byte of bytes) {
    hash ^= byte;
    hash = Math.imul(hash, 0x01000193) >>> 0;
  }
  return hash >>> 0;
}

export function encodeText(text: string, dim: number, seed: number): Float64Array {
  const out = new Float64Array(dim);
  const padded = `${text}`;
  for (const n of [2, 3]) {
    for (let i = 0; i + n <= padded.length; i++) {
      const gram = padded.slice(i, i + n);
      const hash = fnv1a(`${seed}|${n}|${gram}`);
      const bucket = hash % dim;
      const sign = (hash >>> 16) & 1 ? 1 : -1;
      out[bucket] += sign;
    }
  }
  return normalizeRow(out);
}

export interface RasterImage {
  width: number;
  height: number;
  // row-major luminance in [0, 1]
  luminance: Float64Array;
}

/** Decode binary PPM (P6, RGB) or PGM (P5, grayscale). */
export function decodePnm(data: Buffer): RasterImage {
  const magic = data.toString("ascii", 0, 2);
  if (magic !== "P6" && magic !== "P5") {
    throw new EncodeError(`unsupported image magic ${JSON.stringify(magic)}`);
  }
  let pos = 2;
  const readToken = (): number => {
    while (pos < data.length) {
      const ch = data[pos];
      if (ch === 0x23) {
        while (pos < data.length && data[pos] !== 0x0a) pos++;
      } else if (ch === 0x20 || ch === 0x09 || ch === 0x0a || ch === 0x0d) {
        pos++;
      } else {
        break;
      }
    }
    let start = pos;
    while (pos < data.length && data[pos] > 0x20) pos++;
    if (start === pos) throw new EncodeError("truncated image header");
    const value = Number(data.toString("ascii", start, pos));
    if (!Number.isInteger(value) || value <= 0) {
      throw new EncodeError("malformed image header");
    }
    return value;
  };
  const width = readToken();
  const height = readToken();
  const maxval = readToken();
  if (maxval > 255) throw new EncodeError("16-bit images are not supported");
  pos += 1; // single whitespace after maxval
  const channels = magic === "P6" ? 3 : 1;
  const needed = width * height * channels;
  if (data.length - pos < needed) {
    throw new EncodeError(
      `image data truncated: need ${needed} bytes, have ${data.length - pos}`,
    );
  }
  const luminance = new Float64Array(width * height);
  for (let p = 0; p < width * height; p++) {
    if (channels === 3) {
      const r = data[pos + 3 * p];
      const g = data[pos + 3 * p + 1];
      const b = data[pos + 3 * p + 2];
      luminance[p] = (0.299 * r + 0.587 * g + 0.114 * b) / maxval;
    } else {
      luminance[p] = data[pos + p] / maxval;
    }
  }
  return { width, height, luminance };
}

const GRID = 8;

export function encodeImage(data: Buffer, dim: number): Float64Array {
  const image = decodePnm(data);
  const cells = new Float64Array(GRID * GRID);
  const counts = new Float64Array(GRID * GRID);
  for (let y = 0; y < image.height; y++) {
    const gy = Math.min(GRID - 1, Math.floor((y * GRID) / image.height));
    for (let x = 0; x < image.width; x++) {
      const gx = Math.min(GRID - 1, Math.floor((x * GRID) / image.width));
      cells[gy * GRID + gx] += image.luminance[y * image.width + x];
      counts[gy * GRID + gx] += 1;
    }
  }
  let mean = 0;
  for (const v of image.luminance) mean += v;
  mean /= image.luminance.length;
  // bias + mean + pooled grid, truncated or zero-padded to dim; the bias
  // keeps the norm positive for flat images
  const features = new Float64Array(dim);
  const pooled = [1.0, mean];
  for (let i = 0; i < GRID * GRID; i++) {
    pooled.push(counts[i] > 0 ? cells[i] / counts[i] : 0);
  }
  for (let i = 0; i < Math.min(dim, pooled.length); i++) features[i] = pooled[i];
  return normalizeRow(features);
}

export const TEXT_MODELS = ["chargram"];
export const IMAGE_MODELS = ["pixelgrid"];
