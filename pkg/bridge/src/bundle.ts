/**
 * Embedding bundle binary format (little-endian):
 *
 *   magic    4 bytes  "PAPO"
 *   version  u16      1
 *   kind     u8       0 = image, 1 = text
 *   reserved u8       0
 *   dim      u32
 *   n_rows   u64
 *   n_classes u32
 *   data     n_rows * dim float32, row-major
 *   labels   n_rows * u32          (image bundles only)
 *
 * Text bundles carry a `<bundle>.meta.json` sidecar:
 * `{fingerprint, entries: [{text_id, kind, class_id, template_id, source_text}]}`.
 */
import { promises as fs } from "node:fs";

export const MAGIC = "PAPO";
export const VERSION = 1;
export const KIND_IMAGE = 0;
export const KIND_TEXT = 1;
const HEADER_SIZE = 24;

export interface TextMeta {
  text_id: number;
  kind: string;
  class_id: number;
  template_id: number | null;
  source_text: string;
}

export interface Bundle {
  kind: number;
  dim: number;
  nClasses: number;
  rows: Float64Array[];
  labels?: number[];
}

export class BundleError extends Error {}

export function normalizeRow(row: Float64Array): Float64Array {
  let sumSq = 0;
  for (const v of row) sumSq += v * v;
  const norm = Math.sqrt(sumSq);
  if (norm < 1e-12) {
    throw new BundleError(`cannot normalize a zero-norm row (norm ${norm})`);
  }
  const out = new Float64Array(row.length);
  for (let i = 0; i < row.length; i++) out[i] = row[i] / norm;
  return out;
}

export function serializeBundle(bundle: Bundle): Buffer {
  const { kind, dim, nClasses, rows, labels } = bundle;
  if (kind === KIND_IMAGE && (!labels || labels.length !== rows.length)) {
    throw new BundleError("image bundles need one label per row");
  }
  const dataBytes = rows.length * dim * 4;
  const labelBytes = kind === KIND_IMAGE ? rows.length * 4 : 0;
  const buf = Buffer.alloc(HEADER_SIZE + dataBytes + labelBytes);
  buf.write(MAGIC, 0, "ascii");
  buf.writeUInt16LE(VERSION, 4);
  buf.writeUInt8(kind, 6);
  buf.writeUInt8(0, 7);
  buf.writeUInt32LE(dim, 8);
  buf.writeBigUInt64LE(BigInt(rows.length), 12);
  buf.writeUInt32LE(nClasses, 20);
  let offset = HEADER_SIZE;
  for (const row of rows) {
    if (row.length !== dim) {
      throw new BundleError(`row of length ${row.length} in a dim-${dim} bundle`);
    }
    const unit = normalizeRow(row);
    for (let i = 0; i < dim; i++) {
      buf.writeFloatLE(Math.fround(unit[i]), offset);
      offset += 4;
    }
  }
  if (kind === KIND_IMAGE && labels) {
    for (const label of labels) {
      if (label < 0 || label >= nClasses) {
        throw new BundleError(`label ${label} out of range [0, ${nClasses})`);
      }
      buf.writeUInt32LE(label, offset);
      offset += 4;
    }
  }
  return buf;
}

export function parseBundle(buf: Buffer): Bundle {
  if (buf.length < HEADER_SIZE || buf.toString("ascii", 0, 4) !== MAGIC) {
    throw new BundleError("not an embedding bundle (bad magic)");
  }
  const version = buf.readUInt16LE(4);
  if (version !== VERSION) {
    throw new BundleError(`unsupported bundle version ${version}`);
  }
  const kind = buf.readUInt8(6);
  const dim = buf.readUInt32LE(8);
  const nRows = Number(buf.readBigUInt64LE(12));
  const nClasses = buf.readUInt32LE(20);
  const expected =
    HEADER_SIZE + nRows * dim * 4 + (kind === KIND_IMAGE ? nRows * 4 : 0);
  if (buf.length !== expected) {
    throw new BundleError(
      `bundle declares ${nRows} rows but holds ${buf.length - HEADER_SIZE} data bytes`,
    );
  }
  const rows: Float64Array[] = [];
  let offset = HEADER_SIZE;
  for (let r = 0; r < nRows; r++) {
    const row = new Float64Array(dim);
    for (let i = 0; i < dim; i++) {
      row[i] = buf.readFloatLE(offset);
      offset += 4;
    }
    rows.push(row);
  }
  let labels: number[] | undefined;
  if (kind === KIND_IMAGE) {
    labels = [];
    for (let r = 0; r < nRows; r++) {
      labels.push(buf.readUInt32LE(offset));
      offset += 4;
    }
  }
  return { kind, dim, nClasses, rows, labels };
}

export async function writeBundle(path: string, bundle: Bundle): Promise<void> {
  await fs.writeFile(path, serializeBundle(bundle));
}

export async function writeTextSidecar(
  bundlePath: string,
  fingerprint: string,
  entries: TextMeta[],
): Promise<void> {
  const sidecar = `${bundlePath}.meta.json`;
  await fs.writeFile(sidecar, JSON.stringify({ fingerprint, entries }, null, 1));
}
