/**
 * Encode manifests: the ordered list of texts the optimizer wants embedded.
 * The fingerprint (SHA-256 of the newline-joined texts) travels with the
 * produced bundle so the optimizer can verify the encoder ran on exactly
 * these texts.
 */
import { createHash } from "node:crypto";
import { promises as fs } from "node:fs";

export interface ManifestEntry {
  manifest_id: number;
  kind: string;
  class_id: number;
  template_id: number | null;
  description_id: number | null;
  full_text: string;
}

export interface Manifest {
  fingerprint: string;
  entries: ManifestEntry[];
}

export class ManifestError extends Error {}

export function fingerprintTexts(texts: string[]): string {
  return createHash("sha256").update(texts.join("\n"), "utf8").digest("hex");
}

export function validateManifest(payload: unknown): Manifest {
  const data = payload as { fingerprint?: string; entries?: ManifestEntry[] };
  if (!Array.isArray(data.entries) || data.entries.length === 0) {
    throw new ManifestError("manifest has no entries");
  }
  data.entries.forEach((entry, i) => {
    if (entry.manifest_id !== i) {
      throw new ManifestError(`entry ${i} has manifest_id ${entry.manifest_id}`);
    }
    if (!entry.full_text) {
      throw new ManifestError(`entry ${i} has an empty full_text`);
    }
  });
  const computed = fingerprintTexts(data.entries.map((e) => e.full_text));
  if (data.fingerprint && data.fingerprint !== computed) {
    throw new ManifestError("manifest fingerprint does not match its texts");
  }
  return { fingerprint: computed, entries: data.entries };
}

export async function readManifest(path: string): Promise<Manifest> {
  let raw: string;
  try {
    raw = await fs.readFile(path, "utf8");
  } catch (err) {
    throw new ManifestError(`cannot read manifest ${path}: ${err}`);
  }
  return validateManifest(JSON.parse(raw));
}
