/**
 * The manifest JSON that ties layer trace files and label files together.
 * Field names and structure match what the Python loader expects; this file
 * is the contract between the two sides.
 */

import { promises as fs } from 'fs';
import { writeFileAtomic } from './npy.js';

export interface ManifestLayer {
  name: string;
  file_path: string;
  neuron_count: number;
}

export interface Manifest {
  format_version: 1;
  dataset_name: string;
  layers: ManifestLayer[];
  labels_path?: string;
  predicted_path?: string;
  label_dictionary?: Record<string, number>;
}

export class ManifestError extends Error {}

function sortedJson(value: unknown, indent = 2): string {
  const normalize = (v: unknown): unknown => {
    if (Array.isArray(v)) return v.map(normalize);
    if (v && typeof v === 'object') {
      const entries = Object.entries(v as Record<string, unknown>)
        .sort(([a], [b]) => (a < b ? -1 : a > b ? 1 : 0))
        .map(([k, val]) => [k, normalize(val)]);
      return Object.fromEntries(entries);
    }
    return v;
  };
  return JSON.stringify(normalize(value), null, indent) + '\n';
}

export async function writeManifest(path: string, manifest: Manifest): Promise<void> {
  if (manifest.layers.length === 0) {
    throw new ManifestError('a manifest needs at least one layer');
  }
  await writeFileAtomic(path, sortedJson(manifest));
}

export async function readManifest(path: string): Promise<Manifest> {
  let doc: unknown;
  try {
    doc = JSON.parse(await fs.readFile(path, 'utf-8'));
  } catch (err) {
    throw new ManifestError(`unreadable manifest at ${path}: ${err}`);
  }
  const m = doc as Manifest;
  if (m.format_version !== 1) {
    throw new ManifestError(`unsupported format_version ${m.format_version}`);
  }
  if (!Array.isArray(m.layers) || m.layers.length === 0) {
    throw new ManifestError('manifest has no layers');
  }
  for (const layer of m.layers) {
    if (!layer.name || !layer.file_path || !(layer.neuron_count > 0)) {
      throw new ManifestError(`malformed layer entry: ${JSON.stringify(layer)}`);
    }
  }
  return m;
}

/** Write integer labels as a JSON list, the simplest cross-language form. */
export async function writeLabels(path: string, labels: ArrayLike<number>): Promise<void> {
  const values = Array.from(labels, v => {
    if (!Number.isInteger(v) || v < 0) {
      throw new ManifestError(`labels must be non-negative integers, got ${v}`);
    }
    return v;
  });
  await writeFileAtomic(path, JSON.stringify(values, null, 2) + '\n');
}
