/**
 * Trace capture: run a model over a dataset in batches and write one trace
 * matrix per requested layer, in the manifest format the scoring side reads.
 */

import * as tf from '@tensorflow/tfjs';
import { promises as fs } from 'fs';
import { join } from 'path';

import { Manifest, ManifestLayer, writeLabels, writeManifest } from './manifest.js';
import { Matrix, writeNpy } from './npy.js';

export class ExportError extends Error {}

export interface ExportSpec {
  model: tf.LayersModel;
  /** Layer names to capture, in the order their columns should appear. */
  layers: string[];
  /** Dataset as a row-major matrix, one input per row. */
  inputs: Matrix;
  outDir: string;
  datasetName?: string;
  groundTruth?: ArrayLike<number>;
  batchSize?: number;
}

interface Capture {
  name: string;
  width: number;
  values: Float64Array;
}

function resolveLayers(model: tf.LayersModel, names: string[]): tf.SymbolicTensor[] {
  if (names.length === 0) {
    throw new ExportError('no layers requested');
  }
  if (new Set(names).size !== names.length) {
    throw new ExportError(`duplicate layer names in ${names.join(', ')}`);
  }
  const available = model.layers.map(l => l.name);
  return names.map(name => {
    const layer = model.layers.find(l => l.name === name);
    if (!layer) {
      throw new ExportError(
        `model has no layer ${name}; available: ${available.join(', ')}`,
      );
    }
    return layer.output as tf.SymbolicTensor;
  });
}

function flatWidth(t: tf.Tensor): number {
  // Channel-last flattening: everything past the batch axis becomes neurons.
  return t.shape.slice(1).reduce((a, b) => a * (b ?? 1), 1);
}

function argmaxRows(values: Float64Array, rows: number, width: number): number[] {
  const out = new Array<number>(rows);
  for (let r = 0; r < rows; r++) {
    let best = 0;
    for (let c = 1; c < width; c++) {
      if (values[r * width + c] > values[r * width + best]) {
        best = c;
      }
    }
    out[r] = best;
  }
  return out;
}

/**
 * Capture post-activation traces for every requested layer plus the model's
 * final output, batch by batch. Returns per-layer flat matrices and the
 * predicted class per input.
 */
export async function captureTraces(
  model: tf.LayersModel,
  layerNames: string[],
  inputs: Matrix,
  batchSize = 256,
): Promise<{ captures: Capture[]; predicted: number[] }> {
  if (batchSize < 1) {
    throw new ExportError(`batch size must be positive, got ${batchSize}`);
  }
  const outputs = resolveLayers(model, layerNames);
  const finalOutput = model.outputs[0];
  // The model's own output may already be among the captured layers; tfjs
  // rejects duplicate outputs, so only append it when it is not.
  const capturedFinal = outputs.findIndex(o => o.name === finalOutput.name);
  const probeOutputs = capturedFinal >= 0 ? outputs : [...outputs, finalOutput];
  const predIndex = capturedFinal >= 0 ? capturedFinal : outputs.length;
  const probe = tf.model({ inputs: model.inputs, outputs: probeOutputs });

  const n = inputs.rows;
  const captures: Capture[] = [];
  let predWidth = 0;
  let predValues: Float64Array | undefined;

  for (let start = 0; start < n; start += batchSize) {
    const rows = Math.min(batchSize, n - start);
    const slice = inputs.data.subarray(start * inputs.cols, (start + rows) * inputs.cols);
    const xs = tf.tensor2d(Float32Array.from(slice), [rows, inputs.cols]);
    const produced = probe.predict(xs) as tf.Tensor | tf.Tensor[];
    const tensors = Array.isArray(produced) ? produced : [produced];
    try {
      if (start === 0) {
        for (let i = 0; i < layerNames.length; i++) {
          const width = flatWidth(tensors[i]);
          captures.push({ name: layerNames[i], width, values: new Float64Array(n * width) });
        }
        predWidth = flatWidth(tensors[predIndex]);
        predValues = new Float64Array(n * predWidth);
      }
      for (let i = 0; i < tensors.length; i++) {
        const width = flatWidth(tensors[i]);
        const flat = tensors[i].reshape([rows, width]);
        const batch = await flat.data();
        flat.dispose();
        const isCapture = i < layerNames.length;
        const label = isCapture ? `layer ${layerNames[i]}` : 'model output';
        for (let j = 0; j < batch.length; j++) {
          if (!Number.isFinite(batch[j])) {
            throw new ExportError(`non-finite activation in ${label}`);
          }
        }
        if (isCapture) {
          captures[i].values.set(batch, start * width);
        }
        if (i === predIndex) {
          predValues!.set(batch, start * width);
        }
      }
    } finally {
      tensors.forEach(t => t.dispose());
      xs.dispose();
    }
  }
  // The probe shares its layers with the caller's model, so disposing it
  // would tear the model down as well; it owns no weights of its own.
  return { captures, predicted: argmaxRows(predValues!, n, predWidth) };
}

function fileNameFor(layerName: string): string {
  return layerName.replace(/[/\\]/g, '__') + '.npy';
}

/** Run the capture and write layer files, labels, and the manifest. */
export async function exportTraces(spec: ExportSpec): Promise<string> {
  const { model, inputs } = spec;
  const inputWidth = model.inputs[0].shape[1];
  if (inputWidth !== null && inputWidth !== inputs.cols) {
    throw new ExportError(
      `model takes ${inputWidth} features but data rows have ${inputs.cols}`,
    );
  }
  if (spec.groundTruth !== undefined && spec.groundTruth.length !== inputs.rows) {
    throw new ExportError(
      `${spec.groundTruth.length} labels for ${inputs.rows} inputs`,
    );
  }

  const { captures, predicted } = await captureTraces(
    model,
    spec.layers,
    inputs,
    spec.batchSize ?? 256,
  );

  await fs.mkdir(spec.outDir, { recursive: true });
  const layers: ManifestLayer[] = [];
  for (const capture of captures) {
    const fileName = fileNameFor(capture.name);
    await writeNpy(join(spec.outDir, fileName), {
      rows: inputs.rows,
      cols: capture.width,
      data: capture.values,
    });
    layers.push({ name: capture.name, file_path: fileName, neuron_count: capture.width });
  }
  await writeLabels(join(spec.outDir, 'predicted.json'), predicted);

  const manifest: Manifest = {
    format_version: 1,
    dataset_name: spec.datasetName ?? 'exported',
    layers,
    predicted_path: 'predicted.json',
  };
  if (spec.groundTruth !== undefined) {
    await writeLabels(join(spec.outDir, 'labels.json'), spec.groundTruth);
    manifest.labels_path = 'labels.json';
  }
  // Written last: a crashed export never leaves a manifest pointing at
  // missing layer files.
  const manifestPath = join(spec.outDir, 'manifest.json');
  await writeManifest(manifestPath, manifest);
  return manifestPath;
}
