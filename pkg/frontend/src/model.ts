/**
 * Model loading. Two on-disk forms are understood:
 *
 * - the plain JSON net description the Python fixture generator writes
 *   (a list of dense layers with inline float64 weights), and
 * - standard tfjs layers-model artifacts (model.json plus weight binaries),
 *   loaded through a small read-only disk IOHandler since the browser build
 *   of tfjs ships none.
 */

import * as tf from '@tensorflow/tfjs';
import { promises as fs } from 'fs';
import { dirname, join } from 'path';

export class ModelFormatError extends Error {}

interface NetJsonLayer {
  name: string;
  activation: 'relu' | 'identity' | 'softmax';
  weights: number[][];
  bias: number[];
}

/** Build a tfjs model from the fixture's inline-weights JSON description. */
export function netFromJson(doc: { layers: NetJsonLayer[] }): tf.LayersModel {
  if (!Array.isArray(doc.layers) || doc.layers.length === 0) {
    throw new ModelFormatError('net description has no layers');
  }
  const model = tf.sequential();
  doc.layers.forEach((layer, i) => {
    if (!layer.weights?.length || layer.weights[0].length !== layer.bias.length) {
      throw new ModelFormatError(`layer ${layer.name}: weight/bias shape mismatch`);
    }
    model.add(
      tf.layers.dense({
        name: layer.name,
        units: layer.bias.length,
        activation: layer.activation === 'identity' ? 'linear' : layer.activation,
        inputShape: i === 0 ? [layer.weights.length] : undefined,
      }),
    );
  });
  doc.layers.forEach((layer, i) => {
    model.layers[i].setWeights([tf.tensor2d(layer.weights), tf.tensor1d(layer.bias)]);
  });
  return model;
}

export async function loadNetJson(path: string): Promise<tf.LayersModel> {
  return netFromJson(JSON.parse(await fs.readFile(path, 'utf-8')));
}

/** Read-only IOHandler over model.json + weight bins next to it. */
export function diskLoadHandler(modelJsonPath: string): tf.io.IOHandler {
  return {
    async load(): Promise<tf.io.ModelArtifacts> {
      const doc = JSON.parse(await fs.readFile(modelJsonPath, 'utf-8'));
      if (!doc.modelTopology) {
        throw new ModelFormatError(`${modelJsonPath} is not a tfjs layers model`);
      }
      const dir = dirname(modelJsonPath);
      const specs: tf.io.WeightsManifestEntry[] = [];
      const buffers: Buffer[] = [];
      for (const group of doc.weightsManifest ?? []) {
        specs.push(...group.weights);
        for (const rel of group.paths) {
          buffers.push(await fs.readFile(join(dir, rel)));
        }
      }
      const joined = Buffer.concat(buffers);
      return {
        modelTopology: doc.modelTopology,
        format: doc.format,
        generatedBy: doc.generatedBy,
        weightSpecs: specs,
        weightData: joined.buffer.slice(
          joined.byteOffset,
          joined.byteOffset + joined.byteLength,
        ),
      };
    },
  };
}

export async function loadTfjsModel(modelJsonPath: string): Promise<tf.LayersModel> {
  return tf.loadLayersModel(diskLoadHandler(modelJsonPath));
}

/**
 * Load a model from a path, sniffing the format: inline-weights JSON when the
 * document carries layers with weight matrices, tfjs artifacts otherwise.
 */
export async function loadModel(path: string): Promise<tf.LayersModel> {
  const doc = JSON.parse(await fs.readFile(path, 'utf-8'));
  if (Array.isArray(doc.layers) && doc.layers[0]?.weights) {
    return netFromJson(doc);
  }
  if (doc.modelTopology) {
    return tf.loadLayersModel(diskLoadHandler(path));
  }
  throw new ModelFormatError(
    `${path}: neither an inline-weights net description nor tfjs model artifacts`,
  );
}

/** Save handler for tests and small tools: writes model.json + weights.bin. */
export async function saveModelToDir(model: tf.LayersModel, dir: string): Promise<string> {
  await fs.mkdir(dir, { recursive: true });
  let captured: tf.io.ModelArtifacts | undefined;
  await model.save(
    tf.io.withSaveHandler(async artifacts => {
      captured = artifacts;
      return { modelArtifactsInfo: { dateSaved: new Date(), modelTopologyType: 'JSON' } };
    }),
  );
  if (!captured || !captured.weightData) {
    throw new ModelFormatError('model produced no artifacts to save');
  }
  const weightData = captured.weightData as ArrayBuffer;
  await fs.writeFile(join(dir, 'weights.bin'), Buffer.from(weightData));
  const doc = {
    format: 'layers-model',
    generatedBy: 'surprisal-exporter',
    modelTopology: captured.modelTopology,
    weightsManifest: [{ paths: ['weights.bin'], weights: captured.weightSpecs }],
  };
  const path = join(dir, 'model.json');
  await fs.writeFile(path, JSON.stringify(doc) + '\n');
  return path;
}
