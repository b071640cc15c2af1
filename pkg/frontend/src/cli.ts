/**
 * Command-line front end:
 *
 *   export --model PATH --layers a,b --data PATH --out DIR
 *          [--labels PATH] [--batch-size N] [--dataset-name NAME]
 *
 * Exit codes follow the scoring side's convention: 1 for usage problems,
 * 2 for unreadable or malformed data.
 */

import { promises as fs } from 'fs';

import { exportTraces } from './exporter.js';
import { loadModel } from './model.js';
import { readNpy } from './npy.js';

class UsageError extends Error {}

interface Args {
  model: string;
  layers: string[];
  data: string;
  out: string;
  labels?: string;
  batchSize: number;
  datasetName: string;
}

const USAGE =
  'usage: export --model PATH --layers a,b --data PATH --out DIR ' +
  '[--labels PATH] [--batch-size N] [--dataset-name NAME]';

function parseArgs(argv: string[]): Args {
  if (argv[0] !== 'export') {
    throw new UsageError(`unknown command ${argv[0] ?? '(none)'}; ${USAGE}`);
  }
  const flags = new Map<string, string>();
  for (let i = 1; i < argv.length; i += 2) {
    const key = argv[i];
    if (!key.startsWith('--') || i + 1 >= argv.length) {
      throw new UsageError(`dangling or malformed flag ${key}; ${USAGE}`);
    }
    flags.set(key.slice(2), argv[i + 1]);
  }
  const need = (name: string): string => {
    const value = flags.get(name);
    if (value === undefined) {
      throw new UsageError(`missing --${name}; ${USAGE}`);
    }
    return value;
  };
  const batchSize = Number(flags.get('batch-size') ?? '256');
  if (!Number.isInteger(batchSize) || batchSize < 1) {
    throw new UsageError(`--batch-size must be a positive integer`);
  }
  const layers = need('layers').split(',').map(s => s.trim()).filter(Boolean);
  if (layers.length === 0) {
    throw new UsageError('--layers must name at least one layer');
  }
  return {
    model: need('model'),
    layers,
    data: need('data'),
    out: need('out'),
    labels: flags.get('labels'),
    batchSize,
    datasetName: flags.get('dataset-name') ?? 'exported',
  };
}

async function readLabelList(path: string): Promise<number[]> {
  const doc = JSON.parse(await fs.readFile(path, 'utf-8'));
  if (!Array.isArray(doc) || doc.some(v => !Number.isInteger(v))) {
    throw new Error(`${path}: expected a JSON list of integers`);
  }
  return doc;
}

export async function main(argv: string[]): Promise<number> {
  let args: Args;
  try {
    args = parseArgs(argv);
  } catch (err) {
    console.error(`usage error: ${(err as Error).message}`);
    return 1;
  }
  try {
    const model = await loadModel(args.model);
    const inputs = await readNpy(args.data);
    const groundTruth = args.labels ? await readLabelList(args.labels) : undefined;
    const manifestPath = await exportTraces({
      model,
      layers: args.layers,
      inputs,
      outDir: args.out,
      datasetName: args.datasetName,
      groundTruth,
      batchSize: args.batchSize,
    });
    console.log(manifestPath);
    return 0;
  } catch (err) {
    console.error(`error: ${(err as Error).message}`);
    return 2;
  }
}

const invokedDirectly =
  process.argv[1] !== undefined &&
  import.meta.url === new URL(`file://${process.argv[1]}`).href;
if (invokedDirectly) {
  main(process.argv.slice(2)).then(code => {
    process.exitCode = code;
  });
}
