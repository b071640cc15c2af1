/**
 * Minimal npy (version 1.0) support for 2-D float matrices.
 *
 * The writer mirrors the layout the Python side emits: little-endian float64,
 * C order, header padded with spaces to a 64-byte multiple and terminated by
 * a newline. The reader is strict for the same reasons the Python reader is:
 * a trace file that is not exactly what we expect should fail loudly, not be
 * reinterpreted.
 */

import { promises as fs } from 'fs';
import { dirname, join } from 'path';

const MAGIC = Buffer.from('\x93NUMPY', 'latin1');

export interface Matrix {
  rows: number;
  cols: number;
  /** Row-major values, length rows * cols. */
  data: Float64Array;
}

export class NpyFormatError extends Error {}

function headerFor(rows: number, cols: number): Buffer {
  const dict = `{'descr': '<f8', 'fortran_order': False, 'shape': (${rows}, ${cols}), }`;
  const base = MAGIC.length + 2 + 2; // magic, version, header length field
  let padded = dict.length + 1; // newline terminator
  if ((base + padded) % 64 !== 0) {
    padded += 64 - ((base + padded) % 64);
  }
  const text = dict + ' '.repeat(padded - dict.length - 1) + '\n';
  const out = Buffer.alloc(base + padded);
  MAGIC.copy(out, 0);
  out[6] = 1; // format version 1.0
  out[7] = 0;
  out.writeUInt16LE(padded, 8);
  out.write(text, 10, 'latin1');
  return out;
}

/** Serialize a row-major float64 matrix to npy bytes. */
export function encodeNpy(matrix: Matrix): Buffer {
  const { rows, cols, data } = matrix;
  if (data.length !== rows * cols) {
    throw new NpyFormatError(
      `matrix claims ${rows}x${cols} but holds ${data.length} values`,
    );
  }
  for (let i = 0; i < data.length; i++) {
    if (!Number.isFinite(data[i])) {
      throw new NpyFormatError(`non-finite value at flat index ${i}`);
    }
  }
  const header = headerFor(rows, cols);
  const payload = Buffer.from(data.buffer, data.byteOffset, data.byteLength);
  return Buffer.concat([header, payload]);
}

/** Parse npy bytes into a row-major float64 matrix. Accepts <f8 and <f4. */
export function decodeNpy(buffer: Buffer): Matrix {
  if (buffer.length < 10 || !buffer.subarray(0, 6).equals(MAGIC)) {
    throw new NpyFormatError('bad magic: not an npy file');
  }
  if (buffer[6] !== 1) {
    throw new NpyFormatError(`unsupported npy version ${buffer[6]}.${buffer[7]}`);
  }
  const headerLen = buffer.readUInt16LE(8);
  if (buffer.length < 10 + headerLen) {
    throw new NpyFormatError('truncated header');
  }
  const header = buffer.subarray(10, 10 + headerLen).toString('latin1');
  const descr = /'descr':\s*'([^']+)'/.exec(header);
  const fortran = /'fortran_order':\s*(True|False)/.exec(header);
  const shape = /'shape':\s*\((\d+),\s*(\d+)\s*,?\)/.exec(header);
  if (!descr || !fortran) {
    throw new NpyFormatError(`malformed header: ${header.trim()}`);
  }
  if (fortran[1] === 'True') {
    throw new NpyFormatError('fortran-order arrays are not supported');
  }
  if (!shape) {
    throw new NpyFormatError('expected a 2-D shape');
  }
  const rows = Number(shape[1]);
  const cols = Number(shape[2]);
  const start = 10 + headerLen;
  const body = buffer.subarray(start);
  const count = rows * cols;
  const data = new Float64Array(count);
  if (descr[1] === '<f8') {
    if (body.length < count * 8) {
      throw new NpyFormatError('payload shorter than the declared shape');
    }
    for (let i = 0; i < count; i++) {
      data[i] = body.readDoubleLE(i * 8);
    }
  } else if (descr[1] === '<f4') {
    if (body.length < count * 4) {
      throw new NpyFormatError('payload shorter than the declared shape');
    }
    for (let i = 0; i < count; i++) {
      data[i] = body.readFloatLE(i * 4);
    }
  } else {
    throw new NpyFormatError(`unsupported dtype ${descr[1]}; need <f8 or <f4`);
  }
  return { rows, cols, data };
}

/** Write atomically: stage next to the target, then rename into place. */
export async function writeFileAtomic(path: string, bytes: Buffer | string): Promise<void> {
  const staged = join(dirname(path), `.${Math.random().toString(36).slice(2)}.tmp`);
  await fs.writeFile(staged, bytes);
  await fs.rename(staged, path);
}

export async function writeNpy(path: string, matrix: Matrix): Promise<void> {
  await writeFileAtomic(path, encodeNpy(matrix));
}

export async function readNpy(path: string): Promise<Matrix> {
  return decodeNpy(await fs.readFile(path));
}
