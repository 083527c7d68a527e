/**
 * Ciphertext matrix multiplication (square, row-major, one matrix per
 * ciphertext, tiled across all slots so rotations wrap per-tile).
 *
 * Outer-product schedule: for each k, replicate column k of A across rows
 * and row k of B down columns (power-of-two shift doubling), multiply, and
 * accumulate:
 *
 *     C = sum_k colrep(A, k) o rowrep(B, k)
 *
 * Shifts reuse two fixed rotation steps (1 and d) plus the doubling steps,
 * so the rotation-key set stays small. Per size d the schedule costs
 * 2(d-1) + 2d*log2(d) rotations, 2d plaintext multiplies, d ciphertext
 * multiplies, and 2d*log2(d) + (d-1) additions.
 */

import type { CipherText } from 'node-seal/implementation/cipher-text';
import type { PlainText } from 'node-seal/implementation/plain-text';

import { SCALE } from './engine.js';
import type { Toolkit } from './artifacts.js';
import { OpCounters } from './counters.js';

function assertPowerOfTwo(size: number): void {
  if (size < 2 || (size & (size - 1)) !== 0) {
    throw new Error(`matrix size must be a power of two >= 2, got ${size}`);
  }
}

export function expectedScheduleCounts(size: number): Record<string, number> {
  const log = Math.log2(size);
  return {
    EvalAdd: 2 * size * log + (size - 1),
    'EvalMult(Plaintext)': 2 * size,
    EvalMult: size,
    EvalRotate: 2 * (size - 1) + 2 * size * log,
  };
}

/** C = A x B on encrypted row-major matrices; caller owns the result. */
export function matrixMultiply(
  toolkit: Toolkit,
  size: number,
  counters: OpCounters,
): CipherText {
  assertPowerOfTwo(size);
  const { seal, evaluator: ev, encoder, slots } = toolkit.engine;
  const { relinKeys, galoisKeys } = toolkit;
  if (toolkit.matA === undefined || toolkit.matB === undefined) {
    throw new Error('matrix inputs missing from artifact set');
  }
  if (size * size > slots) {
    throw new Error(`matrix of ${size * size} entries exceeds ${slots} slots`);
  }

  // Fixed masks: column 0 / row 0 of every d x d tile.
  const colMaskValues = new Float64Array(slots);
  const rowMaskValues = new Float64Array(slots);
  for (let p = 0; p < slots; p += 1) {
    if (p % size === 0) colMaskValues[p] = 1;
    if (p % (size * size) < size) rowMaskValues[p] = 1;
  }
  const colMask = encoder.encode(colMaskValues, SCALE) as PlainText;
  const rowMask = encoder.encode(rowMaskValues, SCALE) as PlainText;

  const rotate = (src: CipherText, steps: number, dst: CipherText) => {
    ev.rotateVector(src, steps, galoisKeys, dst);
    counters.bump('EvalRotate');
  };
  const maskTo = (src: CipherText, mask: PlainText, dst: CipherText) => {
    ev.multiplyPlain(src, mask, dst);
    ev.rescaleToNext(dst, dst);
    dst.setScale(SCALE);
    counters.bump('EvalMult(Plaintext)');
  };
  const replicate = (ct: CipherText, baseStep: number, tmp: CipherText) => {
    for (let s = baseStep; s < baseStep * size; s *= 2) {
      rotate(ct, -s, tmp);
      ev.add(ct, tmp, ct);
      counters.bump('EvalAdd');
    }
  };

  const aShift = toolkit.matA.clone();
  const bShift = toolkit.matB.clone();
  const shiftTmp = seal.CipherText();
  const colA = seal.CipherText();
  const rowB = seal.CipherText();
  const tmp = seal.CipherText();
  const term = seal.CipherText();
  let acc: CipherText | null = null;

  try {
    for (let k = 0; k < size; k += 1) {
      if (k > 0) {
        rotate(aShift, 1, shiftTmp);
        aShift.copy(shiftTmp);
        rotate(bShift, size, shiftTmp);
        bShift.copy(shiftTmp);
      }
      maskTo(aShift, colMask, colA);
      replicate(colA, 1, tmp);
      maskTo(bShift, rowMask, rowB);
      replicate(rowB, size, tmp);

      ev.multiply(colA, rowB, term);
      ev.relinearize(term, relinKeys, term);
      ev.rescaleToNext(term, term);
      term.setScale(SCALE);
      counters.bump('EvalMult');

      if (acc === null) {
        acc = term.clone();
      } else {
        ev.add(acc, term, acc);
        counters.bump('EvalAdd');
      }
    }
    return acc!;
  } finally {
    for (const obj of [aShift, bShift, shiftTmp, colA, rowB, tmp, term, colMask, rowMask]) {
      obj.delete();
    }
  }
}

/** Plaintext product of the toolkit's seeded matrices (row-major). */
export function expectedMatrixProduct(toolkit: Toolkit, size: number): number[] {
  const a = toolkit.matVecA!;
  const b = toolkit.matVecB!;
  const c = new Array(size * size).fill(0);
  for (let i = 0; i < size; i += 1) {
    for (let k = 0; k < size; k += 1) {
      const aik = a[i * size + k];
      for (let j = 0; j < size; j += 1) {
        c[i * size + j] += aik * b[k * size + j];
      }
    }
  }
  return c;
}
