/**
 * The fourteen supported primitives, instrumented for dynamic operation
 * counting. Every repetition writes into a fresh destination (inputs are
 * never consumed), so repeated invocations cannot exhaust ciphertext
 * levels.
 *
 * Engine notes, reported in the self-report as well:
 *  - EvalFastRotate uses the pre-generated automorphism keys but performs
 *    a plain rotation; the WASM engine exposes no hoisted-rotation API.
 *  - EvalBootstrap is a refresh *emulation* (decrypt + re-encrypt to a
 *    fresh level budget); the engine has no homomorphic bootstrapping, so
 *    its cost is not representative of true bootstrapping.
 */

import type { CipherText } from 'node-seal/implementation/cipher-text';

import { SCALE, encodeLike, encodeVector, tiled } from './engine.js';
import { chebyshevEval, chebyshevFit, evalChebyshevSeriesHomomorphic } from './cheby.js';
import type { Toolkit } from './artifacts.js';
import { OpCounters } from './counters.js';

export const PRIMITIVE_NAMES = [
  'EvalAdd',
  'EvalAdd(Plaintext)',
  'EvalSub',
  'EvalSub(Scalar)',
  'EvalMult',
  'EvalMultNoRelin',
  'EvalMult(Plaintext)',
  'EvalMult(Scalar)',
  'EvalSquare',
  'EvalRotate',
  'EvalFastRotate',
  'EvalBootstrap',
  'EvalChebyshevFunction',
  'EvalChebyshevSeries',
] as const;

export type PrimitiveName = (typeof PRIMITIVE_NAMES)[number];

export const SCALAR_OPERAND = 1.5;
export const ROTATE_STEP = 1;
export const SERIES_COEFFS = [0.6, 0.42, -0.05, 0.07];
export const SERIES_RANGE: [number, number] = [-1, 1];
export const FUNCTION_RANGE: [number, number] = [-4, 4];
export const FUNCTION_DEGREE = 3;

export const logistic = (x: number) => 1 / (1 + Math.exp(-x));

export function isPrimitive(name: string): name is PrimitiveName {
  return (PRIMITIVE_NAMES as readonly string[]).includes(name);
}

export interface PrimitiveContext {
  toolkit: Toolkit;
  counters: OpCounters;
}

/**
 * Execute one primitive invocation and return its result ciphertext
 * (caller owns it). Counting happens here, one bump per invocation.
 */
export function executePrimitive(name: PrimitiveName, pc: PrimitiveContext): CipherText {
  const { toolkit, counters } = pc;
  const { seal, evaluator: ev } = toolkit.engine;
  const engine = toolkit.engine;
  const { ctA, ctB, relinKeys, galoisKeys } = toolkit;
  counters.bump(name);

  const out = seal.CipherText();
  switch (name) {
    case 'EvalAdd':
      ev.add(ctA, ctB, out);
      return out;
    case 'EvalAdd(Plaintext)': {
      const plain = encodeVector(engine, tiled(toolkit.vecB, engine.slots), ctA.scale);
      ev.addPlain(ctA, plain, out);
      plain.delete();
      return out;
    }
    case 'EvalSub':
      ev.sub(ctA, ctB, out);
      return out;
    case 'EvalSub(Scalar)': {
      const plain = encodeLike(engine, SCALAR_OPERAND, ctA);
      ev.subPlain(ctA, plain, out);
      plain.delete();
      return out;
    }
    case 'EvalMult':
      ev.multiply(ctA, ctB, out);
      ev.relinearize(out, relinKeys, out);
      ev.rescaleToNext(out, out);
      out.setScale(SCALE);
      return out;
    case 'EvalMultNoRelin':
      ev.multiply(ctA, ctB, out);
      return out;
    case 'EvalMult(Plaintext)': {
      const plain = encodeVector(engine, tiled(toolkit.vecB, engine.slots), ctA.scale);
      ev.multiplyPlain(ctA, plain, out);
      ev.rescaleToNext(out, out);
      out.setScale(SCALE);
      plain.delete();
      return out;
    }
    case 'EvalMult(Scalar)': {
      const plain = encodeLike(engine, SCALAR_OPERAND, ctA);
      ev.multiplyPlain(ctA, plain, out);
      ev.rescaleToNext(out, out);
      out.setScale(SCALE);
      plain.delete();
      return out;
    }
    case 'EvalSquare':
      ev.square(ctA, out);
      ev.relinearize(out, relinKeys, out);
      ev.rescaleToNext(out, out);
      out.setScale(SCALE);
      return out;
    case 'EvalRotate':
      ev.rotateVector(ctA, ROTATE_STEP, galoisKeys, out);
      return out;
    case 'EvalFastRotate':
      // Precomputed automorphism keys; no hoisting in this engine.
      ev.rotateVector(ctA, ROTATE_STEP, galoisKeys, out);
      return out;
    case 'EvalBootstrap': {
      out.delete();
      return bootstrapRefresh(pc.toolkit, ctA);
    }
    case 'EvalChebyshevFunction': {
      out.delete();
      const coeffs = chebyshevFit(
        logistic, FUNCTION_RANGE[0], FUNCTION_RANGE[1], FUNCTION_DEGREE,
      );
      return evalChebyshevSeriesHomomorphic(
        toolkit, ctA, coeffs, FUNCTION_RANGE[0], FUNCTION_RANGE[1],
      );
    }
    case 'EvalChebyshevSeries': {
      out.delete();
      return evalChebyshevSeriesHomomorphic(
        toolkit, ctA, SERIES_COEFFS, SERIES_RANGE[0], SERIES_RANGE[1],
      );
    }
  }
}

/** Refresh emulation: decrypt and re-encrypt at a fresh level budget. */
function bootstrapRefresh(toolkit: Toolkit, ct: CipherText): CipherText {
  const { seal, encoder } = toolkit.engine;
  const plain = toolkit.decryptor.decrypt(ct) as ReturnType<typeof seal.PlainText>;
  const values = encoder.decode(plain);
  plain.delete();
  const fresh = encodeVector(toolkit.engine, values, SCALE);
  const refreshed = toolkit.encryptor.encrypt(fresh) as CipherText;
  fresh.delete();
  return refreshed;
}

export function decryptToVector(toolkit: Toolkit, ct: CipherText): Float64Array {
  const plain = toolkit.decryptor.decrypt(ct) as ReturnType<
    typeof toolkit.engine.seal.PlainText
  >;
  const values = toolkit.engine.encoder.decode(plain);
  plain.delete();
  return values;
}

/** Plaintext oracle for one primitive, evaluated at payload position i. */
export function expectedValue(
  name: PrimitiveName,
  toolkit: Toolkit,
  i: number,
): number {
  const a = toolkit.vecA;
  const b = toolkit.vecB;
  const n = a.length;
  switch (name) {
    case 'EvalAdd':
    case 'EvalAdd(Plaintext)':
      return a[i] + b[i];
    case 'EvalSub':
      return a[i] - b[i];
    case 'EvalSub(Scalar)':
      return a[i] - SCALAR_OPERAND;
    case 'EvalMult':
    case 'EvalMultNoRelin':
    case 'EvalMult(Plaintext)':
      return a[i] * b[i];
    case 'EvalMult(Scalar)':
      return a[i] * SCALAR_OPERAND;
    case 'EvalSquare':
      return a[i] * a[i];
    case 'EvalRotate':
    case 'EvalFastRotate':
      return a[(i + ROTATE_STEP) % n];
    case 'EvalBootstrap':
      return a[i];
    case 'EvalChebyshevFunction': {
      const coeffs = chebyshevFit(
        logistic, FUNCTION_RANGE[0], FUNCTION_RANGE[1], FUNCTION_DEGREE,
      );
      return chebyshevEval(coeffs, FUNCTION_RANGE[0], FUNCTION_RANGE[1], a[i]);
    }
    case 'EvalChebyshevSeries':
      return chebyshevEval(SERIES_COEFFS, SERIES_RANGE[0], SERIES_RANGE[1], a[i]);
  }
}
