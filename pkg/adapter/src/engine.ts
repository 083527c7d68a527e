/**
 * CKKS engine construction on top of the SEAL WebAssembly build.
 *
 * The coefficient modulus chain is [60, 40 x depth, 60] bits with a 2^40
 * scale, giving `depth` rescaling levels. Security standards map onto the
 * library's enforced levels; parameter rejections surface verbatim.
 */

import SEAL from 'node-seal';
import type { SEALLibrary } from 'node-seal/implementation/seal';
import type { Context } from 'node-seal/implementation/context';
import type { CKKSEncoder } from 'node-seal/implementation/ckks-encoder';
import type { Evaluator } from 'node-seal/implementation/evaluator';
import type { EncryptionParameters } from 'node-seal/implementation/encryption-parameters';
import type { CipherText } from 'node-seal/implementation/cipher-text';
import type { PlainText } from 'node-seal/implementation/plain-text';

import type { CryptoConfig } from './protocol.js';

export const SCALE_BITS = 40;
export const SCALE = 2 ** SCALE_BITS;

let sealSingleton: SEALLibrary | null = null;

export async function loadSeal(): Promise<SEALLibrary> {
  if (sealSingleton === null) {
    sealSingleton = await SEAL();
  }
  return sealSingleton;
}

export interface Engine {
  seal: SEALLibrary;
  parms: EncryptionParameters;
  context: Context;
  encoder: CKKSEncoder;
  evaluator: Evaluator;
  slots: number;
  config: CryptoConfig;
}

function securityLevel(seal: SEALLibrary, standard: string) {
  switch (standard) {
    case 'none':
      return seal.SecurityLevel.none;
    case '128-bit':
      return seal.SecurityLevel.tc128;
    case '192-bit':
      return seal.SecurityLevel.tc192;
    case '256-bit':
      return seal.SecurityLevel.tc256;
    default:
      throw new Error(`unknown security standard '${standard}'`);
  }
}

export function modulusBits(depth: number): Int32Array {
  return Int32Array.from([60, ...Array(depth).fill(SCALE_BITS + 0), 60]);
}

export async function createEngine(
  config: CryptoConfig,
  parmsBase64?: string,
): Promise<Engine> {
  const seal = await loadSeal();
  const polyDegree = 2 ** config.log2RingDim;
  const parms = seal.EncryptionParameters(seal.SchemeType.ckks);
  if (parmsBase64 !== undefined) {
    parms.load(parmsBase64);
  } else {
    parms.setPolyModulusDegree(polyDegree);
    parms.setCoeffModulus(seal.CoeffModulus.Create(polyDegree, modulusBits(config.depth)));
  }
  const context = seal.Context(parms, true, securityLevel(seal, config.securityStandard));
  if (!context.parametersSet()) {
    throw new Error(
      `encryption parameters rejected for N=2^${config.log2RingDim}, ` +
        `depth=${config.depth}, standard=${config.securityStandard}: ` +
        context.toHuman(),
    );
  }
  const encoder = seal.CKKSEncoder(context);
  if (config.batchSize > encoder.slotCount) {
    throw new Error(
      `batch size ${config.batchSize} exceeds slot capacity ${encoder.slotCount}`,
    );
  }
  return {
    seal,
    parms,
    context,
    encoder,
    evaluator: seal.Evaluator(context),
    slots: encoder.slotCount,
    config,
  };
}

/** Tile a payload vector across all slots so rotations wrap per-tile. */
export function tiled(values: number[], slots: number): Float64Array {
  const out = new Float64Array(slots);
  for (let i = 0; i < slots; i += 1) {
    out[i] = values[i % values.length];
  }
  return out;
}

export function encodeVector(
  engine: Engine,
  values: number[] | Float64Array,
  scale: number = SCALE,
): PlainText {
  const data =
    values instanceof Float64Array && values.length === engine.slots
      ? values
      : tiled(Array.from(values), engine.slots);
  return engine.encoder.encode(data, scale) as PlainText;
}

/** Encode a constant, mod-switched and scale-matched to a ciphertext. */
export function encodeLike(engine: Engine, value: number, ct: CipherText): PlainText {
  const plain = engine.encoder.encode(
    Float64Array.from({ length: engine.slots }, () => value),
    ct.scale,
  ) as PlainText;
  const switched = engine.seal.PlainText();
  engine.evaluator.plainModSwitchTo(plain, ct.parmsId, switched);
  plain.delete();
  return switched;
}

/** Deterministic input generator (structure is reproducible across runs). */
export function seededValues(count: number, seed: number, span = 1.0): number[] {
  let state = seed >>> 0;
  const out: number[] = [];
  for (let i = 0; i < count; i += 1) {
    // mulberry32
    state = (state + 0x6d2b79f5) >>> 0;
    let t = state;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    const u = ((t ^ (t >>> 14)) >>> 0) / 4294967296;
    out.push((u * 2 - 1) * span);
  }
  return out;
}
