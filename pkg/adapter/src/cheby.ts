/**
 * Chebyshev series evaluation: plaintext fitting/oracle plus the
 * homomorphic evaluator used by the two Chebyshev primitives.
 *
 * The homomorphic path supports degree <= 3 (each extra degree costs a
 * multiplicative level); coefficients beyond that are rejected rather than
 * silently truncated.
 */

import type { CipherText } from 'node-seal/implementation/cipher-text';

import { SCALE, encodeLike } from './engine.js';
import type { Toolkit } from './artifacts.js';

export const MAX_HOMOMORPHIC_DEGREE = 3;

/** Chebyshev coefficients of fn over [a, b] via the discrete transform. */
export function chebyshevFit(
  fn: (x: number) => number,
  a: number,
  b: number,
  degree: number,
  nodes = 64,
): number[] {
  const coeffs: number[] = [];
  for (let j = 0; j <= degree; j += 1) {
    let sum = 0;
    for (let m = 0; m < nodes; m += 1) {
      const theta = (Math.PI * (m + 0.5)) / nodes;
      const x = (Math.cos(theta) * (b - a)) / 2 + (a + b) / 2;
      sum += fn(x) * Math.cos(j * theta);
    }
    coeffs.push(((j === 0 ? 1 : 2) / nodes) * sum);
  }
  return coeffs;
}

/** Plaintext oracle: Clenshaw evaluation of the series over [a, b]. */
export function chebyshevEval(coeffs: number[], a: number, b: number, x: number): number {
  const u = (2 * x - (a + b)) / (b - a);
  let b1 = 0;
  let b2 = 0;
  for (let j = coeffs.length - 1; j >= 1; j -= 1) {
    const next = 2 * u * b1 - b2 + coeffs[j];
    b2 = b1;
    b1 = next;
  }
  return u * b1 - b2 + coeffs[0];
}

/** Tracks WASM-side temporaries so hot paths free them deterministically. */
class Scratch {
  private objects: Array<{ delete(): void }> = [];

  track<T extends { delete(): void }>(obj: T): T {
    this.objects.push(obj);
    return obj;
  }

  free(): void {
    for (const obj of this.objects) {
      obj.delete();
    }
    this.objects = [];
  }
}

/**
 * Homomorphically evaluate sum_j c_j T_j(u) with u the affine map of the
 * input into [-1, 1]. Consumes up to degree + 1 levels ([a,b] = [-1,1]
 * skips the affine level). The caller owns the returned ciphertext.
 */
export function evalChebyshevSeriesHomomorphic(
  toolkit: Toolkit,
  input: CipherText,
  coeffs: number[],
  a: number,
  b: number,
): CipherText {
  if (coeffs.length - 1 > MAX_HOMOMORPHIC_DEGREE) {
    throw new Error(
      `series degree ${coeffs.length - 1} exceeds supported degree ` +
        `${MAX_HOMOMORPHIC_DEGREE} (one level per degree)`,
    );
  }
  if (coeffs.length < 2) {
    // A pure constant has no ciphertext dependency (and a zero-weighted
    // product would be a transparent ciphertext, which the library rejects).
    throw new Error('series must have degree >= 1');
  }
  const { seal, evaluator: ev } = toolkit.engine;
  const { relinKeys } = toolkit;
  const engine = toolkit.engine;
  const scratch = new Scratch();

  const rescaleFix = (ct: CipherText) => {
    ev.rescaleToNext(ct, ct);
    ct.setScale(SCALE);
  };
  const switchTo = (ct: CipherText, target: CipherText): CipherText => {
    const out = scratch.track(seal.CipherText());
    ev.cipherModSwitchTo(ct, target.parmsId, out);
    out.setScale(SCALE);
    return out;
  };

  try {
    // Affine map u = s*x + t (skipped for the identity range).
    let u: CipherText;
    if (a === -1 && b === 1) {
      u = scratch.track(input.clone());
    } else {
      const s = 2 / (b - a);
      const t = -(a + b) / (b - a);
      u = scratch.track(seal.CipherText());
      const sPlain = scratch.track(encodeLike(engine, s, input));
      ev.multiplyPlain(input, sPlain, u);
      rescaleFix(u);
      const tPlain = scratch.track(encodeLike(engine, t, u));
      ev.addPlain(u, tPlain, u);
    }

    // T2 = 2u^2 - 1.
    let t2: CipherText | null = null;
    if (coeffs.length >= 3) {
      t2 = scratch.track(seal.CipherText());
      ev.square(u, t2);
      ev.relinearize(t2, relinKeys, t2);
      rescaleFix(t2);
      ev.add(t2, t2, t2);
      const one = scratch.track(encodeLike(engine, 1, t2));
      ev.subPlain(t2, one, t2);
    }

    // T3 = 2u*T2 - u.
    let t3: CipherText | null = null;
    if (coeffs.length >= 4) {
      t3 = scratch.track(seal.CipherText());
      const uAligned = switchTo(u, t2!);
      ev.multiply(uAligned, t2!, t3);
      ev.relinearize(t3, relinKeys, t3);
      rescaleFix(t3);
      ev.add(t3, t3, t3);
      const uDeep = switchTo(u, t3);
      ev.sub(t3, uDeep, t3);
    }

    // Weighted terms, aligned to the deepest level before summation.
    // Negligible coefficients are skipped: they contribute nothing and an
    // all-zero plaintext product is a transparent ciphertext (rejected).
    const terms: CipherText[] = [];
    const weigh = (basis: CipherText, c: number) => {
      if (Math.abs(c) < 1e-12) {
        return;
      }
      const term = scratch.track(seal.CipherText());
      const cPlain = scratch.track(encodeLike(engine, c, basis));
      ev.multiplyPlain(basis, cPlain, term);
      rescaleFix(term);
      terms.push(term);
    };
    if (coeffs.length >= 2) weigh(u, coeffs[1]);
    if (t2 !== null) weigh(t2, coeffs[2]);
    if (t3 !== null) weigh(t3, coeffs[3]);
    if (terms.length === 0) {
      throw new Error('series has no non-negligible ciphertext terms');
    }

    const deepest = terms.reduce((x, y) =>
      x.coeffModulusSize <= y.coeffModulusSize ? x : y,
    );
    const result = deepest.clone();
    result.setScale(SCALE);
    for (const term of terms) {
      if (term === deepest) {
        continue;
      }
      const aligned = switchTo(term, deepest);
      ev.add(result, aligned, result);
    }
    const c0 = scratch.track(encodeLike(engine, coeffs[0], result));
    ev.addPlain(result, c0, result);
    return result;
  } finally {
    scratch.free();
  }
}
