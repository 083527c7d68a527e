/**
 * Benchmark executable entry point (runner protocol).
 *
 * Setup phase: load or generate the serialized crypto artifacts, nothing
 * else. Full phase: setup plus the measured region of interest. One
 * self-report goes to stdout; logs go to stderr. `--selftest` decrypts and
 * verifies one result per primitive plus a small matrix product.
 */

import { performance } from 'node:perf_hooks';

import { ensureArtifacts, needsFor, type Toolkit } from './artifacts.js';
import { OpCounters } from './counters.js';
import { matrixMultiply, expectedMatrixProduct, expectedScheduleCounts } from './matmul.js';
import {
  PRIMITIVE_NAMES,
  decryptToVector,
  executePrimitive,
  expectedValue,
  isPrimitive,
} from './ops.js';
import {
  emitSelfReport,
  loadConfigDocument,
  parseArgs,
  requestedThreads,
  type ConfigDocument,
  type SelfReport,
} from './protocol.js';

const EXIT_OK = 0;
const EXIT_ERROR = 2;
const EXIT_PROTOCOL = 3;

const log = (message: string) => process.stderr.write(`fhe-adapter: ${message}\n`);

function matrixSizeFor(doc: ConfigDocument, benchmark: string): number {
  const fromParams = doc.extraParams['matrix_size'];
  if (typeof fromParams === 'number') {
    return fromParams;
  }
  const suffix = benchmark.match(/^matrix-mult-(\d+)$/);
  return suffix ? Number.parseInt(suffix[1], 10) : 32;
}

async function runBenchmark(
  benchmark: string,
  phase: 'setup' | 'full',
  doc: ConfigDocument,
  reps: number,
): Promise<SelfReport> {
  const isMatMul = benchmark.startsWith('matrix-mult');
  const primitive = isPrimitive(benchmark) ? benchmark : null;
  if (!isMatMul && primitive === null) {
    throw new ProtocolViolation(`unknown benchmark '${benchmark}'`);
  }
  if (isMatMul && reps !== 1) {
    throw new ProtocolViolation('repetitions > 1 only applies to primitives');
  }
  const needs = isMatMul
    ? needsFor(benchmark, matrixSizeFor(doc, benchmark))
    : needsFor(benchmark);
  const toolkit = await ensureArtifacts(doc, needs);

  const report: SelfReport = {
    benchmark,
    phase,
    repetitions_executed: reps,
    engine: 'seal-wasm-ckks',
    threads_requested: requestedThreads(),
    threads_effective: 1, // single-threaded WebAssembly engine
  };
  if (benchmark === 'EvalBootstrap') {
    report.emulated = true;
  }
  if (phase === 'setup') {
    return report;
  }

  const counters = new OpCounters();
  const started = performance.now();
  if (isMatMul) {
    const product = matrixMultiply(toolkit, needs.matrixSize!, counters);
    product.delete();
  } else {
    for (let i = 0; i < reps; i += 1) {
      const result = executePrimitive(primitive!, { toolkit, counters });
      result.delete();
    }
  }
  report.inner_roi_seconds = (performance.now() - started) / 1000;
  report.dynamic_counts = counters.toObject();
  return report;
}

class ProtocolViolation extends Error {}

async function selftest(): Promise<number> {
  const doc: ConfigDocument = {
    benchmark: 'selftest',
    crypto: { log2RingDim: 13, depth: 5, batchSize: 1024, securityStandard: 'none' },
    extraParams: {},
    cacheDir: null,
  };
  let failures = 0;
  const check = (name: string, ok: boolean, detail: string) => {
    log(`selftest ${name}: ${ok ? 'ok' : `FAILED (${detail})`}`);
    if (!ok) failures += 1;
  };

  const toolkit = await ensureArtifacts(doc, needsFor('EvalAdd'));
  for (const name of PRIMITIVE_NAMES) {
    const counters = new OpCounters();
    const result = executePrimitive(name, { toolkit, counters });
    const got = decryptToVector(toolkit, result);
    result.delete();
    let worst = 0;
    for (let i = 0; i < 32; i += 1) {
      worst = Math.max(worst, Math.abs(got[i] - expectedValue(name, toolkit, i)));
    }
    check(name, worst < 1e-3, `max error ${worst.toExponential(2)}`);
  }

  const size = 8;
  const mmToolkit = await ensureArtifacts(
    { ...doc, benchmark: 'matrix-mult-8' },
    needsFor('matrix-mult-8', size),
  );
  const counters = new OpCounters();
  const product = matrixMultiply(mmToolkit, size, counters);
  const got = decryptToVector(mmToolkit, product);
  product.delete();
  const expected = expectedMatrixProduct(mmToolkit, size);
  let worst = 0;
  for (let i = 0; i < size * size; i += 1) {
    worst = Math.max(worst, Math.abs(got[i] - expected[i]));
  }
  check('matrix-mult-8 values', worst < 1e-2, `max error ${worst.toExponential(2)}`);
  const schedule = expectedScheduleCounts(size);
  const counts = counters.toObject();
  const canonical = (obj: Record<string, number>) =>
    JSON.stringify(Object.fromEntries(Object.entries(obj).sort()));
  check(
    'matrix-mult-8 schedule',
    canonical(counts) === canonical(schedule),
    `${canonical(counts)} != ${canonical(schedule)}`,
  );

  log(`selftest ${failures === 0 ? 'passed' : `failed (${failures} checks)`}`);
  return failures === 0 ? EXIT_OK : EXIT_ERROR;
}

async function main(): Promise<number> {
  let args;
  try {
    args = parseArgs(process.argv.slice(2));
  } catch (error) {
    log(`argument error: ${(error as Error).message}`);
    return EXIT_ERROR;
  }
  if (args.selftest) {
    return selftest();
  }
  try {
    const doc = loadConfigDocument(args.configPath);
    const report = await runBenchmark(args.benchmark, args.phase, doc, args.reps);
    emitSelfReport(report);
    return EXIT_OK;
  } catch (error) {
    if (error instanceof ProtocolViolation) {
      log(`protocol error: ${error.message}`);
      return EXIT_PROTOCOL;
    }
    log(`error: ${(error as Error).message}`);
    return EXIT_ERROR;
  }
}

main().then(
  (code) => process.exit(code),
  (error) => {
    log(`unhandled: ${error?.stack ?? error}`);
    process.exit(EXIT_ERROR);
  },
);
