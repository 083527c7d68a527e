/**
 * Runner-protocol plumbing: argv shape, config handoff document, and the
 * sentinel-framed self-report emitted on stdout.
 *
 *   <exe> --benchmark <name> --phase setup|full --config <path> --reps <n>
 *
 * The requested thread count arrives in OMP_NUM_THREADS. stdout carries
 * exactly one self-report between the sentinels; stderr is free for logs.
 */

import { readFileSync } from 'node:fs';

export const REPORT_BEGIN = '===SELFREPORT-BEGIN===';
export const REPORT_END = '===SELFREPORT-END===';
export const THREAD_ENV_VAR = 'OMP_NUM_THREADS';

export type Phase = 'setup' | 'full';

export interface CryptoConfig {
  log2RingDim: number;
  depth: number;
  batchSize: number;
  securityStandard: string;
}

export interface ConfigDocument {
  benchmark: string;
  crypto: CryptoConfig;
  extraParams: Record<string, unknown>;
  cacheDir: string | null;
}

export interface SelfReport {
  benchmark: string;
  phase: Phase;
  repetitions_executed: number;
  inner_roi_seconds?: number;
  dynamic_counts?: Record<string, number>;
  [extra: string]: unknown;
}

export interface CliArgs {
  benchmark: string;
  phase: Phase;
  configPath: string;
  reps: number;
  selftest: boolean;
}

export function parseArgs(argv: string[]): CliArgs {
  const args: Partial<CliArgs> = { reps: 1, selftest: false };
  for (let i = 0; i < argv.length; i += 1) {
    const flag = argv[i];
    switch (flag) {
      case '--benchmark':
        args.benchmark = argv[++i];
        break;
      case '--phase': {
        const phase = argv[++i];
        if (phase !== 'setup' && phase !== 'full') {
          throw new Error(`invalid --phase ${phase}; expected setup|full`);
        }
        args.phase = phase;
        break;
      }
      case '--config':
        args.configPath = argv[++i];
        break;
      case '--reps':
        args.reps = Number.parseInt(argv[++i], 10);
        break;
      case '--selftest':
        args.selftest = true;
        break;
      default:
        throw new Error(`unknown argument ${flag}`);
    }
  }
  if (!args.selftest) {
    for (const required of ['benchmark', 'phase', 'configPath'] as const) {
      if (args[required] === undefined) {
        throw new Error(`missing --${required === 'configPath' ? 'config' : required}`);
      }
    }
  }
  if (!Number.isInteger(args.reps) || (args.reps as number) < 1) {
    throw new Error('--reps must be a positive integer');
  }
  return args as CliArgs;
}

export function loadConfigDocument(path: string): ConfigDocument {
  const doc = JSON.parse(readFileSync(path, 'utf-8'));
  const crypto = doc.crypto ?? {};
  for (const field of ['log2_ring_dim', 'depth', 'batch_size']) {
    if (typeof crypto[field] !== 'number') {
      throw new Error(`config document missing crypto.${field}`);
    }
  }
  return {
    benchmark: String(doc.benchmark ?? ''),
    crypto: {
      log2RingDim: crypto.log2_ring_dim,
      depth: crypto.depth,
      batchSize: crypto.batch_size,
      securityStandard: String(crypto.security_standard ?? 'none'),
    },
    extraParams: doc.extra_params ?? {},
    cacheDir: doc.cache_dir ?? null,
  };
}

export function requestedThreads(): number {
  const raw = process.env[THREAD_ENV_VAR];
  const parsed = raw ? Number.parseInt(raw, 10) : 1;
  return Number.isInteger(parsed) && parsed >= 1 ? parsed : 1;
}

export function emitSelfReport(report: SelfReport): void {
  process.stdout.write(`${REPORT_BEGIN}\n${JSON.stringify(report)}\n${REPORT_END}\n`);
}
