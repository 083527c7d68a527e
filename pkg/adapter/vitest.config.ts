import { defineConfig } from 'vitest/config';

export default defineConfig({
  test: {
    include: ['test/**/*.test.ts'],
    testTimeout: 300_000,
    hookTimeout: 300_000,
    // WASM contexts are heavy; keep suites in one worker.
    pool: 'forks',
    poolOptions: { forks: { singleFork: true } },
  },
});
