import { defineConfig } from 'vitest/config';

export default defineConfig({
  test: {
    environment: 'happy-dom',
    testTimeout: 60_000,
    hookTimeout: 120_000,
    // the conformance suite drives one live service; keep files sequential
    fileParallelism: false,
  },
});
