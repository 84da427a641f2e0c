import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    environment: "node",
    testTimeout: 20_000,
    hookTimeout: 30_000,
    // the e2e spec drives one shared live verifier; keep files sequential
    fileParallelism: false,
  },
});
