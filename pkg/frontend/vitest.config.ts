import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    environment: "happy-dom",
    environmentOptions: {
      happyDOM: {
        // the deployed console is same-origin behind /console; tests talk
        // to live nodes on arbitrary loopback ports instead
        settings: { fetch: { disableSameOriginPolicy: true } },
      },
    },
    // the e2e suite drives one live cluster; keep files sequential
    fileParallelism: false,
    testTimeout: 120_000,
    hookTimeout: 120_000,
  },
});
