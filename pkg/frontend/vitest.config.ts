import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    include: ["tests/**/*.test.ts"],
    testTimeout: 20_000,
    // the live-service test generates a 1000-identity store first
    hookTimeout: 180_000,
  },
});
