import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    include: ["tests/**/*.test.ts"],
    // live.test.ts spawns the python service and runs real sampling
    testTimeout: 180_000,
    hookTimeout: 180_000,
  },
});
