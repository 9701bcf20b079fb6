import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    environment: "happy-dom",
    environmentOptions: {
      happyDOM: {
        // live tests talk to a real server; giving the page that origin
        // keeps fetch same-origin
        url: process.env.SERVER_URL || "http://localhost:8000",
      },
    },
    include: ["test/**/*.test.ts"],
    testTimeout: 30000,
  },
});
