import { describe, expect, it } from "vitest";

import { ModelLoadError, loadEmbedder } from "../src/embedder.js";

describe("loadEmbedder", () => {
  it("parses hash-v1 ids with their dimension", () => {
    const e = loadEmbedder("hash-v1/128");
    expect(e.dim).toBe(128);
    expect(e.id).toBe("hash-v1/128");
  });

  it("fails to load unknown or malformed ids", () => {
    expect(() => loadEmbedder("clip-vit-b16")).toThrow(ModelLoadError);
    expect(() => loadEmbedder("hash-v1/0")).toThrow(ModelLoadError);
    expect(() => loadEmbedder("hash-v1/")).toThrow(ModelLoadError);
  });
});

describe("hash backend", () => {
  const embedder = loadEmbedder("hash-v1/96");

  it("is deterministic and input-sensitive", () => {
    const [a1] = embedder.embedText(["a photo of a cat"]);
    const [a2] = embedder.embedText(["a photo of a cat"]);
    const [b] = embedder.embedText(["a photo of a dog"]);
    expect([...a1]).toEqual([...a2]);
    expect([...a1]).not.toEqual([...b]);
  });

  it("emits unit rows", () => {
    const rowList = embedder.embedBytes([
      Buffer.from([0]),
      Buffer.from("anything"),
      Buffer.alloc(4096, 7),
    ]);
    for (const row of rowList) {
      expect(row.length).toBe(96);
      const norm = Math.sqrt(row.reduce((s, x) => s + x * x, 0));
      expect(Math.abs(norm - 1)).toBeLessThan(1e-12);
    }
  });

  it("treats text as its utf-8 bytes", () => {
    const [viaText] = embedder.embedText(["héllo"]);
    const [viaBytes] = embedder.embedBytes([Buffer.from("héllo", "utf-8")]);
    expect([...viaText]).toEqual([...viaBytes]);
  });
});
