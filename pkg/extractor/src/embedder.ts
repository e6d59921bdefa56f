/**
 * Embedding backends behind one interface. The built-in `hash-v1/<dim>`
 * backend maps input bytes through counter-mode SHA-256 to a unit vector:
 * fully deterministic, dependency-free, and offline, which makes it the
 * reference backend for wiring and conformance work. Real encoders plug in
 * through the same interface.
 */

import { createHash } from "node:crypto";

export class ModelLoadError extends Error {}

export interface Embedder {
  readonly id: string;
  readonly dim: number;
  embedText(texts: string[]): Float64Array[];
  embedBytes(payloads: Buffer[]): Float64Array[];
}

const TWO_53 = 2 ** 53;

class HashEmbedder implements Embedder {
  readonly id: string;

  constructor(readonly dim: number) {
    this.id = `hash-v1/${dim}`;
  }

  private embedOne(payload: Buffer): Float64Array {
    const seed = createHash("sha256").update(payload).digest();
    const row = new Float64Array(this.dim);
    let block = Buffer.alloc(0);
    let counter = 0;
    let offset = 0;
    for (let i = 0; i < this.dim; i++) {
      if (offset + 8 > block.length) {
        const ctr = Buffer.alloc(4);
        ctr.writeUInt32BE(counter++, 0);
        block = createHash("sha256").update(seed).update(ctr).digest();
        offset = 0;
      }
      // top 53 bits of each 8-byte chunk -> uniform in [0, 1) -> [-1, 1)
      const u = Number(block.readBigUInt64BE(offset) >> 11n) / TWO_53;
      row[i] = 2 * u - 1;
      offset += 8;
    }
    let sq = 0;
    for (const x of row) sq += x * x;
    if (sq < 1e-24) row[0] = 1; // unreachable in practice, but never emit zero
    const norm = Math.sqrt(sq < 1e-24 ? 1 : sq);
    for (let i = 0; i < this.dim; i++) row[i] /= norm;
    return row;
  }

  embedBytes(payloads: Buffer[]): Float64Array[] {
    return payloads.map((p) => this.embedOne(p));
  }

  embedText(texts: string[]): Float64Array[] {
    return this.embedBytes(texts.map((t) => Buffer.from(t, "utf-8")));
  }
}

/** Resolve a model identifier to a backend; unknown ids fail to load. */
export function loadEmbedder(modelId: string): Embedder {
  const hash = /^hash-v1\/(\d+)$/.exec(modelId);
  if (hash) {
    const dim = Number(hash[1]);
    if (dim < 1 || dim > 65536) {
      throw new ModelLoadError(`hash-v1 dim out of range: ${dim}`);
    }
    return new HashEmbedder(dim);
  }
  throw new ModelLoadError(
    `cannot load model ${JSON.stringify(modelId)}; available: hash-v1/<dim>`,
  );
}
