/**
 * EMBT v1 binary embedding tables, exactly as the engine reads them:
 * magic "EMBT", u32 LE version = 1, u32 LE dim, u64 LE count,
 * count x (u32 LE byte length + UTF-8 label), then count*dim float32 LE
 * row-major values. Rows are L2-normalized at float64 before the float32
 * narrowing, so stored norms sit within ~1e-7 of 1.
 */

import { promises as fs } from "node:fs";
import { randomBytes } from "node:crypto";
import path from "node:path";

export class FormatError extends Error {}

const MAGIC = Buffer.from("EMBT", "ascii");
const VERSION = 1;

const ASCII_UPPER_START = 0x41;
const ASCII_UPPER_END = 0x5a;

/** Label identity rule shared with the engine: trim ASCII whitespace,
 * lowercase ASCII letters only. */
export function canonicalLabel(label: string): string {
  let start = 0;
  let end = label.length;
  const isWs = (c: string) => " \t\n\r\v\f".includes(c);
  while (start < end && isWs(label[start])) start++;
  while (end > start && isWs(label[end - 1])) end--;
  let out = "";
  for (let i = start; i < end; i++) {
    const code = label.charCodeAt(i);
    out +=
      code >= ASCII_UPPER_START && code <= ASCII_UPPER_END
        ? String.fromCharCode(code + 32)
        : label[i];
  }
  return out;
}

export interface EmbeddingTable {
  labels: string[];
  dim: number;
  /** row-major, length labels.length * dim */
  vectors: Float32Array;
}

export function normalizeRow(row: Float64Array): Float64Array {
  let sq = 0;
  for (const x of row) sq += x * x;
  const norm = Math.sqrt(sq);
  if (!(norm > 1e-12)) {
    throw new FormatError("cannot normalize a zero embedding row");
  }
  const out = new Float64Array(row.length);
  for (let i = 0; i < row.length; i++) out[i] = row[i] / norm;
  return out;
}

export function buildTable(labels: string[], rows: Float64Array[], dim: number): EmbeddingTable {
  if (labels.length !== rows.length) {
    throw new FormatError(`${labels.length} labels for ${rows.length} rows`);
  }
  if (dim < 1) throw new FormatError(`dim must be >= 1, got ${dim}`);
  const seen = new Map<string, string>();
  for (const label of labels) {
    const canon = canonicalLabel(label);
    const clash = seen.get(canon);
    if (clash !== undefined) {
      throw new FormatError(`duplicate label after canonicalization: ${label} vs ${clash}`);
    }
    seen.set(canon, label);
  }
  const vectors = new Float32Array(labels.length * dim);
  rows.forEach((row, r) => {
    if (row.length !== dim) {
      throw new FormatError(`row ${r} has dim ${row.length}, expected ${dim}`);
    }
    const unit = normalizeRow(row);
    for (let c = 0; c < dim; c++) vectors[r * dim + c] = Math.fround(unit[c]);
  });
  return { labels: [...labels], dim, vectors };
}

export function encodeTable(table: EmbeddingTable): Buffer {
  const header = Buffer.alloc(20);
  MAGIC.copy(header, 0);
  header.writeUInt32LE(VERSION, 4);
  header.writeUInt32LE(table.dim, 8);
  header.writeBigUInt64LE(BigInt(table.labels.length), 12);
  const parts: Buffer[] = [header];
  for (const label of table.labels) {
    const raw = Buffer.from(label, "utf-8");
    const len = Buffer.alloc(4);
    len.writeUInt32LE(raw.length, 0);
    parts.push(len, raw);
  }
  const floats = Buffer.alloc(table.vectors.length * 4);
  for (let i = 0; i < table.vectors.length; i++) {
    floats.writeFloatLE(table.vectors[i], i * 4);
  }
  parts.push(floats);
  return Buffer.concat(parts);
}

export async function writeTable(filePath: string, table: EmbeddingTable): Promise<void> {
  const tmp = path.join(
    path.dirname(filePath),
    `.${path.basename(filePath)}.${randomBytes(6).toString("hex")}.tmp`,
  );
  await fs.writeFile(tmp, encodeTable(table));
  await fs.rename(tmp, filePath);
}

export function decodeTable(blob: Buffer): EmbeddingTable {
  if (blob.length < 20) throw new FormatError("truncated header");
  if (!blob.subarray(0, 4).equals(MAGIC)) {
    throw new FormatError(`bad magic ${blob.subarray(0, 4).toString("hex")}`);
  }
  const version = blob.readUInt32LE(4);
  if (version !== VERSION) {
    throw new FormatError(`format version ${version}, expected ${VERSION}`);
  }
  const dim = blob.readUInt32LE(8);
  if (dim < 1) throw new FormatError(`dim must be >= 1, got ${dim}`);
  const count = Number(blob.readBigUInt64LE(12));
  let off = 20;
  const labels: string[] = [];
  for (let i = 0; i < count; i++) {
    if (off + 4 > blob.length) throw new FormatError("truncated label block");
    const len = blob.readUInt32LE(off);
    off += 4;
    if (off + len > blob.length) throw new FormatError("truncated label block");
    labels.push(blob.subarray(off, off + len).toString("utf-8"));
    off += len;
  }
  const want = count * dim * 4;
  if (blob.length - off !== want) {
    throw new FormatError(`expected ${want} bytes of vectors, found ${blob.length - off}`);
  }
  const vectors = new Float32Array(count * dim);
  for (let i = 0; i < vectors.length; i++) vectors[i] = blob.readFloatLE(off + i * 4);
  return { labels, dim, vectors };
}

export async function readTable(filePath: string): Promise<EmbeddingTable> {
  return decodeTable(await fs.readFile(filePath));
}

/** Plain-text sidecar recording how a table was produced. */
export async function writeProvenance(
  embtPath: string,
  entries: Record<string, string | number>,
): Promise<void> {
  const lines = Object.entries(entries).map(([k, v]) => `${k}=${v}`);
  await fs.writeFile(`${embtPath}.provenance`, lines.join("\n") + "\n");
}
