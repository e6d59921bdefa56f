/**
 * The two extraction jobs: label text -> EMBT and image files -> EMBT.
 * Output rows preserve input order; every file gets a provenance sidecar.
 */

import { promises as fs } from "node:fs";
import path from "node:path";

import { Embedder } from "./embedder.js";
import {
  EmbeddingTable,
  FormatError,
  buildTable,
  canonicalLabel,
  writeProvenance,
  writeTable,
} from "./embt.js";
import { renderPrompt } from "./prompt.js";

export class InputError extends Error {}

export interface TextJob {
  labelsPath: string;
  template: string;
  embedder: Embedder;
  output: string;
  batchSize?: number;
}

export interface ImageJob {
  /** directory (files taken in sorted name order) or manifest file
   * (one path per line, relative paths resolved against the manifest) */
  input: string;
  embedder: Embedder;
  output: string;
  batchSize?: number;
}

export async function readLabelLines(labelsPath: string): Promise<string[]> {
  let text: string;
  try {
    text = await fs.readFile(labelsPath, "utf-8");
  } catch (err) {
    throw new InputError(`cannot read labels file ${labelsPath}: ${err}`);
  }
  const labels = text
    .split("\n")
    .map((line) => line.replace(/\r$/, ""))
    .filter((line) => line.trim().length > 0);
  if (labels.length === 0) throw new InputError(`${labelsPath}: no labels`);
  const seen = new Map<string, string>();
  for (const label of labels) {
    const canon = canonicalLabel(label);
    const clash = seen.get(canon);
    if (clash !== undefined) {
      throw new InputError(
        `${labelsPath}: labels ${JSON.stringify(label)} and ${JSON.stringify(clash)} collide after canonicalization`,
      );
    }
    seen.set(canon, label);
  }
  return labels;
}

function* batches<T>(items: T[], size: number): Generator<T[]> {
  for (let i = 0; i < items.length; i += size) yield items.slice(i, i + size);
}

export async function extractText(job: TextJob): Promise<EmbeddingTable> {
  const labels = await readLabelLines(job.labelsPath);
  const batchSize = job.batchSize ?? 64;
  const rows: Float64Array[] = [];
  for (const group of batches(labels, batchSize)) {
    const prompts = group.map((label) => renderPrompt(job.template, label));
    rows.push(...job.embedder.embedText(prompts));
  }
  const table = buildTable(labels, rows, job.embedder.dim);
  await writeTable(job.output, table);
  await writeProvenance(job.output, {
    mode: "text_labels",
    model: job.embedder.id,
    template: job.template,
    source: job.labelsPath,
    count: labels.length,
    dim: job.embedder.dim,
    batch_size: batchSize,
  });
  return table;
}

async function listImageEntries(input: string): Promise<{ base: string; entries: string[] }> {
  let stat;
  try {
    stat = await fs.stat(input);
  } catch {
    throw new InputError(`input not found: ${input}`);
  }
  if (stat.isDirectory()) {
    const names = (await fs.readdir(input, { withFileTypes: true }))
      .filter((d) => d.isFile())
      .map((d) => d.name)
      .sort();
    return { base: input, entries: names };
  }
  const manifest = await fs.readFile(input, "utf-8");
  const entries = manifest
    .split("\n")
    .map((line) => line.replace(/\r$/, "").trim())
    .filter((line) => line.length > 0);
  return { base: path.dirname(input), entries };
}

export interface ImageResult {
  table: EmbeddingTable;
  skipped: string[];
}

export async function extractImages(job: ImageJob): Promise<ImageResult> {
  const { base, entries } = await listImageEntries(job.input);
  const labels: string[] = [];
  const payloads: Buffer[] = [];
  const skipped: string[] = [];
  const seen = new Map<string, number>();
  for (const entry of entries) {
    const full = path.isAbsolute(entry) ? entry : path.join(base, entry);
    let bytes: Buffer;
    try {
      bytes = await fs.readFile(full);
    } catch (err) {
      console.warn(`skipping unreadable image ${full}: ${err}`);
      skipped.push(entry);
      continue;
    }
    // manifest entries name the rows; disambiguate canonical collisions so
    // the engine's uniqueness rule cannot reject the table
    let label = entry;
    const canon = canonicalLabel(label);
    const n = seen.get(canon) ?? 0;
    seen.set(canon, n + 1);
    if (n > 0) label = `${entry} #${n + 1}`;
    labels.push(label);
    payloads.push(bytes);
  }
  if (labels.length === 0) {
    throw new InputError(`${job.input}: no readable images`);
  }
  const batchSize = job.batchSize ?? 32;
  const rows: Float64Array[] = [];
  for (const group of batches(payloads, batchSize)) {
    rows.push(...job.embedder.embedBytes(group));
  }
  const table = buildTable(labels, rows, job.embedder.dim);
  await writeTable(job.output, table);
  await writeProvenance(job.output, {
    mode: "images",
    model: job.embedder.id,
    source: job.input,
    count: labels.length,
    skipped: skipped.length,
    dim: job.embedder.dim,
    batch_size: batchSize,
  });
  if (skipped.length) {
    await fs.writeFile(`${job.output}.skipped.log`, skipped.join("\n") + "\n");
  }
  return { table, skipped };
}

export { FormatError };
