/**
 * Candidate-lexicon export from a WordNet-style database: every noun lemma
 * from index.noun, collocation underscores mapped to spaces, canonicalized,
 * deduplicated, and sorted by UTF-8 byte order, one per line.
 */

import { promises as fs } from "node:fs";
import path from "node:path";

import { canonicalLabel } from "./embt.js";

export class DatabaseError extends Error {}

export async function locateNounIndex(source: string): Promise<string> {
  let stat;
  try {
    stat = await fs.stat(source);
  } catch {
    throw new DatabaseError(`lexical database unavailable: ${source}`);
  }
  if (stat.isFile()) return source;
  for (const candidate of ["index.noun", path.join("dict", "index.noun")]) {
    const full = path.join(source, candidate);
    try {
      await fs.access(full);
      return full;
    } catch {
      /* keep looking */
    }
  }
  throw new DatabaseError(`no index.noun under ${source}`);
}

export function parseNounIndex(text: string): string[] {
  const nouns = new Set<string>();
  for (const line of text.split("\n")) {
    // WNDB index files carry a license header indented by two spaces;
    // data lines start with the lemma
    if (!line || line.startsWith(" ")) continue;
    const lemma = line.split(" ", 1)[0];
    if (!lemma) continue;
    const noun = canonicalLabel(lemma.replace(/_/g, " "));
    if (noun) nouns.add(noun);
  }
  const encoder = new TextEncoder();
  return [...nouns].sort((a, b) =>
    Buffer.compare(encoder.encode(a) as Buffer, encoder.encode(b) as Buffer),
  );
}

export async function dumpLexicon(source: string, output: string): Promise<number> {
  const indexPath = await locateNounIndex(source);
  const nouns = parseNounIndex(await fs.readFile(indexPath, "utf-8"));
  await fs.writeFile(output, nouns.join("\n") + "\n");
  return nouns.length;
}
