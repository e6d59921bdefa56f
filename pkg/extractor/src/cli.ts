#!/usr/bin/env node
/**
 * clipscope-extract <command>
 *
 *   extract-text   --labels FILE --output FILE.embt [--model ID] [--template T] [--batch-size N]
 *   extract-images --input DIR|MANIFEST --output FILE.embt [--model ID] [--batch-size N]
 *   dump-lexicon   --source WORDNET_DIR|index.noun --output FILE.txt
 *
 * Exit codes: 0 ok, 2 configuration/input error, 3 format error. Errors
 * print one machine-readable JSON line on stderr.
 */

import { parseArgs } from "node:util";

import { ModelLoadError, loadEmbedder } from "./embedder.js";
import { FormatError } from "./embt.js";
import { InputError, extractImages, extractText } from "./extract.js";
import { DatabaseError, dumpLexicon } from "./lexicon.js";
import { DEFAULT_TEMPLATE, TemplateError, validateTemplate } from "./prompt.js";

class UsageError extends Error {}

function need(values: Record<string, unknown>, key: string): string {
  const v = values[key];
  if (typeof v !== "string" || v.length === 0) {
    throw new UsageError(`missing required option --${key}`);
  }
  return v;
}

function batchSize(values: Record<string, unknown>): number | undefined {
  const raw = values["batch-size"];
  if (raw === undefined) return undefined;
  const n = Number(raw);
  if (!Number.isInteger(n) || n < 1) {
    throw new UsageError(`--batch-size must be a positive integer, got ${raw}`);
  }
  return n;
}

export async function run(argv: string[]): Promise<number> {
  try {
    const [command, ...rest] = argv;
    if (command === "extract-text") {
      const { values } = parseArgs({
        args: rest,
        options: {
          labels: { type: "string" },
          output: { type: "string" },
          model: { type: "string", default: "hash-v1/512" },
          template: { type: "string", default: DEFAULT_TEMPLATE },
          "batch-size": { type: "string" },
        },
      });
      validateTemplate(values.template as string);
      const table = await extractText({
        labelsPath: need(values, "labels"),
        output: need(values, "output"),
        template: values.template as string,
        embedder: loadEmbedder(values.model as string),
        batchSize: batchSize(values),
      });
      console.log(`wrote ${table.labels.length} x ${table.dim} -> ${values.output}`);
      return 0;
    }
    if (command === "extract-images") {
      const { values } = parseArgs({
        args: rest,
        options: {
          input: { type: "string" },
          output: { type: "string" },
          model: { type: "string", default: "hash-v1/512" },
          "batch-size": { type: "string" },
        },
      });
      const { table, skipped } = await extractImages({
        input: need(values, "input"),
        output: need(values, "output"),
        embedder: loadEmbedder(values.model as string),
        batchSize: batchSize(values),
      });
      const note = skipped.length ? ` (${skipped.length} skipped)` : "";
      console.log(`wrote ${table.labels.length} x ${table.dim} -> ${values.output}${note}`);
      return 0;
    }
    if (command === "dump-lexicon") {
      const { values } = parseArgs({
        args: rest,
        options: {
          source: { type: "string" },
          output: { type: "string" },
        },
      });
      const count = await dumpLexicon(need(values, "source"), need(values, "output"));
      console.log(`wrote ${count} nouns -> ${values.output}`);
      return 0;
    }
    throw new UsageError(
      `unknown command ${JSON.stringify(command ?? "")}; ` +
        "expected extract-text | extract-images | dump-lexicon",
    );
  } catch (err) {
    const code = err instanceof FormatError ? 3 : 2;
    const known =
      err instanceof UsageError ||
      err instanceof InputError ||
      err instanceof ModelLoadError ||
      err instanceof TemplateError ||
      err instanceof DatabaseError ||
      err instanceof FormatError ||
      (err instanceof Error && err.name === "TypeError" && /option/i.test(err.message));
    if (!known) throw err;
    console.error(
      JSON.stringify({
        error: (err as Error).constructor.name,
        exit_code: code,
        message: (err as Error).message,
      }),
    );
    return code;
  }
}

const invokedDirectly =
  process.argv[1] !== undefined &&
  import.meta.url === new URL(`file://${process.argv[1]}`).href;
if (invokedDirectly) {
  run(process.argv.slice(2)).then(
    (code) => process.exit(code),
    (err) => {
      console.error(err);
      process.exit(1);
    },
  );
}
