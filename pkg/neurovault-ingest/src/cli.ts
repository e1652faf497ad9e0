#!/usr/bin/env node
import { mkdirSync } from "node:fs";
import { parseArgs } from "node:util";

import { convertToPhdat } from "./convert.js";
import { IngestError, NetworkError } from "./errors.js";
import { fetchCollection, NEUROVAULT_API, type MaskPolicy } from "./neurovault.js";

const USAGE = `usage: ingest --collection <id> --out <dir> [options]

Fetch a Neurovault collection, group subject maps per contrast, and emit
one <contrast>.phdat + <contrast>.meta.json pair per contrast.

options:
  --collection <id>     Neurovault collection id (e.g. 1952)
  --contrast <name>     only contrasts matching this name (case/sep-insensitive)
  --out <dir>           output directory (downloads land in <dir>/images)
  --mask-policy <p>     intersection (default) or reference
  --api-base <url>      API root, default ${NEUROVAULT_API}
  --concurrency <n>     parallel downloads, default 4
  --quiet               suppress progress lines
  --help                this text
`;

function fail(message: string, code: number): never {
  process.stderr.write(message.endsWith("\n") ? message : message + "\n");
  process.exit(code);
}

export async function main(argv: string[]): Promise<number> {
  let args;
  try {
    args = parseArgs({
      args: argv,
      options: {
        collection: { type: "string" },
        contrast: { type: "string" },
        out: { type: "string" },
        "mask-policy": { type: "string", default: "intersection" },
        "api-base": { type: "string", default: NEUROVAULT_API },
        concurrency: { type: "string", default: "4" },
        quiet: { type: "boolean", default: false },
        help: { type: "boolean", default: false },
      },
      allowPositionals: false,
    });
  } catch (err) {
    fail(`${err instanceof Error ? err.message : err}\n${USAGE}`, 2);
  }
  const v = args.values;
  if (v.help) {
    process.stdout.write(USAGE);
    return 0;
  }
  if (!v.collection || !v.out) {
    fail(`--collection and --out are required\n${USAGE}`, 2);
  }
  const collectionId = Number(v.collection);
  if (!Number.isInteger(collectionId) || collectionId <= 0) {
    fail(`--collection must be a positive integer, got "${v.collection}"`, 2);
  }
  const concurrency = Number(v.concurrency);
  if (!Number.isInteger(concurrency) || concurrency < 1) {
    fail(`--concurrency must be a positive integer, got "${v.concurrency}"`, 2);
  }
  const maskPolicy = v["mask-policy"] as string;
  if (maskPolicy !== "intersection" && maskPolicy !== "reference") {
    fail(`--mask-policy must be intersection or reference, got "${maskPolicy}"`, 2);
  }

  mkdirSync(v.out, { recursive: true });
  const log = v.quiet ? () => {} : (line: string) => process.stderr.write(line + "\n");
  try {
    const manifests = await fetchCollection({
      collectionId,
      destDir: v.out,
      contrastFilter: v.contrast,
      maskPolicy: maskPolicy as MaskPolicy,
      apiBase: v["api-base"],
      concurrency,
      log,
    });
    if (manifests.length === 0) {
      log(
        v.contrast
          ? `no contrast matching "${v.contrast}" in collection ${collectionId}`
          : `collection ${collectionId} holds no usable contrasts`,
      );
      return 0;
    }
    for (const manifest of manifests) {
      const result = convertToPhdat(manifest, v.out);
      log(
        `${manifest.contrast}: ${result.nSubjects} subjects, m=${result.m}`,
      );
      process.stdout.write(result.phdatPath + "\n");
    }
    return 0;
  } catch (err) {
    if (err instanceof NetworkError) {
      fail(`network error${err.status ? ` (HTTP ${err.status})` : ""}: ${err.message}`, 3);
    }
    if (err instanceof IngestError) {
      fail(`${err.name}: ${err.message}`, 3);
    }
    throw err;
  }
}

const invokedDirectly =
  process.argv[1] !== undefined &&
  import.meta.url === new URL(`file://${process.argv[1]}`).href;
if (invokedDirectly) {
  main(process.argv.slice(2)).then(
    (code) => process.exit(code),
    (err) => {
      process.stderr.write(`unexpected failure: ${err?.stack ?? err}\n`);
      process.exit(1);
    },
  );
}
