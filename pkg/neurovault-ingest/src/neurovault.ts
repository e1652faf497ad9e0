import { createHash } from "node:crypto";
import { existsSync, mkdirSync, readFileSync, writeFileSync } from "node:fs";
import { join } from "node:path";

import { NetworkError } from "./errors.js";

export const NEUROVAULT_API = "https://neurovault.org/api";

/** One image row from the collection listing. */
export interface RemoteImage {
  id: number;
  name: string;
  file: string;
}

/** A downloaded image with its integrity record. */
export interface DownloadRecord {
  id: number;
  name: string;
  url: string;
  path: string;
  sha256: string;
}

export type MaskPolicy = "intersection" | "reference";

/** The subject maps of one contrast, ready for conversion. */
export interface ContrastManifest {
  collectionId: number;
  contrast: string;
  images: DownloadRecord[];
  nSubjects: number;
  maskPolicy: MaskPolicy;
}

export interface FetchOptions {
  collectionId: number;
  destDir: string;
  contrastFilter?: string;
  maskPolicy?: MaskPolicy;
  apiBase?: string;
  concurrency?: number;
  fetchFn?: typeof fetch;
  log?: (line: string) => void;
}

/** Canonical contrast label of an image name: subject prefix stripped,
 * separators collapsed, case folded.  "S07_look_negative_cue" and
 * "sub-12 Look Negative Cue" map to the same contrast.
 */
export function normalizeContrast(name: string): string {
  let s = name.trim().replace(/\.nii(\.gz)?$/i, "");
  s = s.replace(/^sub[-_]?\d+[-_\s]+/i, "");
  s = s.replace(/^S\d+[-_\s]+/, "");
  return s.replace(/[_\s]+/g, " ").trim().toLowerCase();
}

export function sha256hex(bytes: Uint8Array): string {
  return createHash("sha256").update(bytes).digest("hex");
}

async function getOk(url: string, fetchFn: typeof fetch): Promise<Response> {
  let res: Response;
  try {
    res = await fetchFn(url);
  } catch (err) {
    throw new NetworkError(`GET ${url} failed: ${err}`, { retriable: true, cause: err });
  }
  if (!res.ok) {
    throw new NetworkError(`GET ${url} -> HTTP ${res.status}`, { status: res.status });
  }
  return res;
}

/** All images of a collection, following API pagination. */
export async function listCollectionImages(
  collectionId: number,
  apiBase: string = NEUROVAULT_API,
  fetchFn: typeof fetch = fetch,
): Promise<RemoteImage[]> {
  let url: string | null = `${apiBase}/collections/${collectionId}/images/?format=json`;
  const out: RemoteImage[] = [];
  while (url) {
    const res = await getOk(url, fetchFn);
    const page = (await res.json()) as {
      results?: Array<{ id: number; name: string; file: string }>;
      next?: string | null;
    };
    for (const row of page.results ?? []) {
      out.push({ id: row.id, name: String(row.name), file: String(row.file) });
    }
    url = page.next ?? null;
  }
  return out;
}

function checksumPath(destDir: string): string {
  return join(destDir, "checksums.json");
}

function loadChecksums(destDir: string): Record<string, string> {
  const path = checksumPath(destDir);
  if (!existsSync(path)) {
    return {};
  }
  return JSON.parse(readFileSync(path, "utf-8")) as Record<string, string>;
}

function saveChecksums(destDir: string, sums: Record<string, string>): void {
  const sorted = Object.fromEntries(Object.entries(sums).sort(([a], [b]) => (a < b ? -1 : 1)));
  writeFileSync(checksumPath(destDir), JSON.stringify(sorted, null, 2) + "\n");
}

function localName(image: RemoteImage): string {
  const base = new URL(image.file).pathname.split("/").pop() || `image_${image.id}.nii.gz`;
  return `${image.id}_${base.replace(/[^A-Za-z0-9._-]/g, "_")}`;
}

async function downloadImage(
  image: RemoteImage,
  imagesDir: string,
  sums: Record<string, string>,
  fetchFn: typeof fetch,
  log: (line: string) => void,
): Promise<DownloadRecord> {
  const name = localName(image);
  const path = join(imagesDir, name);
  const recorded = sums[name];
  if (recorded && existsSync(path)) {
    const have = sha256hex(readFileSync(path));
    if (have === recorded) {
      log(`cached  ${name}`);
      return { id: image.id, name: image.name, url: image.file, path, sha256: have };
    }
    log(`corrupt ${name} (checksum mismatch), re-downloading`);
  }
  const res = await getOk(image.file, fetchFn);
  const bytes = Buffer.from(await res.arrayBuffer());
  writeFileSync(path, bytes);
  const digest = sha256hex(bytes);
  sums[name] = digest;
  log(`fetched ${name} (${bytes.length} bytes)`);
  return { id: image.id, name: image.name, url: image.file, path, sha256: digest };
}

async function mapPool<T, R>(
  items: T[],
  limit: number,
  fn: (item: T) => Promise<R>,
): Promise<R[]> {
  const results: R[] = new Array(items.length);
  let next = 0;
  async function worker(): Promise<void> {
    while (next < items.length) {
      const idx = next++;
      results[idx] = await fn(items[idx]);
    }
  }
  const workers = Array.from({ length: Math.max(1, Math.min(limit, items.length)) }, worker);
  await Promise.all(workers);
  return results;
}

/** List a collection, group images by contrast, download (or reuse) the
 * matching files, and return one manifest per contrast.
 *
 * Idempotent: a file whose recorded sha256 still matches is not fetched
 * again.  Groups with fewer than two subject maps are dropped since the
 * downstream one-sample analysis needs variability.  An unmatched filter
 * yields an empty list, not an error.
 */
export async function fetchCollection(opts: FetchOptions): Promise<ContrastManifest[]> {
  const apiBase = opts.apiBase ?? NEUROVAULT_API;
  const fetchFn = opts.fetchFn ?? fetch;
  const log = opts.log ?? (() => {});
  const maskPolicy = opts.maskPolicy ?? "intersection";

  const all = await listCollectionImages(opts.collectionId, apiBase, fetchFn);
  const wanted = opts.contrastFilter ? normalizeContrast(opts.contrastFilter) : null;
  const groups = new Map<string, RemoteImage[]>();
  for (const image of all) {
    const contrast = normalizeContrast(image.name);
    if (wanted !== null && !contrast.includes(wanted)) {
      continue;
    }
    const group = groups.get(contrast);
    if (group) {
      group.push(image);
    } else {
      groups.set(contrast, [image]);
    }
  }

  const imagesDir = join(opts.destDir, "images");
  mkdirSync(imagesDir, { recursive: true });
  const sums = loadChecksums(opts.destDir);

  const manifests: ContrastManifest[] = [];
  for (const contrast of [...groups.keys()].sort()) {
    const members = groups.get(contrast)!;
    if (members.length < 2) {
      log(`skipping "${contrast}": only ${members.length} image`);
      continue;
    }
    members.sort((a, b) => a.id - b.id);
    const records = await mapPool(members, opts.concurrency ?? 4, (image) =>
      downloadImage(image, imagesDir, sums, fetchFn, log),
    );
    manifests.push({
      collectionId: opts.collectionId,
      contrast,
      images: records,
      nSubjects: records.length,
      maskPolicy,
    });
  }
  saveChecksums(opts.destDir, sums);
  return manifests;
}
