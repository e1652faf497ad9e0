import { readFileSync, writeFileSync } from "node:fs";
import { join } from "node:path";

import { DataError, IoError } from "./errors.js";
import { gridCoords, parseNifti, voxelToWorld, type Volume } from "./nifti.js";
import { writePhdat } from "./phdat.js";
import type { ContrastManifest, MaskPolicy } from "./neurovault.js";

const AFFINE_TOL = 1e-6;

export interface ConvertResult {
  phdatPath: string;
  metaPath: string;
  m: number;
  nSubjects: number;
  /** World mm coordinates of the masked voxel with the largest subject mean:
   * the ingest-side reference the consumer's peak coordinates are checked
   * against. */
  peakWorld: [number, number, number];
  peakMaskedIndex: number;
}

export function slugify(contrast: string): string {
  const s = contrast.toLowerCase().replace(/[^a-z0-9]+/g, "_").replace(/^_+|_+$/g, "");
  return s || "contrast";
}

function sameGrid(a: Volume, b: Volume): boolean {
  if (a.nx !== b.nx || a.ny !== b.ny || a.nz !== b.nz) {
    return false;
  }
  for (let r = 0; r < 4; r++) {
    for (let c = 0; c < 4; c++) {
      if (Math.abs(a.affine[r][c] - b.affine[r][c]) > AFFINE_TOL) {
        return false;
      }
    }
  }
  return true;
}

function buildMask(volumes: Volume[], policy: MaskPolicy): Uint8Array {
  const nvox = volumes[0].data.length;
  const mask = new Uint8Array(nvox);
  const judged = policy === "reference" ? [volumes[0]] : volumes;
  outer: for (let v = 0; v < nvox; v++) {
    for (const vol of judged) {
      const x = vol.data[v];
      if (!Number.isFinite(x) || x === 0) {
        continue outer;
      }
    }
    mask[v] = 1;
  }
  return mask;
}

/** Convert one contrast's downloaded maps into a PHDAT stack plus metadata.
 *
 * All maps must share the grid (dims equal, affines within 1e-6); the mask
 * keeps voxels finite and nonzero in every map (intersection, default) or
 * in the first map only (reference).  The affine is copied from the first
 * map.  Emits `<contrast>.phdat` and `<contrast>.meta.json` in outDir.
 */
export function convertToPhdat(
  manifest: ContrastManifest,
  outDir: string,
  maskPolicy?: MaskPolicy,
): ConvertResult {
  const policy = maskPolicy ?? manifest.maskPolicy;
  if (manifest.images.length < 2) {
    throw new DataError(`contrast "${manifest.contrast}" has fewer than 2 maps`);
  }
  const volumes = manifest.images.map((rec) => {
    let bytes: Buffer;
    try {
      bytes = readFileSync(rec.path);
    } catch (err) {
      throw new IoError(`cannot read ${rec.path}: ${err}`, { cause: err });
    }
    return parseNifti(bytes);
  });
  const ref = volumes[0];
  for (let i = 1; i < volumes.length; i++) {
    if (!sameGrid(ref, volumes[i])) {
      throw new DataError(
        `grid mismatch: ${manifest.images[i].path} does not match ${manifest.images[0].path}`,
      );
    }
  }

  const mask = buildMask(volumes, policy);
  let m = 0;
  for (const v of mask) {
    m += v;
  }
  if (m === 0) {
    throw new DataError("intersection mask keeps no voxels");
  }

  const nvox = ref.data.length;
  const rows: Float32Array[] = [];
  for (const vol of volumes) {
    const row = new Float32Array(m);
    let w = 0;
    for (let v = 0; v < nvox; v++) {
      if (mask[v]) {
        const x = vol.data[v];
        if (!Number.isFinite(x)) {
          throw new DataError(
            `non-finite value inside the ${policy} mask; use intersection masking`,
          );
        }
        row[w++] = x;
      }
    }
    rows.push(row);
  }

  // ingest-side reference peak: largest mean across subjects, first on ties
  let peakMaskedIndex = 0;
  let peakFlat = -1;
  let best = -Infinity;
  let w = 0;
  for (let v = 0; v < nvox; v++) {
    if (!mask[v]) {
      continue;
    }
    let sum = 0;
    for (const row of rows) {
      sum += row[w];
    }
    if (sum > best) {
      best = sum;
      peakMaskedIndex = w;
      peakFlat = v;
    }
    w++;
  }
  const [pi, pj, pk] = gridCoords(peakFlat, ref.nx, ref.ny);
  const peakWorld = voxelToWorld(ref.affine, pi, pj, pk);

  const slug = slugify(manifest.contrast);
  const phdatPath = join(outDir, `${slug}.phdat`);
  const metaPath = join(outDir, `${slug}.meta.json`);
  writePhdat(
    phdatPath,
    { nx: ref.nx, ny: ref.ny, nz: ref.nz, voxelSize: ref.voxelSize, affine: ref.affine },
    mask,
    rows,
  );

  const meta = {
    collection: manifest.collectionId,
    contrast: manifest.contrast,
    mask_policy: policy,
    n_subjects: manifest.nSubjects,
    m,
    grid: {
      nx: ref.nx,
      ny: ref.ny,
      nz: ref.nz,
      voxel_size: ref.voxelSize,
    },
    affine: ref.affine,
    images: manifest.images.map((rec) => ({
      id: rec.id,
      name: rec.name,
      url: rec.url,
      sha256: rec.sha256,
    })),
    peak: {
      masked_index: peakMaskedIndex,
      voxel: [pi, pj, pk],
      world: peakWorld,
    },
  };
  try {
    writeFileSync(metaPath, JSON.stringify(meta, null, 2) + "\n");
  } catch (err) {
    throw new IoError(`cannot write ${metaPath}: ${err}`, { cause: err });
  }

  return {
    phdatPath,
    metaPath,
    m,
    nSubjects: manifest.nSubjects,
    peakWorld,
    peakMaskedIndex,
  };
}
