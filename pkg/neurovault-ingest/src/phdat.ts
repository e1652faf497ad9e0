import { writeFileSync } from "node:fs";

import { DataError, IoError } from "./errors.js";

/** Geometry block of a PHDAT file (everything except mask and data). */
export interface StackGeometry {
  nx: number;
  ny: number;
  nz: number;
  voxelSize: [number, number, number];
  affine: number[][];
}

export const PHDAT_MAGIC = "PHD1";
const HEADER_BYTES = 4 + 4 * 4 + 3 * 4 + 16 * 8; // magic, u32 x4, f32 x3, f64 x16

/** Assemble the PHDAT v1 byte layout (little-endian throughout):
 *
 *   "PHD1"; u32 nx, ny, nz, n_subjects; f32 voxel_size[3];
 *   f64 affine[16] row-major; u8 mask[nx*ny*nz] (x-fastest);
 *   f32 data[n_subjects][m], m = number of 1s in the mask.
 */
export function buildPhdat(
  geom: StackGeometry,
  mask: Uint8Array,
  rows: Float32Array[],
): Buffer {
  const nvox = geom.nx * geom.ny * geom.nz;
  if (mask.length !== nvox) {
    throw new DataError(`mask has ${mask.length} entries, grid has ${nvox} voxels`);
  }
  let m = 0;
  for (const v of mask) {
    if (v !== 0 && v !== 1) {
      throw new DataError(`mask bytes must be 0 or 1, got ${v}`);
    }
    m += v;
  }
  if (m === 0) {
    throw new DataError("mask keeps no voxels");
  }
  if (rows.length < 1) {
    throw new DataError("need at least one subject row");
  }
  for (const row of rows) {
    if (row.length !== m) {
      throw new DataError(`subject row has ${row.length} values, mask keeps ${m}`);
    }
    for (const v of row) {
      if (!Number.isFinite(v)) {
        throw new DataError("subject data contains non-finite values");
      }
    }
  }

  const header = Buffer.alloc(HEADER_BYTES);
  let off = header.write(PHDAT_MAGIC, 0, "ascii");
  off = header.writeUInt32LE(geom.nx, off);
  off = header.writeUInt32LE(geom.ny, off);
  off = header.writeUInt32LE(geom.nz, off);
  off = header.writeUInt32LE(rows.length, off);
  for (const s of geom.voxelSize) {
    off = header.writeFloatLE(s, off);
  }
  for (const row of geom.affine) {
    for (const v of row) {
      off = header.writeDoubleLE(v, off);
    }
  }

  const data = Buffer.alloc(rows.length * m * 4);
  let pos = 0;
  for (const row of rows) {
    for (const v of row) {
      pos = data.writeFloatLE(v, pos);
    }
  }
  return Buffer.concat([header, Buffer.from(mask), data]);
}

export function writePhdat(
  path: string,
  geom: StackGeometry,
  mask: Uint8Array,
  rows: Float32Array[],
): void {
  const bytes = buildPhdat(geom, mask, rows);
  try {
    writeFileSync(path, bytes);
  } catch (err) {
    throw new IoError(`cannot write ${path}: ${err}`, { cause: err });
  }
}
