import * as nifti from "nifti-reader-js";

import { DataError, FormatError } from "./errors.js";

/** A single 3-D statistical map with physical geometry.
 *
 * `data` holds one value per voxel in x-fastest order (the NIfTI storage
 * order): flat index = i + nx * (j + ny * k).  Values already have
 * scl_slope/scl_inter applied.
 */
export interface Volume {
  nx: number;
  ny: number;
  nz: number;
  voxelSize: [number, number, number];
  /** 4x4 voxel-index -> world-mm matrix, last row (0,0,0,1). */
  affine: number[][];
  data: Float64Array;
}

// NIfTI datatype code -> bytes per voxel, for the types seen in practice
const VOXEL_BYTES: Record<number, number> = {
  2: 1, // uint8
  4: 2, // int16
  8: 4, // int32
  16: 4, // float32
  64: 8, // float64
  256: 1, // int8
  512: 2, // uint16
  768: 4, // uint32
};

function readVoxel(view: DataView, code: number, offset: number, le: boolean): number {
  switch (code) {
    case 2:
      return view.getUint8(offset);
    case 4:
      return view.getInt16(offset, le);
    case 8:
      return view.getInt32(offset, le);
    case 16:
      return view.getFloat32(offset, le);
    case 64:
      return view.getFloat64(offset, le);
    case 256:
      return view.getInt8(offset);
    case 512:
      return view.getUint16(offset, le);
    case 768:
      return view.getUint32(offset, le);
    default:
      throw new DataError(`unsupported NIfTI datatype code ${code}`);
  }
}

function toArrayBuffer(bytes: Buffer | ArrayBuffer): ArrayBuffer {
  if (bytes instanceof ArrayBuffer) {
    return bytes;
  }
  // copy: Buffer views may share a pooled (or Shared) ArrayBuffer
  const out = new ArrayBuffer(bytes.byteLength);
  new Uint8Array(out).set(bytes);
  return out;
}

function checkAffine(affine: number[][] | undefined): number[][] {
  if (!affine || affine.length !== 4 || affine.some((row) => row.length !== 4)) {
    throw new DataError("header carries no usable 4x4 affine");
  }
  for (const row of affine) {
    for (const v of row) {
      if (!Number.isFinite(v)) {
        throw new DataError("affine contains non-finite entries");
      }
    }
  }
  const last = affine[3];
  if (last[0] !== 0 || last[1] !== 0 || last[2] !== 0 || last[3] !== 1) {
    throw new DataError(`affine last row must be (0,0,0,1), got (${last.join(",")})`);
  }
  return affine.map((row) => row.slice());
}

/** Parse a (possibly gzipped) NIfTI-1/2 file into a Volume.
 *
 * Only 3-D images are accepted; a trailing singleton time axis is fine,
 * a real 4-D series is not.
 */
export function parseNifti(bytes: Buffer | ArrayBuffer): Volume {
  let data = toArrayBuffer(bytes);
  if (nifti.isCompressed(data)) {
    data = nifti.decompress(data) as ArrayBuffer;
  }
  if (!nifti.isNIFTI(data)) {
    throw new FormatError("not a NIfTI file (bad magic)");
  }
  const header = nifti.readHeader(data);
  if (!header) {
    throw new FormatError("unreadable NIfTI header");
  }

  const ndim = header.dims[0];
  if (ndim < 3) {
    throw new DataError(`need a 3-D image, got ${ndim}-D`);
  }
  for (let d = 4; d <= ndim; d++) {
    if (header.dims[d] !== 1) {
      throw new DataError(
        `4-D series are not supported (dim[${d}] = ${header.dims[d]})`,
      );
    }
  }
  const [nx, ny, nz] = [header.dims[1], header.dims[2], header.dims[3]];
  if (nx < 1 || ny < 1 || nz < 1) {
    throw new DataError(`bad spatial dims (${nx}, ${ny}, ${nz})`);
  }

  const code = header.datatypeCode;
  const voxelBytes = VOXEL_BYTES[code];
  if (voxelBytes === undefined) {
    throw new DataError(`unsupported NIfTI datatype code ${code}`);
  }

  const nvox = nx * ny * nz;
  const image = nifti.readImage(header, data);
  if (image.byteLength < nvox * voxelBytes) {
    throw new FormatError(
      `image block holds ${image.byteLength} bytes, need ${nvox * voxelBytes}`,
    );
  }

  // slope 0 means "no scaling" by convention
  const slope = header.scl_slope === 0 ? 1 : header.scl_slope;
  const inter = header.scl_slope === 0 ? 0 : header.scl_inter;
  const view = new DataView(image);
  const le = header.littleEndian;
  const values = new Float64Array(nvox);
  for (let i = 0; i < nvox; i++) {
    values[i] = slope * readVoxel(view, code, i * voxelBytes, le) + inter;
  }

  const affine = checkAffine(header.affine);
  let voxelSize: [number, number, number] = [
    header.pixDims[1],
    header.pixDims[2],
    header.pixDims[3],
  ];
  if (voxelSize.some((s) => !(s > 0))) {
    // some tools leave pixdim zeroed; fall back to affine column norms
    voxelSize = [0, 1, 2].map((axis) =>
      Math.hypot(affine[0][axis], affine[1][axis], affine[2][axis]),
    ) as [number, number, number];
  }
  if (voxelSize.some((s) => !(s > 0))) {
    throw new DataError(`cannot determine voxel size, pixdims ${voxelSize.join(",")}`);
  }

  return { nx, ny, nz, voxelSize, affine, data: values };
}

/** Apply the affine to an integer voxel index, giving world mm coordinates. */
export function voxelToWorld(
  affine: number[][],
  i: number,
  j: number,
  k: number,
): [number, number, number] {
  const out: number[] = [];
  for (let r = 0; r < 3; r++) {
    out.push(affine[r][0] * i + affine[r][1] * j + affine[r][2] * k + affine[r][3]);
  }
  return out as [number, number, number];
}

/** Decompose a flat x-fastest voxel index into (i, j, k). */
export function gridCoords(flat: number, nx: number, ny: number): [number, number, number] {
  const i = flat % nx;
  const rest = (flat - i) / nx;
  const j = rest % ny;
  const k = (rest - j) / ny;
  return [i, j, k];
}
