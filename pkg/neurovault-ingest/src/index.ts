export {
  DataError,
  FormatError,
  IngestError,
  IoError,
  NetworkError,
} from "./errors.js";
export { gridCoords, parseNifti, voxelToWorld, type Volume } from "./nifti.js";
export { buildPhdat, writePhdat, PHDAT_MAGIC, type StackGeometry } from "./phdat.js";
export {
  fetchCollection,
  listCollectionImages,
  normalizeContrast,
  sha256hex,
  NEUROVAULT_API,
  type ContrastManifest,
  type DownloadRecord,
  type FetchOptions,
  type MaskPolicy,
  type RemoteImage,
} from "./neurovault.js";
export { convertToPhdat, slugify, type ConvertResult } from "./convert.js";
