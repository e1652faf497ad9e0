"""Binary file formats: subject stacks (PHD1) and null p-value caches (PNUL1).

Both formats are little-endian with a fixed header followed by raw arrays.
Readers validate the magic, refuse truncated payloads, and refuse trailing
bytes so a corrupted or concatenated file never half-loads.

Stack layout (magic ``PHD1``)::

    4s    magic "PHD1"
    u32   nx, ny, nz, n_subjects
    3*f32 voxel_size
    16*f64 affine, row-major
    nx*ny*nz * u8    mask (0 or 1, x-fastest order)
    n_subjects * m * f32  data, one subject after another

Null-cache layout (magic ``PNUL1``)::

    5s    magic "PNUL1"
    u32   B, m
    u64   seed
    B * m * f64  p-values, row-major; each row ascending
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .data import Grid3, Mask, SubjectStack
from .errors import FormatError, IoError

MAGIC_STACK = b"PHD1"
MAGIC_NULL = b"PNUL1"

_STACK_HEADER = struct.Struct("<4s4I3f16d")


def write_phdat(path: str | Path, stack: SubjectStack) -> None:
    grid = stack.mask.grid
    header = _STACK_HEADER.pack(
        MAGIC_STACK,
        grid.nx,
        grid.ny,
        grid.nz,
        stack.n_subjects,
        *(np.float32(s) for s in grid.voxel_size),
        *grid.affine.reshape(-1),
    )
    mask_bytes = stack.mask.inside.astype(np.uint8).tobytes()
    data = np.ascontiguousarray(stack.data, dtype="<f4")
    try:
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(mask_bytes)
            fh.write(data.tobytes())
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def read_phdat(path: str | Path) -> SubjectStack:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    if len(raw) < _STACK_HEADER.size:
        raise FormatError(f"{path}: file shorter than header ({len(raw)} bytes)")
    fields = _STACK_HEADER.unpack_from(raw, 0)
    magic, nx, ny, nz, n_subjects = fields[:5]
    if magic != MAGIC_STACK:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {MAGIC_STACK!r}")
    voxel_size = fields[5:8]
    affine = np.array(fields[8:24], dtype=np.float64).reshape(4, 4)
    n_vox = nx * ny * nz
    off = _STACK_HEADER.size
    if len(raw) < off + n_vox:
        raise FormatError(f"{path}: truncated mask block")
    mask_u8 = np.frombuffer(raw, dtype=np.uint8, count=n_vox, offset=off)
    bad = (mask_u8 > 1).sum()
    if bad:
        raise FormatError(f"{path}: mask block has {bad} bytes outside {{0,1}}")
    off += n_vox
    m = int(mask_u8.sum())
    expected = off + n_subjects * m * 4
    if len(raw) < expected:
        raise FormatError(
            f"{path}: truncated data block, need {expected} bytes, have {len(raw)}"
        )
    if len(raw) > expected:
        raise FormatError(f"{path}: {len(raw) - expected} trailing bytes after data block")
    data = np.frombuffer(raw, dtype="<f4", count=n_subjects * m, offset=off)
    grid = Grid3(nx, ny, nz, tuple(float(s) for s in voxel_size), affine)
    mask = Mask(grid, mask_u8.astype(bool))
    return SubjectStack(mask, data.reshape(n_subjects, m))


_NULL_HEADER = struct.Struct("<5s2IQ")


def write_pnul(path: str | Path, rows: np.ndarray, seed: int) -> None:
    """Persist a (B, m) matrix of row-sorted null p-values with its seed."""
    rows = np.ascontiguousarray(rows, dtype="<f8")
    if rows.ndim != 2:
        raise FormatError(f"null cache must be 2-D, got shape {rows.shape}")
    header = _NULL_HEADER.pack(MAGIC_NULL, rows.shape[0], rows.shape[1], seed)
    try:
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(rows.tobytes())
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def read_pnul(path: str | Path) -> tuple[np.ndarray, int]:
    """Load a null cache; returns (rows, seed) with rows shaped (B, m)."""
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    if len(raw) < _NULL_HEADER.size:
        raise FormatError(f"{path}: file shorter than header ({len(raw)} bytes)")
    magic, b, m, seed = _NULL_HEADER.unpack_from(raw, 0)
    if magic != MAGIC_NULL:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {MAGIC_NULL!r}")
    off = _NULL_HEADER.size
    expected = off + b * m * 8
    if len(raw) < expected:
        raise FormatError(f"{path}: truncated, need {expected} bytes, have {len(raw)}")
    if len(raw) > expected:
        raise FormatError(f"{path}: {len(raw) - expected} trailing bytes")
    rows = np.frombuffer(raw, dtype="<f8", count=b * m, offset=off).reshape(b, m)
    return rows, int(seed)
