"""Core domain types: voxel grids, masks, and masked per-voxel vectors.

Masked length-m vectors are the canonical representation everywhere; full 3-D
arrays appear only at I/O and cluster-labeling boundaries.  The flattening
order is x-fastest: ``flat = ix + nx * (iy + ny * iz)``, i.e. Fortran order
for arrays indexed ``[ix, iy, iz]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, MaskError, ParamError


@dataclass(frozen=True)
class Grid3:
    """A 3-D voxel grid with physical geometry.

    Parameters
    ----------
    nx, ny, nz : int
        Voxel counts per axis, each >= 1.
    voxel_size : tuple of 3 floats
        Edge lengths in mm, each > 0.
    affine : (4, 4) array
        Maps homogeneous voxel indices to world (scanner/MNI) mm
        coordinates.  Last row must be (0, 0, 0, 1).
    """

    nx: int
    ny: int
    nz: int
    voxel_size: tuple[float, float, float]
    affine: np.ndarray

    def __post_init__(self) -> None:
        for name, v in (("nx", self.nx), ("ny", self.ny), ("nz", self.nz)):
            if int(v) < 1:
                raise ParamError(f"{name} must be >= 1, got {v}")
        if len(self.voxel_size) != 3 or any(s <= 0 for s in self.voxel_size):
            raise ParamError(f"voxel_size must be 3 positive reals, got {self.voxel_size}")
        aff = np.asarray(self.affine, dtype=np.float64)
        if aff.shape != (4, 4):
            raise ParamError(f"affine must be 4x4, got shape {aff.shape}")
        if not np.all(np.isfinite(aff)):
            raise ParamError("affine contains non-finite entries")
        if not np.array_equal(aff[3], [0.0, 0.0, 0.0, 1.0]):
            raise ParamError(f"affine last row must be (0,0,0,1), got {aff[3]}")
        aff.setflags(write=False)
        object.__setattr__(self, "affine", aff)
        object.__setattr__(self, "voxel_size", tuple(float(s) for s in self.voxel_size))

    @classmethod
    def from_voxel_size(
        cls,
        nx: int,
        ny: int,
        nz: int,
        voxel_size: tuple[float, float, float] = (1.0, 1.0, 1.0),
        origin: tuple[float, float, float] = (0.0, 0.0, 0.0),
    ) -> "Grid3":
        """Axis-aligned grid whose affine scales by voxel size and shifts by origin."""
        aff = np.eye(4)
        aff[0, 0], aff[1, 1], aff[2, 2] = voxel_size
        aff[:3, 3] = origin
        return cls(nx, ny, nz, voxel_size, aff)

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.nx, self.ny, self.nz)

    @property
    def n_voxels(self) -> int:
        return self.nx * self.ny * self.nz

    @property
    def voxel_volume(self) -> float:
        """Voxel volume in mm^3 (exact product, no rounding)."""
        sx, sy, sz = self.voxel_size
        return sx * sy * sz


@dataclass(frozen=True)
class Mask:
    """Boolean inclusion mask over a grid, in x-fastest flat order.

    ``m`` is the number of in-mask voxels; every masked vector downstream has
    length m and uses positions 0..m-1 in the order of increasing flat index.
    """

    grid: Grid3
    inside: np.ndarray
    flat_indices: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        inside = np.asarray(self.inside, dtype=bool)
        if inside.shape != (self.grid.n_voxels,):
            raise ParamError(
                f"mask length {inside.shape} does not match grid with {self.grid.n_voxels} voxels"
            )
        if not inside.any():
            raise MaskError("mask selects no voxels (m = 0)")
        inside.setflags(write=False)
        flat = np.flatnonzero(inside)
        flat.setflags(write=False)
        object.__setattr__(self, "inside", inside)
        object.__setattr__(self, "flat_indices", flat)

    @classmethod
    def full(cls, grid: Grid3) -> "Mask":
        return cls(grid, np.ones(grid.n_voxels, dtype=bool))

    @property
    def m(self) -> int:
        return int(self.flat_indices.size)

    def grid_coords(self, masked_index: int | np.ndarray) -> np.ndarray:
        """Integer (ix, iy, iz) for a masked voxel index; vectorized."""
        idx = np.asarray(masked_index)
        if np.any(idx < 0) or np.any(idx >= self.m):
            raise IndexError(f"masked index out of range [0, {self.m})")
        flat = self.flat_indices[idx]
        nx, ny = self.grid.nx, self.grid.ny
        ix = flat % nx
        iy = (flat // nx) % ny
        iz = flat // (nx * ny)
        return np.stack([ix, iy, iz], axis=-1)

    def embed(self, values: np.ndarray, fill: float = 0.0) -> np.ndarray:
        """Scatter a length-m vector into a full (nx, ny, nz) array."""
        values = np.asarray(values)
        if values.shape != (self.m,):
            raise ParamError(f"expected length-{self.m} vector, got shape {values.shape}")
        flat = np.full(self.grid.n_voxels, fill, dtype=np.result_type(values, type(fill)))
        flat[self.flat_indices] = values
        return flat.reshape(self.grid.shape, order="F")

    def extract(self, volume: np.ndarray) -> np.ndarray:
        """Gather the in-mask entries of a full (nx, ny, nz) array."""
        if volume.shape != self.grid.shape:
            raise ParamError(f"expected shape {self.grid.shape}, got {volume.shape}")
        return volume.reshape(-1, order="F")[self.flat_indices]


def voxel_to_world(mask: Mask, masked_index: int | np.ndarray) -> np.ndarray:
    """World-space mm coordinates of a masked voxel (affine applied to its index)."""
    ijk = mask.grid_coords(masked_index)
    aff = mask.grid.affine
    return ijk @ aff[:3, :3].T + aff[:3, 3]


@dataclass(frozen=True)
class SubjectStack:
    """Per-subject contrast values, masked and flattened: one row per subject.

    The container itself allows a single subject (the binary format does);
    statistics that need sign-flip variability enforce n >= 2 themselves.
    """

    mask: Mask
    data: np.ndarray  # (n_subjects, m) float32

    def __post_init__(self) -> None:
        data = np.ascontiguousarray(self.data, dtype=np.float32)
        if data.ndim != 2 or data.shape[1] != self.mask.m:
            raise ParamError(
                f"data must be (n_subjects, {self.mask.m}), got shape {data.shape}"
            )
        if data.shape[0] < 1:
            raise ParamError("need at least one subject")
        if not np.all(np.isfinite(data)):
            raise DataError("subject data contains non-finite values")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def grid(self) -> Grid3:
        return self.mask.grid

    @property
    def n_subjects(self) -> int:
        return int(self.data.shape[0])

    @property
    def m(self) -> int:
        return self.mask.m


@dataclass(frozen=True)
class StatMap:
    """Per-voxel Z scores over a mask."""

    mask: Mask
    z: np.ndarray  # (m,) float64

    def __post_init__(self) -> None:
        z = np.ascontiguousarray(self.z, dtype=np.float64)
        if z.shape != (self.mask.m,):
            raise ParamError(f"z must have length {self.mask.m}, got shape {z.shape}")
        if not np.all(np.isfinite(z)):
            raise DataError("Z map contains non-finite values")
        z.setflags(write=False)
        object.__setattr__(self, "z", z)


@dataclass(frozen=True)
class PValueVector:
    """Per-voxel p-values over a mask, each in [0, 1]."""

    mask: Mask
    p: np.ndarray  # (m,) float64

    def __post_init__(self) -> None:
        p = np.ascontiguousarray(self.p, dtype=np.float64)
        if p.shape != (self.mask.m,):
            raise ParamError(f"p must have length {self.mask.m}, got shape {p.shape}")
        if not np.all((p >= 0.0) & (p <= 1.0)):
            raise DataError("p-values outside [0, 1]")
        p.setflags(write=False)
        object.__setattr__(self, "p", p)
