"""Synthetic group datasets with known ground truth.

Subject maps are smoothed white noise, rescaled to exact unit marginal
variance, plus a deterministic effect pattern built from spherical regions.
Effect sizes are therefore in units of the noise standard deviation, and the
true-null indicator (effect == 0) is exact by construction.

Noise is smoothed with a circular (wrap-around) Gaussian kernel: under wrap
the smoothed field is stationary, so dividing by the kernel's l2 norm gives
unit variance everywhere, not just far from the borders.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter

from .data import Grid3, Mask, SubjectStack
from .errors import ParamError


@dataclass(frozen=True)
class Region:
    """Spherical signal patch: center and radius in voxel units."""

    center: tuple[float, float, float]
    radius: float
    effect: float

    def __post_init__(self) -> None:
        if len(self.center) != 3:
            raise ParamError(f"region center must be 3-D, got {self.center}")
        if not self.radius >= 0.0:
            raise ParamError(f"region radius must be >= 0, got {self.radius}")
        if not np.isfinite(self.effect):
            raise ParamError(f"region effect must be finite, got {self.effect}")


@dataclass(frozen=True)
class SimConfig:
    nx: int = 30
    ny: int = 30
    nz: int = 30
    voxel_size: tuple[float, float, float] = (3.0, 3.0, 3.0)
    n_subjects: int = 20
    sigma: float = 2.0  # Gaussian smoothing width in voxels
    regions: tuple[Region, ...] = ()
    seed: int = 0
    pi0_target: float | None = None  # informational, recorded in reports

    def __post_init__(self) -> None:
        if self.n_subjects < 2:
            raise ParamError(f"need >= 2 subjects, got {self.n_subjects}")
        if not self.sigma >= 0.0:
            raise ParamError(f"sigma must be >= 0, got {self.sigma}")
        dims = (self.nx, self.ny, self.nz)
        if any(n < 1 for n in dims):
            raise ParamError(f"grid dimensions must be >= 1, got {dims}")
        if len(self.voxel_size) != 3 or any(not v > 0 for v in self.voxel_size):
            raise ParamError(f"voxel sizes must be positive, got {self.voxel_size}")
        for region in self.regions:
            for c, n in zip(region.center, dims):
                if not 0 <= c <= n - 1:
                    raise ParamError(
                        f"region center {region.center} outside grid {dims}"
                    )

    @property
    def grid(self) -> Grid3:
        return Grid3.from_voxel_size(self.nx, self.ny, self.nz, self.voxel_size)

    def to_json_dict(self) -> dict:
        return {
            "nx": self.nx,
            "ny": self.ny,
            "nz": self.nz,
            "voxel_size": list(self.voxel_size),
            "n_subjects": self.n_subjects,
            "sigma": self.sigma,
            "regions": [
                {"center": list(r.center), "radius": r.radius, "effect": r.effect}
                for r in self.regions
            ],
            "seed": self.seed,
            "pi0_target": self.pi0_target,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "SimConfig":
        return cls(
            nx=d["nx"],
            ny=d["ny"],
            nz=d["nz"],
            voxel_size=tuple(d["voxel_size"]),
            n_subjects=d["n_subjects"],
            sigma=d["sigma"],
            regions=tuple(
                Region(tuple(r["center"]), r["radius"], r["effect"])
                for r in d["regions"]
            ),
            seed=d["seed"],
            pi0_target=d.get("pi0_target"),
        )


def effect_volume(cfg: SimConfig) -> np.ndarray:
    """Deterministic signal pattern; overlapping regions merge with max effect."""
    ix, iy, iz = np.meshgrid(
        np.arange(cfg.nx), np.arange(cfg.ny), np.arange(cfg.nz), indexing="ij"
    )
    out = np.zeros((cfg.nx, cfg.ny, cfg.nz))
    for region in cfg.regions:
        cx, cy, cz = region.center
        inside = (ix - cx) ** 2 + (iy - cy) ** 2 + (iz - cz) ** 2 <= region.radius**2
        out = np.where(inside, np.maximum(out, region.effect), out)
    return out


def smoothing_norm(shape: tuple[int, int, int], sigma: float) -> float:
    """l2 norm of the wrap-mode smoothing kernel, measured by impulse response."""
    impulse = np.zeros(shape)
    impulse[0, 0, 0] = 1.0
    response = gaussian_filter(impulse, sigma, mode="wrap")
    return float(np.sqrt(np.sum(response**2)))


def simulate_dataset(cfg: SimConfig) -> tuple[SubjectStack, np.ndarray]:
    """Subject stack plus the boolean true-null indicator (masked order).

    Per-subject noise is keyed by (seed, subject) in a counter-based
    generator, so the dataset is a pure function of the config.
    """
    grid = cfg.grid
    mask = Mask.full(grid)
    effect = effect_volume(cfg)
    norm = smoothing_norm(grid.shape, cfg.sigma)
    data = np.empty((cfg.n_subjects, mask.m), dtype=np.float32)
    for s in range(cfg.n_subjects):
        gen = np.random.Generator(
            np.random.Philox(key=np.array([cfg.seed, s], dtype=np.uint64))
        )
        white = gen.standard_normal(grid.shape)
        smooth = gaussian_filter(white, cfg.sigma, mode="wrap") / norm
        data[s] = mask.extract(smooth + effect)
    h0 = mask.extract(effect) == 0.0
    return SubjectStack(mask, data), h0


def gaussian_lag1_autocorr(sigma: float) -> float:
    """Closed-form lag-1 autocorrelation of Gaussian-smoothed white noise.

    The kernel autocorrelation is Gaussian with width sigma*sqrt(2), giving
    exp(-1/(4 sigma^2)) at lag 1 (continuous-kernel approximation).
    """
    if sigma <= 0:
        return 0.0
    return float(np.exp(-1.0 / (4.0 * sigma**2)))
