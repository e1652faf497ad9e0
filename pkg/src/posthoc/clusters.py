"""Cluster extraction, per-cluster TDP bound tables, drill-down, Holm set.

Clusters are connected components of {Z >= z} inside the mask (closed
threshold), under 6-, 18-, or 26-neighborhood connectivity.  Ordering is
deterministic: descending peak Z, ties by the peak's masked voxel index,
ids consecutive from 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .bounds import Selection, tdp_bound_linear
from .data import Mask, PValueVector, StatMap, voxel_to_world
from .errors import ParamError
from .templates import Template

_STRUCTURE_RANK = {6: 1, 18: 2, 26: 3}


@dataclass(frozen=True)
class Cluster:
    """One supra-threshold connected component."""

    id: int
    selection: Selection
    peak_index: int  # masked index of the peak voxel
    peak_world: tuple[float, float, float]
    peak_stat: float
    size_mm3: float
    z_threshold: float

    @property
    def size(self) -> int:
        return self.selection.size


def _components(mask: Mask, member: np.ndarray, connectivity: int) -> list[np.ndarray]:
    """Connected components of a masked-voxel membership vector.

    Returns each component as an ascending array of masked indices.
    """
    if connectivity not in _STRUCTURE_RANK:
        raise ParamError(f"connectivity must be one of 6, 18, 26, got {connectivity}")
    structure = ndimage.generate_binary_structure(3, _STRUCTURE_RANK[connectivity])
    vol = np.zeros(mask.grid.n_voxels, dtype=bool)
    vol[mask.flat_indices[member]] = True
    labels, n = ndimage.label(vol.reshape(mask.grid.shape, order="F"), structure=structure)
    if n == 0:
        return []
    labels_flat = labels.reshape(-1, order="F")[mask.flat_indices]
    comps: list[np.ndarray] = [[] for _ in range(n)]
    hit = np.flatnonzero(labels_flat > 0)
    for masked_idx in hit:
        comps[labels_flat[masked_idx] - 1].append(masked_idx)
    return [np.asarray(c, dtype=np.int64) for c in comps]


def _build_clusters(
    zmap: StatMap, comps: list[np.ndarray], z_threshold: float
) -> list[Cluster]:
    mask = zmap.mask
    vol = mask.grid.voxel_volume
    drafts = []
    for idx in comps:
        zvals = zmap.z[idx]
        peak_pos = int(np.argmax(zvals))  # first occurrence = smallest index
        peak_index = int(idx[peak_pos])
        drafts.append((float(zvals[peak_pos]), peak_index, idx))
    drafts.sort(key=lambda d: (-d[0], d[1]))
    out = []
    for cid, (peak_stat, peak_index, idx) in enumerate(drafts, start=1):
        world = voxel_to_world(mask, peak_index)
        out.append(
            Cluster(
                id=cid,
                selection=Selection(idx),
                peak_index=peak_index,
                peak_world=(float(world[0]), float(world[1]), float(world[2])),
                peak_stat=peak_stat,
                size_mm3=idx.size * vol,
                z_threshold=float(z_threshold),
            )
        )
    return out


def extract_clusters(zmap: StatMap, z: float, connectivity: int = 26) -> list[Cluster]:
    """Connected components of {voxel : Z >= z}; empty list if none."""
    if not np.isfinite(z):
        raise ParamError(f"threshold must be finite, got {z}")
    comps = _components(zmap.mask, zmap.z >= z, connectivity)
    return _build_clusters(zmap, comps, z)


def drill_down(
    parent: Cluster, zmap: StatMap, z_new: float, connectivity: int = 26
) -> list[Cluster]:
    """Re-threshold inside one cluster at a stricter level.

    Children are connected components of {Z >= z_new} restricted to the
    parent's voxels; each child is a subset of the parent.  Valid without a
    multiplicity penalty because the TDP guarantee is simultaneous over sets.
    """
    if not np.isfinite(z_new) or z_new <= parent.z_threshold:
        raise ParamError(
            f"drill-down threshold must exceed the parent's {parent.z_threshold}, got {z_new}"
        )
    member = np.zeros(zmap.mask.m, dtype=bool)
    member[parent.selection.indices] = True
    member &= zmap.z >= z_new
    comps = _components(zmap.mask, member, connectivity)
    return _build_clusters(zmap, comps, z_new)


@dataclass(frozen=True)
class ClusterTable:
    """Clusters with one TDP lower bound per method.

    ``reportable`` flags rows where at least one method detects signal
    (bound > 0); machine outputs keep every row, the human-facing table
    shows only flagged ones.
    """

    z_threshold: float
    connectivity: int
    clusters: list[Cluster]
    methods: list[str]
    bounds: list[dict[str, float]]
    best: list[set[str]] = field(default_factory=list)

    @property
    def reportable(self) -> list[bool]:
        return [any(row[m] > 0.0 for m in self.methods) for row in self.bounds]


def cluster_table(
    clusters: list[Cluster],
    p: PValueVector,
    templates: dict[str, Template],
    connectivity: int = 26,
) -> ClusterTable:
    """Per-cluster TDP lower bounds, one column per method.

    Rows carry a best-method marker; ties share it.
    """
    methods = list(templates)
    rows: list[dict[str, float]] = []
    best: list[set[str]] = []
    for cluster in clusters:
        sorted_p = np.sort(p.p[cluster.selection.indices])
        row = {
            name: tdp_bound_linear(sorted_p, template)
            for name, template in templates.items()
        }
        rows.append(row)
        top = max(row.values()) if row else 0.0
        best.append({name for name, v in row.items() if v == top})
    z_threshold = clusters[0].z_threshold if clusters else float("nan")
    return ClusterTable(z_threshold, connectivity, clusters, methods, rows, best)


def holm_fwer_set(p: PValueVector, alpha: float) -> Selection | None:
    """Holm step-down rejections at level alpha; None when nothing is rejected."""
    if not 0.0 < alpha < 1.0:
        raise ParamError(f"alpha must be in (0, 1), got {alpha}")
    pv = p.p
    m = pv.size
    order = np.argsort(pv, kind="stable")
    sorted_p = pv[order]
    steps = alpha / (m - np.arange(m))
    failing = np.flatnonzero(sorted_p > steps)
    n_reject = m if failing.size == 0 else int(failing[0])
    if n_reject == 0:
        return None
    return Selection(order[:n_reject])
