"""Lower bounds on the true discovery proportion of arbitrary voxel sets.

The interpolation bound for a set S and template (t_k)_{k in [K]}:

    bound(S) = max(0, max_k (1 - k + #{i in S : p_i < t_k})) / |S|

``tdp_bound_bruteforce`` is the definition verbatim (double loop, kept as
the in-package reference); ``tdp_bound_linear`` must return the identical
value on every input and is what the rest of the toolkit calls.
``confidence_curve`` evaluates nested top-k sets for all requested k in one
pass using prefix counts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import PValueVector, StatMap
from .errors import ContractError, ParamError
from .templates import Template


@dataclass(frozen=True)
class Selection:
    """A non-empty set of masked voxel indices, stored sorted and unique."""

    indices: np.ndarray

    def __post_init__(self) -> None:
        idx = np.unique(np.asarray(self.indices, dtype=np.int64))
        if idx.size < 1:
            raise ParamError("selection must contain at least one voxel")
        if idx.size != np.asarray(self.indices).size:
            raise ParamError("selection indices must be unique")
        if idx[0] < 0:
            raise ParamError("selection indices must be non-negative")
        idx.setflags(write=False)
        object.__setattr__(self, "indices", idx)

    @property
    def size(self) -> int:
        return int(self.indices.size)


def tdp_bound_bruteforce(p_S: np.ndarray, template: Template) -> float:
    """Reference evaluation: the double loop over thresholds and p-values."""
    p_S = np.asarray(p_S, dtype=np.float64)
    if p_S.ndim != 1 or p_S.size < 1:
        raise ParamError(f"need a non-empty p-value vector, got shape {p_S.shape}")
    best = 0
    for k, t_k in enumerate(template.thresholds, start=1):
        count = 0
        for pi in p_S:
            if pi < t_k:
                count += 1
        best = max(best, 1 - k + count)
    return best / p_S.size


def _spot_check_sorted(sorted_p: np.ndarray) -> None:
    n = sorted_p.size
    if n < 2:
        return
    if n <= 64:
        pos = np.arange(n - 1)
    else:
        pos = np.unique(np.linspace(0, n - 2, num=64).astype(np.int64))
    if np.any(sorted_p[pos] > sorted_p[pos + 1]):
        raise ContractError("p-values must be sorted ascending")


def tdp_bound_linear(sorted_p_S: np.ndarray, template: Template) -> float:
    """Same value as the brute force, via counts of p-values below each threshold.

    Sortedness is spot-checked on sampled adjacent pairs (full check for
    small inputs); a detected violation raises ContractError.
    """
    p = np.asarray(sorted_p_S, dtype=np.float64)
    if p.ndim != 1 or p.size < 1:
        raise ParamError(f"need a non-empty p-value vector, got shape {p.shape}")
    _spot_check_sorted(p)
    counts = np.searchsorted(p, template.thresholds, side="left")
    k = np.arange(1, template.K + 1)
    best = np.max(1 - k + counts)
    return float(max(best, 0)) / p.size


def true_tdp(S: Selection, h0: np.ndarray) -> float:
    """Exact TDP against ground truth: fraction of S outside the null set."""
    h0 = np.asarray(h0, dtype=bool)
    if h0.ndim != 1:
        raise ParamError(f"h0 must be a boolean vector, got shape {h0.shape}")
    if S.indices[-1] >= h0.size:
        raise ParamError("selection index beyond ground-truth length")
    return float(np.mean(~h0[S.indices]))


@dataclass(frozen=True)
class ConfidenceCurve:
    """TDP lower bounds for nested top-k sets, one vector per method.

    ``z_at_k[i]`` is the |Z| magnitude of the ks[i]-th ranked voxel, the
    natural x-axis when comparing against cluster-forming thresholds.
    """

    ks: np.ndarray
    z_at_k: np.ndarray
    bounds: dict[str, np.ndarray]

    def __post_init__(self) -> None:
        ks = np.asarray(self.ks, dtype=np.int64)
        if ks.ndim != 1 or ks.size < 1:
            raise ParamError("ks must be a non-empty vector")
        if ks[0] < 1 or np.any(ks[1:] <= ks[:-1]):
            raise ParamError("ks must be strictly increasing and >= 1")
        z = np.asarray(self.z_at_k, dtype=np.float64)
        if z.shape != ks.shape:
            raise ParamError("z_at_k must align with ks")
        for name, vec in self.bounds.items():
            vec = np.asarray(vec, dtype=np.float64)
            if vec.shape != ks.shape:
                raise ParamError(f"bounds[{name!r}] must align with ks")
            if vec.size and (vec.min() < 0.0 or vec.max() > 1.0):
                raise ParamError(f"bounds[{name!r}] outside [0, 1]")
            vec.setflags(write=False)
            self.bounds[name] = vec
        ks.setflags(write=False)
        z.setflags(write=False)
        object.__setattr__(self, "ks", ks)
        object.__setattr__(self, "z_at_k", z)


def topk_order(zmap: StatMap) -> np.ndarray:
    """Voxel indices by descending |Z|, ties broken by ascending index."""
    absz = np.abs(zmap.z)
    return np.lexsort((np.arange(absz.size), -absz))


def _prefix_bounds(p_ord: np.ndarray, template: Template, ks: np.ndarray) -> np.ndarray:
    # p_ord ascending: the top-k set holds exactly the k smallest p-values,
    # so #{i in S_k : p_i < t_j} = min(C_j, k) with C_j the global count.
    C = np.searchsorted(p_ord, template.thresholds, side="left")
    gains = C - np.arange(template.K)  # 1 - (j+1) + C_j
    prefmax = np.maximum.accumulate(gains)
    # C is non-decreasing, so {j : C_j <= k} is a prefix of length pi.
    pi = np.searchsorted(C, ks, side="right")
    best = np.where(pi >= 1, prefmax[np.maximum(pi - 1, 0)], np.iinfo(np.int64).min)
    capped = np.where(pi < template.K, ks - pi, np.iinfo(np.int64).min)
    num = np.maximum(np.maximum(best, capped), 0)
    return num / ks


def confidence_curve(
    zmap: StatMap,
    p: PValueVector,
    templates: dict[str, Template],
    ks: np.ndarray | list[int],
) -> ConfidenceCurve:
    """Bounds for S_k = top-k voxels by |Z|, for every requested k.

    Equivalent to calling tdp_bound_linear on each S_k; when the p-values are
    monotone in |Z| rank (the usual case) all k are served by shared prefix
    counts, otherwise each prefix is evaluated directly.
    """
    ks = np.asarray(ks, dtype=np.int64)
    m = zmap.z.size
    if ks.size < 1 or ks[0] < 1 or ks[-1] > m or np.any(ks[1:] <= ks[:-1]):
        raise ParamError("ks must be strictly increasing within [1, m]")
    order = topk_order(zmap)
    p_ord = p.p[order]
    z_at_k = np.abs(zmap.z)[order][ks - 1]
    monotone = not np.any(p_ord[1:] < p_ord[:-1])
    out: dict[str, np.ndarray] = {}
    for name, template in templates.items():
        if monotone:
            out[name] = _prefix_bounds(p_ord, template, ks)
        else:
            out[name] = np.array(
                [tdp_bound_linear(np.sort(p_ord[:k]), template) for k in ks]
            )
    return ConfidenceCurve(ks, z_at_k, out)
