"""One-sample group statistics and the sign-flipping permutation engine.

The null p-value matrix is the calibration input for every permutation-based
method: row 0 is the observed (identity-flip) data, rows 1..B-1 are random
sign assignments, each row converted voxel-wise to p-values and sorted.

Determinism contract: a row's flips come from a counter-based generator keyed
by (seed, row), so the matrix depends only on (stack, B, seed), never on
thread count or scheduling.  Every row, including row 0, goes through the
same kernel as ``one_sample_z`` so the observed row is bit-identical to the
public API's output.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import special

from .data import PValueVector, StatMap, SubjectStack
from .errors import ContractError, DataError, ParamError

# Z magnitude for zero-variance voxels; beyond the resolvable Gaussian tail.
Z_CAP = 38.0
# p-value floor so calibration pivotal ratios never divide a hard zero.
P_MIN = 1e-300

TWO_SIDED = "two-sided"
ONE_SIDED = "one-sided"


@dataclass(frozen=True)
class NullPValueMatrix:
    """B x m matrix of sorted null p-values plus the seed that produced it.

    Row 0 is the identity sign assignment (the observed data); rows are
    individually sorted ascending.
    """

    rows: np.ndarray
    seed: int

    def __post_init__(self) -> None:
        rows = np.ascontiguousarray(self.rows, dtype=np.float64)
        if rows.ndim != 2 or rows.shape[0] < 1 or rows.shape[1] < 1:
            raise ParamError(f"null matrix must be non-empty 2-D, got shape {rows.shape}")
        if not np.all(np.isfinite(rows)):
            raise DataError("null matrix contains non-finite values")
        if rows[:, 0].min() < 0.0 or rows[:, -1].max() > 1.0:
            raise DataError("null matrix p-values outside [0, 1]")
        if not np.all(rows[:, 1:] >= rows[:, :-1]):
            raise ContractError("null matrix rows must be sorted ascending")
        rows.setflags(write=False)
        object.__setattr__(self, "rows", rows)

    @property
    def B(self) -> int:
        return int(self.rows.shape[0])

    @property
    def m(self) -> int:
        return int(self.rows.shape[1])


def _moments(stack: SubjectStack) -> tuple[np.ndarray, np.ndarray]:
    # float64 promotion once per stack; sum of squares is flip-invariant.
    x = stack.data.astype(np.float64)
    sumsq = np.einsum("ij,ij->j", x, x)
    return x, sumsq


def _z_for_flips(x: np.ndarray, sumsq: np.ndarray, flips: np.ndarray) -> np.ndarray:
    n = x.shape[0]
    mean = (flips @ x) / n
    var = (sumsq - n * mean * mean) / (n - 1)
    np.maximum(var, 0.0, out=var)  # cancellation can leave -1e-18 where var is 0
    sd = np.sqrt(var)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = mean / (sd / np.sqrt(n))
    # t is +-inf at zero-sd voxels and nan where mean is also zero.
    z = np.empty_like(t)
    finite = np.isfinite(t)
    tf = t[finite]
    tail = special.stdtr(n - 1, -np.abs(tf))
    z[finite] = np.sign(tf) * -special.ndtri(tail)
    rest = t[~finite]
    z[~finite] = np.where(np.isnan(rest), 0.0, np.sign(rest) * Z_CAP)
    return np.clip(z, -Z_CAP, Z_CAP)


def one_sample_z(stack: SubjectStack, flips: np.ndarray | None = None) -> StatMap:
    """Z map of the one-sample t test after multiplying each subject by its flip.

    The t statistic mean/(sd/sqrt(n)) (sd with n-1 denominator) is mapped to a
    Z score through the probit of the t CDF with n-1 degrees of freedom.
    Zero-variance voxels get Z = +-Z_CAP by the sign of the mean, or 0 when
    every value is zero.

    Parameters
    ----------
    stack : SubjectStack
        Needs n_subjects >= 2.
    flips : array of +-1, optional
        One sign per subject; omitted means all +1 (the observed map).
    """
    n = stack.n_subjects
    if n < 2:
        raise ParamError(f"one-sample statistics need >= 2 subjects, got {n}")
    if flips is None:
        flips = np.ones(n)
    flips = np.asarray(flips, dtype=np.float64)
    if flips.shape != (n,):
        raise ParamError(f"flips must have length {n}, got shape {flips.shape}")
    if not np.all(np.abs(flips) == 1.0):
        raise ParamError("flips entries must be +1 or -1")
    x, sumsq = _moments(stack)
    return StatMap(stack.mask, _z_for_flips(x, sumsq, flips))


def _p_from_z_values(z: np.ndarray, sidedness: str) -> np.ndarray:
    if sidedness == TWO_SIDED:
        p = 2.0 * special.ndtr(-np.abs(z))
    elif sidedness == ONE_SIDED:
        p = special.ndtr(-z)
    else:
        raise ParamError(f"sidedness must be {TWO_SIDED!r} or {ONE_SIDED!r}, got {sidedness!r}")
    return np.clip(p, P_MIN, 1.0)


def p_from_z(zmap: StatMap, sidedness: str = TWO_SIDED) -> PValueVector:
    """Gaussian p-values: two-sided 2(1 - Phi(|z|)) or one-sided 1 - Phi(z).

    Values are clamped to [P_MIN, 1] so downstream pivotal ratios never see
    an exact zero.
    """
    return PValueVector(zmap.mask, _p_from_z_values(zmap.z, sidedness))


def _row_flips(seed: int, row: int, n: int) -> np.ndarray:
    # Counter-based: the key (seed, row) alone determines the row's signs.
    gen = np.random.Generator(np.random.Philox(key=np.array([seed, row], dtype=np.uint64)))
    return gen.integers(0, 2, size=n).astype(np.float64) * 2.0 - 1.0


def sign_flip_null(
    stack: SubjectStack,
    B: int,
    seed: int,
    sidedness: str = TWO_SIDED,
    workers: int = 1,
) -> NullPValueMatrix:
    """B sign-flip randomizations of the stack as a sorted null p-value matrix.

    Row 0 uses the identity assignment (all +1); row b > 0 uses signs keyed
    by (seed, b).  Output is identical for a given (stack, B, seed) whatever
    the worker count.
    """
    if B < 2:
        raise ParamError(f"need B >= 2 randomizations, got {B}")
    n = stack.n_subjects
    if n < 2:
        raise ParamError(f"sign flipping needs >= 2 subjects, got {n}")
    if sidedness not in (TWO_SIDED, ONE_SIDED):
        raise ParamError(f"sidedness must be {TWO_SIDED!r} or {ONE_SIDED!r}, got {sidedness!r}")
    x, sumsq = _moments(stack)
    rows = np.empty((B, stack.m), dtype=np.float64)

    def fill(b: int) -> None:
        flips = np.ones(n) if b == 0 else _row_flips(seed, b, n)
        p = _p_from_z_values(_z_for_flips(x, sumsq, flips), sidedness)
        p.sort()
        rows[b] = p

    if workers <= 1:
        for b in range(B):
            fill(b)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            # consume the iterator to surface worker exceptions
            list(pool.map(fill, range(B)))
    return NullPValueMatrix(rows, seed)
