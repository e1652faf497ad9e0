"""Threshold families (templates) and their permutation calibration.

A template is a non-decreasing vector t_1 <= ... <= t_K of p-value
thresholds.  The guarantee downstream: if with probability 1 - alpha no null
order statistic falls below its threshold (p_(k) >= t_k for all k), then
1 - k + #{i in S : p_i < t_k} lower-bounds the signal count in S
simultaneously over all S.  Four constructions live here:

* Simes:  t_k = alpha k / m (valid under independence / PRDS)
* ARI:    t_k = alpha k / h with h the Hommel value of the observed p-values
* pARI:   t_k = lambda (k - delta)/(m - delta) for k > delta, 0 otherwise,
          lambda calibrated on a sign-flip null matrix
* Notip:  learned empirical quantile curves, calibrated the same way

Calibration picks lambda* as the k_alpha-th smallest pivotal statistic with
k_alpha = floor(alpha B), which makes the empirical joint error rate on the
calibration matrix at most alpha by construction.  All threshold
comparisons are strict (p < t_k); ties count as non-discoveries.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import PValueVector
from .errors import ContractError, DataError, ParamError
from .stats import NullPValueMatrix

# Largest double below 1: cap for degenerate "count everything" thresholds.
ONE_MINUS_EPS = float(np.nextafter(1.0, 0.0))

KIND_SIMES = "simes"
KIND_ARI = "ari"
KIND_PARI = "pari"
KIND_NOTIP = "notip"


@dataclass(frozen=True)
class Template:
    """A calibrated or analytic threshold family.

    ``h`` is set for ARI, ``delta``/``lambda_star`` for pARI, ``lambda_star``
    for Notip (the calibrated quantile level, not the curve index).
    """

    kind: str
    alpha: float
    thresholds: np.ndarray
    h: int | None = None
    delta: int | None = None
    lambda_star: float | None = None

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha < 1.0:
            raise ParamError(f"alpha must be in (0, 1), got {self.alpha}")
        t = np.ascontiguousarray(self.thresholds, dtype=np.float64)
        if t.ndim != 1 or t.size < 1:
            raise ParamError(f"thresholds must be a non-empty vector, got shape {t.shape}")
        if not np.all(np.isfinite(t)):
            raise DataError("thresholds contain non-finite values")
        if t[0] < 0.0 or t[-1] >= 1.0 or np.any(t[1:] < t[:-1]):
            raise ContractError("thresholds must be non-decreasing within [0, 1)")
        t.setflags(write=False)
        object.__setattr__(self, "thresholds", t)

    @property
    def K(self) -> int:
        return int(self.thresholds.size)

    def to_json_dict(self) -> dict:
        out = {
            "kind": self.kind,
            "alpha": self.alpha,
            "K": self.K,
        }
        if self.delta is not None:
            out["delta"] = int(self.delta)
        if self.lambda_star is not None:
            out["lambda_star"] = float(self.lambda_star)
        if self.h is not None:
            out["h"] = int(self.h)
        out["thresholds"] = [float(x) for x in self.thresholds]
        return out

    @classmethod
    def from_json_dict(cls, d: dict) -> "Template":
        return cls(
            kind=d["kind"],
            alpha=float(d["alpha"]),
            thresholds=np.asarray(d["thresholds"], dtype=np.float64),
            h=d.get("h"),
            delta=d.get("delta"),
            lambda_star=d.get("lambda_star"),
        )


@dataclass(frozen=True)
class LearnedTemplateFamily:
    """Candidate curves for Notip: sorted order statistics of a training null.

    ``quantile_curves[b - 1][k - 1]`` is the b-th smallest value observed for
    the k-th order statistic across training randomizations.  Rows are
    non-decreasing in k because sorting columns of row-sorted data preserves
    row sortedness.
    """

    quantile_curves: np.ndarray  # (B_train, K)

    def __post_init__(self) -> None:
        q = np.ascontiguousarray(self.quantile_curves, dtype=np.float64)
        if q.ndim != 2 or q.shape[0] < 2 or q.shape[1] < 1:
            raise ParamError(f"quantile curves must be (B_train >= 2, K >= 1), got {q.shape}")
        if np.any(q[1:, :] < q[:-1, :]):
            raise ContractError("quantile curves must be sorted within each column")
        if np.any(q[:, 1:] < q[:, :-1]):
            raise ContractError("each quantile curve must be non-decreasing")
        q.setflags(write=False)
        object.__setattr__(self, "quantile_curves", q)

    @property
    def B_train(self) -> int:
        return int(self.quantile_curves.shape[0])

    @property
    def K(self) -> int:
        return int(self.quantile_curves.shape[1])


@dataclass(frozen=True)
class CalibrationResult:
    """Template plus the calibration evidence that produced it.

    ``lambda_star`` is the k_alpha-th smallest pivotal value in both
    calibrators; for Notip the derived curve index (ceil of
    lambda_star * B_train, equal to the k_alpha-th smallest integer minimum
    rank) is kept in ``curve_index``, 0 meaning the all-zero template below
    every learned curve.
    """

    template: Template
    lambda_star: float
    pivotal_values: np.ndarray
    k_alpha: int
    curve_index: int | None = None

    def __post_init__(self) -> None:
        if self.k_alpha < 1:
            raise ParamError(f"k_alpha must be >= 1, got {self.k_alpha}")
        piv = np.ascontiguousarray(self.pivotal_values, dtype=np.float64)
        piv.setflags(write=False)
        if not piv.size >= self.k_alpha:
            raise ParamError("fewer pivotal values than k_alpha")
        kth = np.partition(piv, self.k_alpha - 1)[self.k_alpha - 1]
        if kth != self.lambda_star:
            raise ContractError(
                f"lambda_star {self.lambda_star} is not the k_alpha-th smallest pivotal {kth}"
            )
        object.__setattr__(self, "pivotal_values", piv)


def k_alpha_of(alpha: float, B: int) -> int:
    """Calibration order-statistic index floor(alpha * B); must be >= 1."""
    k = int(np.floor(alpha * B))
    if k < 1:
        raise ParamError(
            f"floor(alpha * B) = {k} with alpha={alpha}, B={B}: too few randomizations"
        )
    return k


def _check_alpha(alpha: float) -> None:
    if not 0.0 < alpha < 1.0:
        raise ParamError(f"alpha must be in (0, 1), got {alpha}")


def _as_pvalues(p) -> np.ndarray:
    if isinstance(p, PValueVector):
        return p.p
    arr = np.ascontiguousarray(p, dtype=np.float64)
    if arr.ndim != 1:
        raise ParamError(f"p-values must be a vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)) or arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
        raise DataError("p-values outside [0, 1]")
    return arr


def simes_template(m: int, alpha: float, K: int) -> Template:
    """t_k = alpha k / m for k = 1..K."""
    _check_alpha(alpha)
    if not 1 <= K <= m:
        raise ParamError(f"need 1 <= K <= m, got K={K}, m={m}")
    k = np.arange(1, K + 1, dtype=np.float64)
    return Template(KIND_SIMES, alpha, alpha * k / m)


def _fails(ps: np.ndarray, alpha: float, i: int) -> bool:
    # candidate i fails when some top-i p-value is <= its stepped level j*alpha/i
    j = np.arange(1, i + 1, dtype=np.float64)
    return bool(np.any(ps[ps.size - i:] <= j * alpha / i))


def hommel_value(p, alpha: float) -> int:
    """Largest i such that the top i sorted p-values all exceed j*alpha/i.

    This is the closed-testing bound on the number of true nulls: at
    confidence 1 - alpha, at most h of the m hypotheses are null.  Returns a
    value in {0, ..., m}; 0 means even the full set is rejected.

    The scan below is O(m log m): only p-values strictly below alpha can
    disqualify a candidate i, and each such p-value at sorted position r
    disqualifies exactly the upward-closed set
    i >= max(m - r + 1, ceil((m - r) alpha / (alpha - p_(r)))).  The minimum
    over r locates the boundary; an exact local walk absorbs any one-off
    float slack in the ceil.
    """
    _check_alpha(alpha)
    ps = np.sort(_as_pvalues(p))
    m = ps.size
    if m == 0:
        raise ParamError("hommel_value needs at least one p-value")
    if ps[-1] <= alpha:
        # r = m disqualifies every i (top p-value <= alpha at j = i)
        return 0
    below = np.flatnonzero(ps < alpha)
    if below.size == 0:
        return m
    r = below.astype(np.float64) + 1.0
    geom = np.ceil((m - r) * alpha / (alpha - ps[below]))
    first_bad = np.minimum(np.maximum(m - r + 1.0, geom), m + 1.0)
    h = int(first_bad.min()) - 1
    h = min(max(h, 0), m)
    while h < m and not _fails(ps, alpha, h + 1):
        h += 1
    while h >= 1 and _fails(ps, alpha, h):
        h -= 1
    return h


def ari_template(p, alpha: float, K: int) -> Template:
    """Simes thresholds sharpened by the Hommel value: t_k = alpha k / h.

    h = 0 (closed testing rejects everything) degenerates to the all-signal
    family with every threshold just below 1, so every p-value counts as a
    discovery.
    """
    _check_alpha(alpha)
    ps = _as_pvalues(p)
    m = ps.size
    if not 1 <= K <= m:
        raise ParamError(f"need 1 <= K <= m, got K={K}, m={m}")
    h = hommel_value(ps, alpha)
    k = np.arange(1, K + 1, dtype=np.float64)
    if h >= 1:
        thresholds = np.minimum(alpha * k / h, ONE_MINUS_EPS)
    else:
        thresholds = np.full(K, ONE_MINUS_EPS)
    return Template(KIND_ARI, alpha, thresholds, h=h)


def pari_pivotal(sorted_null_row: np.ndarray, delta: int, m: int) -> float:
    """Largest lambda whose delta-shifted linear template the row survives.

    lambda_b = min over k in {delta+1, ..., m} of p_(k) (m - delta)/(k - delta).
    """
    row = np.ascontiguousarray(sorted_null_row, dtype=np.float64)
    if row.shape != (m,):
        raise ParamError(f"row must have length m={m}, got shape {row.shape}")
    if not 0 <= delta < m:
        raise ParamError(f"need 0 <= delta < m, got delta={delta}, m={m}")
    if np.any(row[1:] < row[:-1]):
        raise ContractError("null row must be sorted ascending")
    shifted = np.arange(1, m - delta + 1, dtype=np.float64)  # k - delta
    return float(np.min(row[delta:] * (m - delta) / shifted))


def calibrate_pari(
    null: NullPValueMatrix,
    delta: int,
    alpha: float,
    K: int | None = None,
) -> CalibrationResult:
    """Calibrate the delta-shifted linear family on a null matrix.

    lambda* is the floor(alpha B)-th smallest per-row pivotal value; the
    returned template has t_k = lambda* (k - delta)/(m - delta) for k > delta
    and 0 below, truncated to K thresholds (default the full range m).
    delta = 0 recovers calibrated Simes.
    """
    _check_alpha(alpha)
    m = null.m
    if not 0 <= delta < m:
        raise ParamError(f"need 0 <= delta < m, got delta={delta}, m={m}")
    if K is None:
        K = m
    if not 1 <= K <= m:
        raise ParamError(f"need 1 <= K <= m, got K={K}, m={m}")
    k_alpha = k_alpha_of(alpha, null.B)
    shifted = np.arange(1, m - delta + 1, dtype=np.float64)
    pivotals = np.min(null.rows[:, delta:] * (m - delta) / shifted, axis=1)
    lambda_star = float(np.partition(pivotals, k_alpha - 1)[k_alpha - 1])
    k = np.arange(1, K + 1, dtype=np.float64)
    thresholds = np.where(
        k > delta,
        np.minimum(lambda_star * (k - delta) / (m - delta), ONE_MINUS_EPS),
        0.0,
    )
    template = Template(KIND_PARI, alpha, thresholds, delta=delta, lambda_star=lambda_star)
    return CalibrationResult(template, lambda_star, pivotals, k_alpha)


def learn_notip_templates(train_null: NullPValueMatrix, K: int | None = None) -> LearnedTemplateFamily:
    """Candidate curves: column-wise sorted order statistics of the training null.

    K defaults to 2% of m (at least 1), the truncation that keeps the learned
    family informative for small sets without chasing deep-order noise.
    """
    if train_null.B < 2:
        raise ParamError(f"need B_train >= 2, got {train_null.B}")
    if K is None:
        K = default_notip_k(train_null.m)
    if not 1 <= K <= train_null.m:
        raise ParamError(f"need 1 <= K <= m, got K={K}, m={train_null.m}")
    return LearnedTemplateFamily(np.sort(train_null.rows[:, :K], axis=0))


def default_notip_k(m: int) -> int:
    return max(1, int(round(0.02 * m)))


def calibrate_notip(
    family: LearnedTemplateFamily,
    calib_null: NullPValueMatrix,
    alpha: float,
) -> CalibrationResult:
    """Pick the largest learned curve whose joint error rate stays within alpha.

    Each calibration row is reduced to a pivotal value: the smallest rank (as
    a fraction of B_train, strict '<' against the learned curves) that any of
    its first K order statistics attains.  lambda* is the floor(alpha B)-th
    smallest pivotal value and the template is the curve at index
    ceil(lambda* B_train); index 0 means no curve is safe and the template is
    identically zero.
    """
    _check_alpha(alpha)
    K, B_train = family.K, family.B_train
    if K > calib_null.m:
        raise ParamError(f"family K={K} exceeds calibration m={calib_null.m}")
    k_alpha = k_alpha_of(alpha, calib_null.B)
    curves = family.quantile_curves
    # rank of x within a sorted column = #{entries < x} = searchsorted left
    ranks = np.empty((K, calib_null.B), dtype=np.int64)
    for kk in range(K):
        ranks[kk] = np.searchsorted(curves[:, kk], calib_null.rows[:, kk], side="left")
    min_ranks = ranks.min(axis=0)
    pivotals = min_ranks / B_train
    # the k_alpha-th smallest pivotal and its integer rank, tie-consistent
    r_star = int(np.partition(min_ranks, k_alpha - 1)[k_alpha - 1])
    lambda_star = r_star / B_train
    if r_star == 0:
        thresholds = np.zeros(K)
    else:
        thresholds = np.minimum(curves[r_star - 1], ONE_MINUS_EPS)
    template = Template(KIND_NOTIP, alpha, thresholds, lambda_star=lambda_star)
    return CalibrationResult(template, lambda_star, pivotals, k_alpha, curve_index=r_star)


def empirical_jer(template: Template, null: NullPValueMatrix) -> float:
    """Fraction of null rows violating the template (some p_(k) < t_k)."""
    if template.K > null.m:
        raise ParamError(f"template K={template.K} exceeds null m={null.m}")
    viol = np.any(null.rows[:, : template.K] < template.thresholds, axis=1)
    return float(viol.mean())
