"""End-to-end orchestration: calibrate methods, tabulate clusters, run curves,
and validate coverage by repeated simulation.

Seed layout: a benchmark with base seed s simulates with seed s and draws its
null matrices with seeds s+1 (pARI calibration), s+2 (Notip training) and
s+3 (Notip calibration).  Coverage replication r shifts the base by 4r so no
counter-based key is ever reused across purposes or replications.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy import special

from .bounds import (
    ConfidenceCurve,
    confidence_curve,
    tdp_bound_linear,
    topk_order,
    true_tdp,
)
from .clusters import ClusterTable, cluster_table, extract_clusters
from .data import PValueVector, StatMap, SubjectStack
from .errors import ParamError
from .phdat import read_phdat
from .simulate import SimConfig, simulate_dataset
from .stats import NullPValueMatrix, one_sample_z, p_from_z, sign_flip_null
from .templates import (
    CalibrationResult,
    Template,
    ari_template,
    calibrate_notip,
    calibrate_pari,
    default_notip_k,
    learn_notip_templates,
    simes_template,
)

METHOD_SIMES = "Simes"
METHOD_ARI = "ARI"
METHOD_PARI = "pARI"
METHOD_NOTIP = "Notip"
ALL_METHODS = (METHOD_SIMES, METHOD_ARI, METHOD_PARI, METHOD_NOTIP)

# seed offsets from the benchmark base seed
_SEED_SIM = 0
_SEED_PARI = 1
_SEED_TRAIN = 2
_SEED_CALIB = 3
SEED_STRIDE = 4


@dataclass(frozen=True)
class BenchConfig:
    methods: tuple[str, ...] = ALL_METHODS
    alpha: float = 0.05
    b: int = 1000
    b_train: int = 1000
    b_calib: int = 500
    delta: int = 27
    k_max: int | None = None  # Notip curve length; default 2% of m
    z_thresholds: tuple[float, ...] = (3.0, 3.5, 4.0)
    connectivity: int = 26
    seed: int = 0
    sidedness: str = "two-sided"
    curve_points: int = 200

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha < 1.0:
            raise ParamError(f"alpha must be in (0, 1), got {self.alpha}")
        unknown = set(self.methods) - set(ALL_METHODS)
        if unknown:
            raise ParamError(f"unknown methods {sorted(unknown)}; choose from {ALL_METHODS}")
        if len(self.methods) != len(set(self.methods)):
            raise ParamError("duplicate methods")
        z = self.z_thresholds
        if any(b <= a for a, b in zip(z, z[1:])):
            raise ParamError(f"z thresholds must be ascending, got {z}")
        if self.connectivity not in (6, 18, 26):
            raise ParamError(f"connectivity must be 6, 18 or 26, got {self.connectivity}")

    def to_json_dict(self) -> dict:
        return {
            "methods": list(self.methods),
            "alpha": self.alpha,
            "b": self.b,
            "b_train": self.b_train,
            "b_calib": self.b_calib,
            "delta": self.delta,
            "k_max": self.k_max,
            "z_thresholds": list(self.z_thresholds),
            "connectivity": self.connectivity,
            "seed": self.seed,
            "sidedness": self.sidedness,
            "curve_points": self.curve_points,
        }


@dataclass(frozen=True)
class Analysis:
    """Observed statistics plus per-method calibrated templates."""

    zmap: StatMap
    p: PValueVector
    templates: dict[str, Template]
    calibrations: dict[str, CalibrationResult]


def analyze(
    stack: SubjectStack,
    cfg: BenchConfig,
    nulls: dict[str, NullPValueMatrix] | None = None,
) -> Analysis:
    """Run the statistics and calibrate every configured method.

    ``nulls`` can inject precomputed matrices under keys "pari", "train",
    "calib" (e.g. from a nullcache file); missing ones are generated.
    """
    zmap = one_sample_z(stack)
    p = p_from_z(zmap, cfg.sidedness)
    m = stack.m
    nulls = dict(nulls or {})

    def null_for(key: str, b: int, seed_offset: int) -> NullPValueMatrix:
        if key not in nulls:
            nulls[key] = sign_flip_null(
                stack, b, seed=cfg.seed + seed_offset, sidedness=cfg.sidedness
            )
        return nulls[key]

    templates: dict[str, Template] = {}
    calibrations: dict[str, CalibrationResult] = {}
    for method in cfg.methods:
        if method == METHOD_SIMES:
            templates[method] = simes_template(m, cfg.alpha, m)
        elif method == METHOD_ARI:
            templates[method] = ari_template(p, cfg.alpha, m)
        elif method == METHOD_PARI:
            res = calibrate_pari(null_for("pari", cfg.b, _SEED_PARI), cfg.delta, cfg.alpha)
            templates[method] = res.template
            calibrations[method] = res
        elif method == METHOD_NOTIP:
            K = cfg.k_max if cfg.k_max is not None else default_notip_k(m)
            family = learn_notip_templates(null_for("train", cfg.b_train, _SEED_TRAIN), K)
            res = calibrate_notip(family, null_for("calib", cfg.b_calib, _SEED_CALIB), cfg.alpha)
            templates[method] = res.template
            calibrations[method] = res
    return Analysis(zmap, p, templates, calibrations)


def default_curve_ks(m: int, points: int) -> np.ndarray:
    """Log-spaced set sizes 1..m, deduplicated; all of [1, m] when small."""
    if m <= points:
        return np.arange(1, m + 1, dtype=np.int64)
    return np.unique(np.geomspace(1, m, num=points).round().astype(np.int64))


@dataclass(frozen=True)
class BenchResult:
    """Everything one benchmark produces, ready for report emission."""

    config: dict
    analysis: Analysis
    tables: list[ClusterTable]
    curve: ConfidenceCurve
    scatter: list[dict]
    true_tdp_by_table: list[list[float]] | None  # per table, per cluster
    pi0: float | None


def run_benchmark(
    cfg: BenchConfig,
    source: str | Path | SimConfig,
    stack: SubjectStack | None = None,
    h0: np.ndarray | None = None,
) -> BenchResult:
    """Full pipeline on a PHDAT file or a simulation config.

    A pre-loaded stack short-circuits reading; ground truth (when available)
    adds exact TDP columns to the scatter records.
    """
    sim_cfg = None
    if stack is None:
        if isinstance(source, SimConfig):
            # the bench seed governs all randomness, simulation included
            sim_cfg = replace(source, seed=cfg.seed + _SEED_SIM)
            stack, h0 = simulate_dataset(sim_cfg)
        else:
            stack = read_phdat(source)
    analysis = analyze(stack, cfg)
    config = {
        "bench": cfg.to_json_dict(),
        "source": str(source) if not isinstance(source, SimConfig) else "simulation",
        "n_subjects": stack.n_subjects,
        "m": stack.m,
        "grid": list(stack.grid.shape),
        "voxel_size": list(stack.grid.voxel_size),
    }
    if sim_cfg is not None:
        config["sim"] = sim_cfg.to_json_dict()

    tables = []
    truths: list[list[float]] | None = [] if h0 is not None else None
    scatter = []
    for z in cfg.z_thresholds:
        clusters = extract_clusters(analysis.zmap, z, cfg.connectivity)
        table = cluster_table(clusters, analysis.p, analysis.templates, cfg.connectivity)
        tables.append(table)
        if truths is not None:
            truths.append([true_tdp(c.selection, h0) for c in clusters])
        for row, cluster in zip(table.bounds, clusters):
            for method, bound in row.items():
                rec = {
                    "z": z,
                    "cluster_id": cluster.id,
                    "method": method,
                    "bound": bound,
                    "size_vox": cluster.size,
                    "size_mm3": cluster.size_mm3,
                    "peak_stat": cluster.peak_stat,
                }
                if h0 is not None:
                    rec["true_tdp"] = true_tdp(cluster.selection, h0)
                scatter.append(rec)
    ks = default_curve_ks(stack.m, cfg.curve_points)
    curve = confidence_curve(analysis.zmap, analysis.p, analysis.templates, ks)
    pi0 = float(np.mean(h0)) if h0 is not None else None
    return BenchResult(config, analysis, tables, curve, scatter, truths, pi0)


def wilson_interval(successes: int, n: int, conf: float = 0.95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if n < 1 or not 0 <= successes <= n:
        raise ParamError(f"invalid counts {successes}/{n}")
    z = float(-special.ndtri((1.0 - conf) / 2.0))
    phat = successes / n
    denom = 1.0 + z * z / n
    center = (phat + z * z / (2 * n)) / denom
    half = z * math.sqrt(phat * (1.0 - phat) / n + z * z / (4 * n * n)) / denom
    return (max(0.0, center - half), min(1.0, center + half))


@dataclass(frozen=True)
class CoverageReport:
    n_reps: int
    alpha: float
    methods: tuple[str, ...]
    violations: dict[str, int]
    frequency: dict[str, float]
    wilson: dict[str, tuple[float, float]]
    budget: float  # alpha + 3 sd Monte-Carlo allowance
    config: dict


def coverage_experiment(
    sim_cfg: SimConfig,
    bench_cfg: BenchConfig,
    n_reps: int,
    curve_points: int = 50,
    progress=None,
) -> CoverageReport:
    """Frequency of any-violation events over the checked family.

    Each replication simulates a dataset with known truth, calibrates every
    configured method, and checks the bound against the exact TDP on the
    family of 50 log-spaced top-k sets plus all clusters at the configured z
    thresholds.  A violation is any bound exceeding the true TDP.
    """
    if n_reps < 100:
        raise ParamError(f"need n_reps >= 100, got {n_reps}")
    violations = {method: 0 for method in bench_cfg.methods}
    for rep in range(n_reps):
        base = bench_cfg.seed + rep * SEED_STRIDE
        rep_sim = replace(sim_cfg, seed=base + _SEED_SIM)
        rep_bench = replace(bench_cfg, seed=base)
        stack, h0 = simulate_dataset(rep_sim)
        analysis = analyze(stack, rep_bench)
        ks = default_curve_ks(stack.m, curve_points)
        curve = confidence_curve(analysis.zmap, analysis.p, analysis.templates, ks)
        order = topk_order(analysis.zmap)
        signal = ~h0
        # true TDP of every top-k prefix via a cumulative signal count
        cum_signal = np.cumsum(signal[order])
        tdp_topk = cum_signal[ks - 1] / ks
        violated = {method: bool(np.any(curve.bounds[method] > tdp_topk))
                    for method in bench_cfg.methods}
        for z in bench_cfg.z_thresholds:
            if all(violated.values()):
                break
            clusters = extract_clusters(analysis.zmap, z, bench_cfg.connectivity)
            for cluster in clusters:
                tdp = true_tdp(cluster.selection, h0)
                sorted_p = np.sort(analysis.p.p[cluster.selection.indices])
                for method, template in analysis.templates.items():
                    if not violated[method]:
                        if tdp_bound_linear(sorted_p, template) > tdp:
                            violated[method] = True
        for method, hit in violated.items():
            if hit:
                violations[method] += 1
        if progress is not None:
            progress(rep + 1, n_reps)
    frequency = {m: v / n_reps for m, v in violations.items()}
    wilson = {m: wilson_interval(v, n_reps) for m, v in violations.items()}
    alpha = bench_cfg.alpha
    budget = alpha + 3.0 * float(np.sqrt(alpha * (1 - alpha) / n_reps))
    config = {
        "sim": sim_cfg.to_json_dict(),
        "bench": bench_cfg.to_json_dict(),
        "n_reps": n_reps,
        "curve_points": curve_points,
    }
    return CoverageReport(
        n_reps, alpha, tuple(bench_cfg.methods), violations, frequency, wilson, budget, config
    )
