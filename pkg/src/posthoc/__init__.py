"""Simultaneous true-discovery-proportion lower bounds for statistical maps.

Calibrate a family of p-value templates on sign-flip permutations of a
subject stack, then query TDP lower bounds for any voxel set (clusters,
top-k sets, hand-drawn regions) with one simultaneous guarantee, so
arbitrarily many queries need no multiplicity correction.
"""

from .bench import (
    ALL_METHODS,
    Analysis,
    BenchConfig,
    BenchResult,
    CoverageReport,
    analyze,
    coverage_experiment,
    run_benchmark,
    wilson_interval,
)
from .bounds import (
    ConfidenceCurve,
    Selection,
    confidence_curve,
    tdp_bound_bruteforce,
    tdp_bound_linear,
    topk_order,
    true_tdp,
)
from .clusters import (
    Cluster,
    ClusterTable,
    cluster_table,
    drill_down,
    extract_clusters,
    holm_fwer_set,
)
from .data import Grid3, Mask, PValueVector, StatMap, SubjectStack, voxel_to_world
from .errors import (
    ContractError,
    DataError,
    FormatError,
    IoError,
    MaskError,
    ParamError,
    PostHocError,
)
from .phdat import read_phdat, read_pnul, write_phdat, write_pnul
from .reports import emit_coverage, emit_report, emit_report_from_bundle
from .simulate import Region, SimConfig, simulate_dataset
from .stats import NullPValueMatrix, one_sample_z, p_from_z, sign_flip_null
from .templates import (
    CalibrationResult,
    LearnedTemplateFamily,
    Template,
    ari_template,
    calibrate_notip,
    calibrate_pari,
    empirical_jer,
    hommel_value,
    learn_notip_templates,
    simes_template,
)

__all__ = [
    "ALL_METHODS",
    "Analysis",
    "BenchConfig",
    "BenchResult",
    "CalibrationResult",
    "Cluster",
    "ClusterTable",
    "ConfidenceCurve",
    "ContractError",
    "CoverageReport",
    "DataError",
    "FormatError",
    "Grid3",
    "IoError",
    "LearnedTemplateFamily",
    "Mask",
    "MaskError",
    "NullPValueMatrix",
    "PValueVector",
    "ParamError",
    "PostHocError",
    "Region",
    "Selection",
    "SimConfig",
    "StatMap",
    "SubjectStack",
    "Template",
    "analyze",
    "ari_template",
    "calibrate_notip",
    "calibrate_pari",
    "cluster_table",
    "confidence_curve",
    "coverage_experiment",
    "drill_down",
    "emit_coverage",
    "emit_report",
    "emit_report_from_bundle",
    "empirical_jer",
    "extract_clusters",
    "holm_fwer_set",
    "hommel_value",
    "learn_notip_templates",
    "one_sample_z",
    "p_from_z",
    "read_phdat",
    "read_pnul",
    "run_benchmark",
    "sign_flip_null",
    "simes_template",
    "simulate_dataset",
    "tdp_bound_bruteforce",
    "tdp_bound_linear",
    "topk_order",
    "true_tdp",
    "voxel_to_world",
    "wilson_interval",
    "write_phdat",
    "write_pnul",
]
