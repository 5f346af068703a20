"""Quantized Johnson-Lindenstrauss sketching.

Dithered uniform quantization of Gaussian random projections, the exact
needle-crossing law that governs its per-coordinate distortion, the
calibrated nonlinear distance map for the squared-distance estimator, and a
desk-scale experiment harness.
"""

from .buffon import (
    BuffonParams,
    BuffonPmf,
    build_pmf,
    chi,
    j_n,
    kappa_alt,
    mc_sample,
    moment,
    moment_bounds,
    sample,
    tau,
    tv_distance,
)
from .embedding import (
    PointSet,
    Projector,
    Sketch,
    angular,
    binary_embed,
    chi_moment,
    embed,
    hamming,
    l1_estimate,
    l2_estimate,
    quantize,
    subgaussian_diag,
)
from .gdelta import GDeltaTable, build_gdelta, g_inverse
from .harness import (
    ExperimentConfig,
    ExperimentReport,
    check_equivalence,
    emit_report,
    run_distortion,
    run_from_manifest,
    run_l2_distortion,
    tail_curve,
)

__all__ = [
    "BuffonParams",
    "BuffonPmf",
    "build_pmf",
    "chi",
    "j_n",
    "kappa_alt",
    "mc_sample",
    "moment",
    "moment_bounds",
    "sample",
    "tau",
    "tv_distance",
    "PointSet",
    "Projector",
    "Sketch",
    "angular",
    "binary_embed",
    "chi_moment",
    "embed",
    "hamming",
    "l1_estimate",
    "l2_estimate",
    "quantize",
    "subgaussian_diag",
    "GDeltaTable",
    "build_gdelta",
    "g_inverse",
    "ExperimentConfig",
    "ExperimentReport",
    "check_equivalence",
    "emit_report",
    "run_distortion",
    "run_from_manifest",
    "run_l2_distortion",
    "tail_curve",
]

__version__ = "0.1.0"
