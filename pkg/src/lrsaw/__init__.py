"""Self-avoiding walks with long-range steps: exact enumeration, lace
coefficients, Monte Carlo sampling and stable-limit comparisons."""

from __future__ import annotations

from lrsaw.enumeration import WalkCountTable, enumerate_walks, estimate_zc
from lrsaw.harness import ExperimentConfig, Report, run_pipeline, theorem_table
from lrsaw.lace import LaceTable, compute_K_alpha, extract_pi
from lrsaw.montecarlo import SampleBatch, ScalingContext, sample_walks
from lrsaw.stable import StableLawSpec, sample_stable_increment
from lrsaw.stepdist import StepDistribution, build_step_distribution

__version__ = "0.1.0"

__all__ = [
    "ExperimentConfig",
    "LaceTable",
    "Report",
    "SampleBatch",
    "ScalingContext",
    "StableLawSpec",
    "StepDistribution",
    "WalkCountTable",
    "build_step_distribution",
    "compute_K_alpha",
    "enumerate_walks",
    "estimate_zc",
    "extract_pi",
    "run_pipeline",
    "sample_stable_increment",
    "sample_walks",
    "theorem_table",
]
