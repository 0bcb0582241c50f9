"""Numerical laboratory for the two-component rouleau coagulation equation."""

__version__ = "0.1.0"

from .kernels import (
    apply_reaction,
    combined_kernel,
    kernel_eval,
    reaction_offset,
    truncated_kernel_eval,
)
from .measure import DiscreteMeasure
from .moments import (
    GelationReport,
    MomentSet,
    analyze_gelation,
    detect_blow_up,
    extract_moments,
    extract_theta_c0,
    integrate_moment_system,
)

__all__ = [
    "DiscreteMeasure",
    "GelationReport",
    "MomentSet",
    "analyze_gelation",
    "apply_reaction",
    "combined_kernel",
    "detect_blow_up",
    "extract_moments",
    "extract_theta_c0",
    "integrate_moment_system",
    "kernel_eval",
    "reaction_offset",
    "truncated_kernel_eval",
]
