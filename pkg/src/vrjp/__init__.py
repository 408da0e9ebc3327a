"""Simulation toolkit for the vertex-reinforced jump process seen as a random
walk in a random inverse-Gaussian environment: potential samplers on trees and
lattice boxes, the root martingale and its Green functions, wired electrical
networks, phase-diagram numerics, and a reproducible experiment harness."""

from .igmath import (
    StepCumulant,
    bessel_k,
    bessel_k_half,
    gamma_half_sample,
    ig_cdf,
    ig_frac_moment,
    ig_log_weighted_moment,
    ig_pdf,
    ig_sample,
    step_cumulant,
)

__version__ = "0.1.0"
