"""Differentially private synthetic data for smooth queries via Chebyshev moment matching."""

from .basis import MomentIndexSet, MultiIndex, cheb_multi, expand
from .grid import Grid, build_grid
from .mechanism import NoiseCalibration, PrivacyBudget, calibrate
from .solver import GridDistribution, SolverOptions, solve
from .synth import MechanismConfig, PrivateRelease, RunReport, SyntheticDataset, release_moments, run, synthesize

__version__ = "0.1.0"

__all__ = [
    "Grid", "GridDistribution", "MechanismConfig", "MomentIndexSet", "MultiIndex", "NoiseCalibration",
    "PrivacyBudget", "PrivateRelease", "RunReport", "SolverOptions", "SyntheticDataset", "build_grid",
    "calibrate", "cheb_multi", "expand", "release_moments", "run", "solve", "synthesize",
]
