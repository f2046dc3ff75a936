"""Heat-kernel bounds for radial Kolmogorov-type operators with unbounded coefficients.

The operator ``A = (1+r^a) Delta + b r^{a-1} d/dr - c r^beta`` is discretized on
a graded radial grid; eigenpairs, heat kernels and the asymptotic comparators
are computed and the kernel and functional inequalities are checked with fitted
constants.
"""
from .asymptotics import (
    WkbModel,
    agmon_J,
    barrier_g,
    bound_B,
    comparator_psi_hat,
    default_k,
    simplified_bound_B_tilde,
    wkb_coefficients,
    wkb_residual_g1,
)
from .config import ConfigError, RunConfig, parse_config, read_config
from .discretize import DiscreteSystem, RadialGrid, assemble, build_grid
from .model import HypothesisError, OperatorParams, validate_params
from .propagate import KernelBlock, KernelSlice, kernel_block, propagate_mu
from .spectral import EigenData, eigensolve, ground_state
from .verify import BoundFit

__version__ = "0.1.0"

__all__ = [
    "BoundFit",
    "ConfigError",
    "DiscreteSystem",
    "EigenData",
    "HypothesisError",
    "KernelBlock",
    "KernelSlice",
    "OperatorParams",
    "RadialGrid",
    "RunConfig",
    "WkbModel",
    "agmon_J",
    "assemble",
    "barrier_g",
    "bound_B",
    "build_grid",
    "comparator_psi_hat",
    "default_k",
    "eigensolve",
    "ground_state",
    "kernel_block",
    "parse_config",
    "propagate_mu",
    "read_config",
    "simplified_bound_B_tilde",
    "validate_params",
    "wkb_coefficients",
    "wkb_residual_g1",
]
