"""Exponential Euler simulation of stochastic heat equations with weak-rate diagnostics."""
from .errors import (
    ConfigError,
    DivergenceError,
    EstimationDegraded,
    InsufficientData,
    InvalidArgument,
    InvalidOperator,
    InvalidRefinement,
    NumericOverflow,
    UnsupportedFunctional,
    UnsupportedOracle,
)
from .spectral import (
    GridField,
    OperatorSpec,
    SpectralField,
    fractional_apply,
    from_grid,
    norm,
    semigroup_apply,
    to_grid,
)
from .special import calE, chi_constant, upsilon_constant, floor_h, ConstantSet
from .model import ModelSpec, default_model
from .noise import NoisePlan, increment
from .schemes import SchemeConfig, Trajectory, run, reference_solve
from .oracles import OUSpec, ou_weak_value, ou_weak_error, ou_strong_error

__version__ = "0.1.0"
