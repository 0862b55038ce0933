"""Nonlinear pseudo-spectral solvers and mode diagnostics."""
from .diagnostics import (
    ModeSplit,
    dyadic_exponent,
    mode_split,
    reconstruct_conducting,
    relation_check,
    rescale_grid,
    rescale_params,
    rescale_state,
    unrescale_state,
    x_functional,
)
from .params import (
    BoussinesqState,
    ConductingState,
    NonConductingState,
    PhysParams,
    PotentialCache,
    PotentialSpec,
)
from .rhs import rhs_conducting, rhs_nonconducting
from .stepping import (
    BoussinesqStepper,
    CompressibleStepper,
    integrate,
    step_boussinesq,
    step_conducting,
    step_nonconducting,
)

__all__ = [
    "BoussinesqState",
    "BoussinesqStepper",
    "CompressibleStepper",
    "ConductingState",
    "ModeSplit",
    "NonConductingState",
    "PhysParams",
    "PotentialCache",
    "PotentialSpec",
    "dyadic_exponent",
    "integrate",
    "mode_split",
    "reconstruct_conducting",
    "relation_check",
    "rescale_grid",
    "rescale_params",
    "rescale_state",
    "rhs_conducting",
    "rhs_nonconducting",
    "step_boussinesq",
    "step_conducting",
    "step_nonconducting",
    "unrescale_state",
    "x_functional",
]
