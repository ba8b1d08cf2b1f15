"""Constrained optimal control of Markovian open quantum systems.

Lindblad dynamics are vectorized into a real linear system; the minimum
principle for a time/energy cost with a purity band and saturated controls
is discretized by boundary-exact collocation over a fixed random-feature
basis and trained with damped least squares.
"""

from .config import ConfigError, load_config, parse_config
from .metrics import fidelity, fidelity_to_pure
from .ocp import (
    DEFAULT_REG_SCHEDULE,
    ProblemSpec,
    SaturationFunction,
    cost,
    purity,
    purity_gradient,
    state_constraint,
)
from .pmp import (
    GamkrelidzeMultipliers,
    costate_rhs,
    legendre_clebsch,
    pontryagin_hamiltonian,
    stationarity_nu,
    stationarity_u,
    transversality,
)
from .propagator import ControlSignal, Trajectory, propagate, steady_state
from .solver import (
    AuditReport,
    SolveReport,
    SolverConfig,
    StageRecord,
    assemble_loss,
    audit,
    audit_solution,
    jacobian,
    ls_step,
    residual_blocks,
    solve,
)
from .superop import (
    DensityState,
    DimensionError,
    LindbladSpec,
    Liouvillian,
    build_liouvillian,
    devectorize,
    embed_density,
    lindblad_rhs,
    real_embed,
    real_embed_state,
    trace_functional,
    unembed_density,
    unembed_state,
    vectorize,
)
from .tfc import (
    ElmBasis,
    PinnParams,
    collocation_grid,
    constrained_costate,
    constrained_costate_dt,
    constrained_state,
    constrained_state_dt,
    expand_scalar,
    final_time,
    morph,
    switching,
    unmorph,
)

__version__ = "0.1.0"

__all__ = [
    "AuditReport",
    "ConfigError",
    "ControlSignal",
    "DEFAULT_REG_SCHEDULE",
    "DensityState",
    "DimensionError",
    "ElmBasis",
    "GamkrelidzeMultipliers",
    "LindbladSpec",
    "Liouvillian",
    "PinnParams",
    "ProblemSpec",
    "SaturationFunction",
    "SolveReport",
    "SolverConfig",
    "StageRecord",
    "Trajectory",
    "assemble_loss",
    "audit",
    "audit_solution",
    "build_liouvillian",
    "collocation_grid",
    "constrained_costate",
    "constrained_costate_dt",
    "constrained_state",
    "constrained_state_dt",
    "cost",
    "costate_rhs",
    "devectorize",
    "embed_density",
    "expand_scalar",
    "fidelity",
    "fidelity_to_pure",
    "final_time",
    "jacobian",
    "legendre_clebsch",
    "lindblad_rhs",
    "load_config",
    "ls_step",
    "morph",
    "parse_config",
    "pontryagin_hamiltonian",
    "propagate",
    "purity",
    "purity_gradient",
    "real_embed",
    "real_embed_state",
    "residual_blocks",
    "solve",
    "state_constraint",
    "stationarity_nu",
    "stationarity_u",
    "steady_state",
    "switching",
    "trace_functional",
    "transversality",
    "unembed_density",
    "unembed_state",
    "unmorph",
    "vectorize",
]
