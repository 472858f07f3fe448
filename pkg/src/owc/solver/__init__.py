"""Time integration of the coupled exterior/boundary system."""

from .direct import (
    Forcing,
    SimulationResult,
    SolverConfig,
    Traces,
    cfl_dt,
    monitor,
    physical_energy,
    preflight,
    rhs,
    run,
    step,
)
from .picard import PicardHistory, linearized_step, low_norm, picard_grid, picard_solve, sidewall_data
