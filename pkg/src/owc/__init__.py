"""Nonlinear shallow water model of an oscillating water column device.

Finite-volume solver for the coupled wave/structure/chamber system plus
checks of the structure behind its well-posedness: eigenstructure,
boundary dissipativity, compatibility of initial data, contraction of the
Picard iteration and the scaling of the boundary ODE.
"""

from .errors import *  # noqa: F401,F403
from .model import BoundaryState, DomainLayout, FieldState, PhysicalParams, check_initial_data, validate_params

__version__ = "0.1.0"
