"""Constructive axisymmetric solutions of the Navier-Stokes inequality.

Modules
-------
fields      jets, rectangles and composable scalar fields in the half-plane
cutoff      certified cutoffs and structures ``(v, f, phi)``
axisym      lifting to R^3 and norms of axisymmetric fields
pressure    pressure of an axisymmetric field via the reduced kernel
verify      NSI residuals, concatenation, viscosity bound, local energy inequality
energy      solutions with a prescribed energy profile and almost-constant solutions
cantor      Cantor-set geometry, rescaling towers and the splice with a profile solution
"""

from .errors import (CertificationError, CombinationError, NSIError, PreconditionError)
from .fields import Rect
from .report import Check, Report
from .cutoff import build_cutoff, build_structure_recipe, cutoff_field, verify_structure
from .energy import EnergyProfile, almost_constant, synthesize
from .verify import PiecewiseSolution, TestFunction, concatenate, compute_nu0, lei_check, nsi_residual
from .cantor import (CantorParams, box_dimension, compose_with_profile, level_boxes, placeholder_base,
                     placeholder_params, rescale_tower, switching_schedule, validate_params)

__version__ = "0.1.0"

__all__ = [
    "CertificationError", "CombinationError", "NSIError", "PreconditionError", "Rect", "Check", "Report",
    "build_cutoff", "build_structure_recipe", "cutoff_field", "verify_structure", "EnergyProfile",
    "almost_constant", "synthesize", "PiecewiseSolution", "TestFunction", "concatenate", "compute_nu0",
    "lei_check", "nsi_residual", "CantorParams", "box_dimension", "compose_with_profile", "level_boxes",
    "placeholder_base", "placeholder_params", "rescale_tower", "switching_schedule", "validate_params",
]
