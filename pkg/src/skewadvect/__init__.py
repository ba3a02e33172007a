"""Finite element laboratory for two-level schemes of the skew-symmetric
advection equation on the unit square."""

__version__ = "0.1.0"

from .assembly import (DiscreteOperators, assemble_advection, assemble_mass,
                       assemble_operators, assemble_q, lump_mass, project_initial)
from .mesh import (NodalField, TriMesh, VelocityField, build_uniform_mesh,
                   model_initial, model_velocity)
from .schemes import SCHEMES, SchemeConfig, build_stepper, run_transient
from .stability import stability_report

__all__ = [
    "DiscreteOperators", "NodalField", "SCHEMES", "SchemeConfig", "TriMesh",
    "VelocityField", "assemble_advection", "assemble_mass", "assemble_operators",
    "assemble_q", "build_stepper", "build_uniform_mesh", "lump_mass", "model_initial",
    "model_velocity", "project_initial", "run_transient", "stability_report",
]
