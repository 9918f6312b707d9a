"""Finite element simulator for coupled magnetization / elasticity dynamics.

The magnetization follows a tangent-plane midpoint scheme, the displacement a
two-step Newmark-beta scheme, advanced in a decoupled fashion; both linear
solves per step are Krylov iterations on sparse P1 systems.
"""

from .displacement import NewmarkParams, NewmarkSolver, StabilityWarning
from .fem import MeshOperators, interpolate
from .integrator import (DiagnosticsRecord, EnergyBreakdown, RunResult,
                         SchemeParams, SimulationState, run)
from .material import MaterialParams, constant_field, pulse_field
from .mesh import TetMesh, build_structured_cube
from .sparse_linalg import SolverReport

__version__ = "0.1.0"

__all__ = [
    "DiagnosticsRecord",
    "EnergyBreakdown",
    "MaterialParams",
    "MeshOperators",
    "NewmarkParams",
    "NewmarkSolver",
    "RunResult",
    "SchemeParams",
    "SimulationState",
    "SolverReport",
    "StabilityWarning",
    "TetMesh",
    "build_structured_cube",
    "constant_field",
    "interpolate",
    "pulse_field",
    "run",
    "__version__",
]
