"""Abelian-Higgs vortex dynamics on a two-dimensional lattice."""

from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"

from .lattice import FieldState, GridSpec, ModelParams
from .profile import RadialGrid, VortexProfile, solve_profile
from .modes import ModeProfile, assemble_operator, solve_shape_mode
from .initial import InitialConfig, VortexSpec, superpose
from .evolution import EvolutionConfig, RunRecord, evolve

__all__ = [
    "__version__",
    "FieldState",
    "GridSpec",
    "ModelParams",
    "RadialGrid",
    "VortexProfile",
    "solve_profile",
    "ModeProfile",
    "assemble_operator",
    "solve_shape_mode",
    "InitialConfig",
    "VortexSpec",
    "superpose",
    "EvolutionConfig",
    "RunRecord",
    "evolve",
]
