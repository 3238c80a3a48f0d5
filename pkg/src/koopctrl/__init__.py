"""koopctrl: data-driven bilinear lifted-model identification and robust
LMI-based state-feedback synthesis, with a self-contained dense
interior-point LMI solver and simulation benchmarks."""

from . import cli, edmd, lifting, linalg, sdp, sim, synthesis
from .edmd import BilinearModel, Dataset, ErrorReport
from .errors import (
    InfeasibleSynthesisError,
    KoopctrlError,
    NumericalFailureError,
)
from .lifting import LiftingSpec
from .sdp import LmiConstraint, LmiProblem, SdpSolution, VarSpec
from .sim import SystemDef, Trajectory
from .synthesis import Controller, RegionSpec

__version__ = "0.1.0"

__all__ = [
    "BilinearModel",
    "Controller",
    "Dataset",
    "ErrorReport",
    "InfeasibleSynthesisError",
    "KoopctrlError",
    "LiftingSpec",
    "LmiConstraint",
    "LmiProblem",
    "NumericalFailureError",
    "RegionSpec",
    "SdpSolution",
    "SystemDef",
    "Trajectory",
    "VarSpec",
    "cli",
    "edmd",
    "lifting",
    "linalg",
    "sdp",
    "sim",
    "synthesis",
    "__version__",
]
