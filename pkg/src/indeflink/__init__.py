"""Critical points of indefinite Schrödinger energies by linking and deformation.

Pipeline: assemble −Δ + V on a grid, split its spectrum into E⁺ and E⁻ ⊕ E⁰,
build the energy I(u) = ½‖u⁺‖² − ½‖u⁻‖² − ∫ h F(u), calibrate a linking pair
(S, Q) and descend a sequence of deformed copies of Q to a Cerami point.
"""
from .config import ProblemConfig, parse_config, preset
from .energy import EnergyModel, cerami_measure, eval_grad, eval_I
from .errors import IndeflinkError
from .grid import (Field, GridSpec, PotentialSpec, WeightSpec, assemble_operator, build_grid,
                   evaluate_weight)
from .linking import (LinkingFrame, calibrate_frame, choose_e, sample_boundary_Q, sample_S,
                      verify_geometry)
from .minimax import SolverOptions, SolveReport, refine_newton, solve
from .nonlinearity import NonlinearitySpec, check_hypotheses, eval_F, eval_f
from .spectral import SpectralSplit, compute_a0, eigendecompose

__all__ = [
    "ProblemConfig", "parse_config", "preset",
    "EnergyModel", "cerami_measure", "eval_grad", "eval_I",
    "IndeflinkError",
    "Field", "GridSpec", "PotentialSpec", "WeightSpec", "assemble_operator", "build_grid",
    "evaluate_weight",
    "LinkingFrame", "calibrate_frame", "choose_e", "sample_boundary_Q", "sample_S",
    "verify_geometry",
    "SolverOptions", "SolveReport", "refine_newton", "solve",
    "NonlinearitySpec", "check_hypotheses", "eval_F", "eval_f",
    "SpectralSplit", "compute_a0", "eigendecompose",
]
__version__ = "0.1.0"
