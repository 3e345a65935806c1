"""Initial-state reconstruction for parabolic equations with Log-Lipschitz-in-time coefficients."""

__version__ = "0.1.0"

from .evolve import EvolutionFamily, TimeMesh, Trajectory, estimate_M
from .field import CoefficientField, builtin, log_lip_modulus, reflect_in_time, validate
from .grid import PeriodicGrid, h1_norm, hminus1_norm, l2_inner, l2_norm
from .linalg import ConvergenceError
from .reconstruct import ReconstructionProblem, ReconstructionResult, qbv_reconstruct, solve
