from .config import SolverConfig
from .estimator import NonRigidDepthSolver
from .two_stage import run_two_stage

__all__ = ["NonRigidDepthSolver", "SolverConfig", "run_two_stage"]
