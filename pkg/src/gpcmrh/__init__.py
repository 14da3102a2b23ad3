"""Inner-product-free Krylov solver for block two-by-two linear systems.

``[[lam I, A], [B, mu I]] [x; y] = [b; c]`` is solved by GP-CMRH, which
builds its bases with a pivoted simultaneous Hessenberg process instead of
orthogonalization. GPMR, GMRES and CMRH are included for comparison.
"""

from .baselines import MonolithicOperator, cmrh_solve, gmres_solve
from .gpmr import SandwichCheck, gpmr_solve, sandwich_verify
from .harness import ExperimentConfig, SummaryRow, partition_system, run_experiment
from .hessenberg import OrthogonalHessenberg, SimultaneousHessenberg, basis_condition
from .linalg import CSRMatrix, read_matrix_market, spmv
from .operators import BlockSystem, apply_block, preconditioned_system
from .solver import SolveReport, Status, gpcmrh_solve

__all__ = [
    "BlockSystem",
    "CSRMatrix",
    "ExperimentConfig",
    "MonolithicOperator",
    "OrthogonalHessenberg",
    "SandwichCheck",
    "SimultaneousHessenberg",
    "SolveReport",
    "Status",
    "SummaryRow",
    "apply_block",
    "basis_condition",
    "cmrh_solve",
    "gmres_solve",
    "gpcmrh_solve",
    "gpmr_solve",
    "partition_system",
    "preconditioned_system",
    "read_matrix_market",
    "run_experiment",
    "sandwich_verify",
    "spmv",
]
