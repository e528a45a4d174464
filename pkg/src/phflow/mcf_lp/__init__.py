"""Reference solvers: min-cost-flow oracle and bounded-variable simplex."""

from .lp import LpNumericalError, LpProblem, LpResult, solve_lp
from .mcf import InfeasibleFlowError, McfSolution, mcf_as_lp, solve_mcf, worst_case_flow, write_solution_csv

__all__ = [
    "LpNumericalError",
    "LpProblem",
    "LpResult",
    "solve_lp",
    "InfeasibleFlowError",
    "McfSolution",
    "mcf_as_lp",
    "solve_mcf",
    "worst_case_flow",
    "write_solution_csv",
]
