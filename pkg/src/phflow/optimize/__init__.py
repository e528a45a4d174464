"""Reduced-gradient optimization of flow port-Hamiltonian systems."""

from .costs import (
    BarrierDomainError,
    BarrierParams,
    CostFunctional,
    barrier_grad,
    barrier_value,
    dynamic_flow_cost,
    static_linear_cost,
    tracking_cost,
)
from .drivers import (
    STATIC_GRID,
    IterationRecord,
    OptimizerRun,
    flow_cost,
    run_dynamic,
    run_static_barrier,
    run_static_kkt,
    write_run,
)
from .linesearch import ArmijoParams, ArmijoResult, NotDescentError, armijo
from .projection import CirculationProjector, KktDirection, RankDeficientError, project_circulation, project_kkt_lp
from .reduced import Controls, Evaluation, control_inner, evaluate, fd_gradient_check, gradient, reduced_cost
from .reference import DIAMOND_PATHS, switching_breakpoints, switching_reference_cost
from .riesz import h1_inner, h1_operator, riesz_h1, trapezoid_weights

__all__ = [
    "BarrierDomainError", "BarrierParams", "CostFunctional", "barrier_grad", "barrier_value",
    "dynamic_flow_cost", "static_linear_cost", "tracking_cost",
    "STATIC_GRID", "IterationRecord", "OptimizerRun", "flow_cost", "run_dynamic",
    "run_static_barrier", "run_static_kkt", "write_run",
    "ArmijoParams", "ArmijoResult", "NotDescentError", "armijo",
    "CirculationProjector", "KktDirection", "RankDeficientError", "project_circulation", "project_kkt_lp",
    "Controls", "Evaluation", "control_inner", "evaluate", "fd_gradient_check", "gradient", "reduced_cost",
    "DIAMOND_PATHS", "switching_breakpoints", "switching_reference_cost",
    "h1_inner", "h1_operator", "riesz_h1", "trapezoid_weights",
]
