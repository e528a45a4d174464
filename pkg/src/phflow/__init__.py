"""Port-Hamiltonian modelling and optimal control of network flows."""

from .integrate import TimeGrid, Trajectory, energy_drift, integrate_adjoint, integrate_forward
from .network import EdgeCostFunction, Network, builtin_instance, check_feasible, parse_dimacs, read_dimacs
from .phs import PhsSystem, flow_phs

__version__ = "0.1.0"

__all__ = [
    "TimeGrid", "Trajectory", "energy_drift", "integrate_adjoint", "integrate_forward",
    "EdgeCostFunction", "Network", "builtin_instance", "check_feasible", "parse_dimacs", "read_dimacs",
    "PhsSystem", "flow_phs",
]
