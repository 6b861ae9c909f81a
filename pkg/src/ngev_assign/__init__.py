"""Markovian traffic equilibrium assignment with network GEV route choice."""

from .algebra import Logit, Model, Ngev, NgevParams, ShortestPath, expected_min_cost, make_params, solve_mu
from .config import RunConfig
from .cost import BprModel
from .dual import dual_gradient, dual_objective, solve_agp, solve_gp
from .errors import (AssignmentError, DivergenceError, DomainError, OracleInfeasibleError, ParseError, StallError,
                     StructureError, UnreachableError, ValidationError)
from .loading import aon_assign, assign_all, enumerate_path_flows, load, probit_load
from .network import DemandTable, Network, cyclic_example, generate_grid, load_tntp, parse_tntp, sioux_falls
from .primal import primal_objective, solve_msa, solve_pl
from .problem import AssignmentProblem, Trace, eta

__version__ = "0.1.0"

__all__ = [
    "AssignmentError", "AssignmentProblem", "BprModel", "DemandTable", "DivergenceError", "DomainError", "Logit",
    "Model", "Network", "Ngev", "NgevParams", "OracleInfeasibleError", "ParseError", "RunConfig", "ShortestPath",
    "StallError", "StructureError", "Trace", "UnreachableError", "ValidationError", "aon_assign", "assign_all",
    "cyclic_example", "dual_gradient", "dual_objective", "enumerate_path_flows", "eta", "expected_min_cost",
    "generate_grid", "load", "load_tntp", "make_params", "parse_tntp", "primal_objective", "probit_load",
    "sioux_falls", "solve_agp", "solve_gp", "solve_msa", "solve_mu", "solve_pl",
]
