"""Self-contained MILP engine: bounded revised simplex plus branch-and-bound."""

from .bnb import solve_lp, solve_milp
from .model import (
    BINARY, CONTINUOUS, EQ, GAP_LIMIT, GE, INFEASIBLE, INTEGER, LE, OPTIMAL, UNBOUNDED,
    MilpModel, MilpSolution, ModelError,
)
from .mps import read_mps, write_mps
from .simplex import LpStallError

__all__ = [
    "BINARY", "CONTINUOUS", "EQ", "GAP_LIMIT", "GE", "INFEASIBLE", "INTEGER", "LE",
    "OPTIMAL", "UNBOUNDED", "LpStallError", "MilpModel", "MilpSolution", "ModelError",
    "read_mps", "solve_lp", "solve_milp", "write_mps",
]
