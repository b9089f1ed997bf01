"""Conic standard form, embedded interior-point solver and SDPA I/O."""

from .conic import ConicStandardForm, compile_problem
from .ipm import (INFEASIBLE, NUMERICAL_FAILURE, OPTIMAL, UNBOUNDED, SolveResult,
                  solve)
from .kernels import ACTIVE as ACTIVE_KERNEL
from .sdpa import (SdpaParseError, dumps_sdpa, export_sdpa, loads_sdpa,
                   parse_sdpa)

compile = compile_problem

__all__ = [
    "ConicStandardForm", "compile", "compile_problem", "solve", "SolveResult",
    "OPTIMAL", "INFEASIBLE", "UNBOUNDED", "NUMERICAL_FAILURE", "ACTIVE_KERNEL",
    "export_sdpa", "parse_sdpa", "dumps_sdpa", "loads_sdpa", "SdpaParseError",
]
