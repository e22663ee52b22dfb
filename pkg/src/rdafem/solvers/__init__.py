"""Krylov solvers, multigrid preconditioners and condition numbers."""
from .eigen import DENSE_LIMIT, estimate_condition
from .krylov import SolveReport, SolverConfig, cg, lanczos_extremes, pcg
from .multigrid import (MGHierarchyI, MGHierarchyII, build_mg_I, build_mg_II, mg_cycle_I,
                        mg_cycle_II, power_iteration, spectral_radius)
from .smoothers import BACKEND, GaussSeidel, available_backends

__all__ = ["estimate_condition", "DENSE_LIMIT", "SolveReport", "SolverConfig", "cg", "pcg",
           "lanczos_extremes", "MGHierarchyI", "MGHierarchyII", "build_mg_I", "build_mg_II",
           "mg_cycle_I", "mg_cycle_II", "power_iteration", "spectral_radius", "BACKEND",
           "GaussSeidel", "available_backends"]
