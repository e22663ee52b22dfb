"""Reconstructed discontinuous approximation for elliptic interface problems on unfitted meshes."""
from . import assembly, cases, geometry, mesh, norms, reconstruction, solvers
from .errors import RdaError

__version__ = "0.1.0"

__all__ = ["assembly", "cases", "geometry", "mesh", "norms", "reconstruction", "solvers",
           "RdaError", "__version__"]
