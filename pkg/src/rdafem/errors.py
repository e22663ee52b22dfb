"""Exception hierarchy."""


class RdaError(Exception):
    """Base class for all library errors."""

    code = "error"


class GeometryError(RdaError):
    code = "geometry"


class DegenerateInterface(GeometryError):
    code = "degenerate_interface"


class RootFindFailure(GeometryError):
    code = "root_find_failure"


class ProjectionDivergence(GeometryError):
    code = "projection_divergence"


class EmptySide(RdaError):
    code = "empty_side"


class SigmaExhausted(RdaError):
    code = "sigma_exhausted"


class PatchInfeasible(RdaError):
    code = "patch_infeasible"


class RankDeficient(RdaError):
    code = "rank_deficient"


class SingularB(RdaError):
    code = "singular_b"


class MissingReconstruction(RdaError):
    code = "missing_reconstruction"


class NonPositivePenalty(RdaError):
    code = "non_positive_penalty"


class OrphanFineDof(RdaError):
    code = "orphan_fine_dof"


class Breakdown(RdaError):
    code = "breakdown"


class NonlinearPreconditioner(Breakdown):
    code = "nonlinear_preconditioner"


class IndefiniteLevel(RdaError):
    code = "indefinite_level"


class FactorizationFailure(RdaError):
    code = "factorization_failure"


class MissingExact(RdaError):
    code = "missing_exact"


class ConfigError(RdaError):
    code = "config"
