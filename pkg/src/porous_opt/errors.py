"""Exception types shared across the package."""


class PorousOptError(Exception):
    """Base class for all package errors."""


class MeshStructureError(PorousOptError):
    """Raised for malformed mesh input: bad indices, duplicate or degenerate
    triangles."""


class MeshConformityError(PorousOptError):
    """Raised when the triangulation is non-conforming (an edge shared by
    more than two triangles)."""


class ConfigError(PorousOptError):
    """Raised for invalid configuration: unknown keys, type mismatches,
    values outside their documented ranges."""


class DomainError(PorousOptError):
    """Raised when well placement is geometrically invalid (outside the
    domain, or overlapping patches)."""


class AssemblyError(PorousOptError):
    """Raised when matrix assembly encounters non-finite coefficient data."""


class CompatibilityError(PorousOptError):
    """Raised when a pure-Neumann right-hand side violates the zero-sum
    compatibility condition."""


class SolverError(PorousOptError):
    """Raised when a linear solve fails or exceeds its residual tolerance."""
