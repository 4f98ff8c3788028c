"""Exception hierarchy used across the package."""


class QuadCurlError(Exception):
    """Base class for all errors raised by this package."""


class MeshFormatError(QuadCurlError):
    """Malformed mesh file."""


class TopologyError(QuadCurlError):
    """Mesh connectivity is not a valid 2-manifold with boundary."""


class MeshGenerationError(QuadCurlError):
    pass


class RefinementError(QuadCurlError):
    pass


class ElementError(QuadCurlError):
    """A local element computation failed (degenerate cell)."""


class SolverError(QuadCurlError):
    """Linear solve failed or the system is singular."""


class PipelineError(QuadCurlError):
    """An invariant of the Hodge pipeline was violated."""


class ConfigError(QuadCurlError):
    pass
