"""Exception hierarchy.

Every error raised by the package derives from :class:`BallShapeError` so
callers (and the command line front end) can separate domain failures from
I/O problems.
"""


class BallShapeError(Exception):
    """Base class for all package errors."""


class ParseError(BallShapeError):
    """Malformed OFF/OBJ input or a spec file that cannot be read."""


class TopologyError(BallShapeError):
    """Open surface, non-manifold edge, unorientable or disconnected mesh."""


class DegenerateFace(BallShapeError):
    """A triangle whose area falls below the degeneracy floor."""


class DomainError(BallShapeError, ValueError):
    """Argument outside the domain of a formula."""


class InsideTestAmbiguous(BallShapeError):
    """Ray parity could not be resolved after jitter retries."""


class ZeroNormal(BallShapeError):
    """Incident face normals cancel at a vertex."""

    def __init__(self, vertex, msg=None):
        self.vertex = int(vertex)
        super().__init__(msg or f"incident normals cancel at vertex {vertex}")


class ChartError(BallShapeError):
    """Base class for local chart failures; carries the offending vertex."""

    def __init__(self, vertex, msg):
        self.vertex = None if vertex is None else int(vertex)
        super().__init__(msg)


class InsufficientNeighbors(ChartError):
    pass


class IllConditionedFit(ChartError):
    pass


class NonSPD(ChartError):
    pass


class RayMiss(ChartError):
    pass


class TangentDegenerate(BallShapeError):
    """Direction is (numerically) parallel to the surface normal."""


class ExpressionError(BallShapeError):
    """Invalid functional expression, or NaN / division by zero at a vertex."""

    def __init__(self, msg, vertex=None):
        self.vertex = None if vertex is None else int(vertex)
        if vertex is not None:
            msg = f"{msg} (vertex {vertex})"
        super().__init__(msg)


class NoCertifiableEpsilon(BallShapeError):
    pass


class InfeasibleConstraints(BallShapeError):
    pass


class InitialMeshNotCertified(BallShapeError):
    pass


class Stalled(BallShapeError):
    pass


class ElementNotCertified(BallShapeError):
    def __init__(self, index, msg=None):
        self.index = int(index)
        super().__init__(msg or f"sequence element {index} is not certified")
