"""Exception hierarchy shared by all modules."""


class CrrtError(Exception):
    """Base class for every error raised by this package."""


class MeshError(CrrtError):
    pass


class NonConforming(MeshError):
    pass


class UnmarkedBoundary(MeshError):
    pass


class DegenerateElement(MeshError):
    pass


class InvalidIndex(MeshError):
    pass


class UnknownKind(MeshError):
    pass


class InvalidParams(MeshError):
    pass


class PointOutsideElement(CrrtError):
    pass


class QuadratureUnavailable(CrrtError):
    pass


class Incompatible(CrrtError):
    """Right-hand side is not in the range of the divergence."""


class PreconditionViolated(CrrtError):
    pass


class AssertionFailed(CrrtError):
    """A postcondition that holds in exact arithmetic failed numerically."""


class NoConvergence(CrrtError):
    pass


class SingularSystem(CrrtError):
    pass


class InvalidChain(CrrtError):
    pass


class CycleInconsistent(CrrtError):
    pass


class UnsupportedBoundary(CrrtError):
    pass
