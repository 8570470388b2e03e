"""Exception types shared across the package."""


class PosformError(Exception):
    """Base class for all engine errors."""


class InvalidSpaceError(PosformError, ValueError):
    pass


class SpaceMismatchError(PosformError, ValueError):
    pass


class SignatureError(PosformError, ValueError):
    """Bad link signature, split, or gluing request."""


class NetworkError(PosformError, ValueError):
    pass


class MissingBoundaryError(NetworkError):
    def __init__(self, links):
        self.links = tuple(links)
        super().__init__("open links without boundary: " + ", ".join(self.links))


class CyclicOrientationError(NetworkError):
    pass


class HierarchyError(PosformError, ValueError):
    """Boundary conditions violate 0 <= b <= c."""


class ExactnessError(PosformError, ValueError):
    """A declared gluing of a classical theory is not exact."""

    def __init__(self, message, witness=None):
        self.witness = witness
        super().__init__(message)


class NormalizationError(PosformError, ValueError):
    """A state cannot be normalized (zero or negative total weight)."""
