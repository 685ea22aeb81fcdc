"""Exception types shared across the package."""


class GeometryError(ValueError):
    """A geometric quantity is undefined for the given inputs."""


class SingularGeometryError(GeometryError):
    """A construction degenerates (parallel lines, polar elevation, ...)."""


class NonIdentifiableError(RuntimeError):
    """A Fisher information matrix is singular; some parameter combination
    cannot be estimated from the given measurements.

    Attributes
    ----------
    eigenvalues : ndarray
        Eigenvalues of the unit-normalized matrix, ascending.
    null_directions : ndarray
        Columns spanning the unobservable subspace, in the original
        parameter coordinates.
    """

    def __init__(self, message, eigenvalues=None, null_directions=None):
        super().__init__(message)
        self.eigenvalues = eigenvalues
        self.null_directions = null_directions


class ConfigError(ValueError):
    """A scenario configuration is malformed or violates its schema."""
