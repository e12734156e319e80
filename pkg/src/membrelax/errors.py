"""Exception types shared across the package."""


class MembrelaxError(Exception):
    """Base class for all package errors."""


class DomainError(MembrelaxError, ValueError):
    """Input outside the domain of an operation (non-finite matrix, bad shape)."""


class ModelError(MembrelaxError, ValueError):
    """A density model is malformed or fails one of its certificates."""


class ConvergenceError(MembrelaxError, RuntimeError):
    """A numerical procedure did not converge.

    ``diagnostics`` carries whatever was known when the procedure gave up.
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class SceneError(MembrelaxError, ValueError):
    """A planar scene or bending measure is inconsistent."""

    def __init__(self, message, findings=None):
        super().__init__(message)
        self.findings = list(findings or [])


class AmbiguityError(SceneError):
    """Carrier geometry nearly, but not exactly, coincides."""


class ResolutionError(MembrelaxError, ValueError):
    """A slab grid is too coarse for the feature it must represent."""

    def __init__(self, message, min_shape=None):
        super().__init__(message)
        self.min_shape = min_shape


class QuadratureError(MembrelaxError, RuntimeError):
    """Adaptive quadrature ran out of budget; ``partial`` is the best estimate."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial
