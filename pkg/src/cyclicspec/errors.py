"""Exception hierarchy shared by all modules."""


class CyclicSpecError(Exception):
    """Base class for every error raised by this package."""


class NonCyclicError(CyclicSpecError):
    """The supplied data cannot produce a cyclic vector."""


class TruncationError(CyclicSpecError):
    """A computation would reach beyond the exactness horizon of a model."""


class UnsupportedModelError(CyclicSpecError):
    """The operation needs a property (uniform r_A, unitarity, ...) the model lacks."""


class NormBoundError(CyclicSpecError):
    """A self-adjoint generator violates the required norm bound."""


class KernelVectorError(CyclicSpecError):
    """A self-adjoint generator has a nontrivial kernel."""


class NotNormalError(CyclicSpecError):
    """A matrix expected to be normal fails the normality check."""


class GridConstructionError(CyclicSpecError):
    """No admissible jitter keeps the cut lines off the atomic lines."""


class InsufficientNError(CyclicSpecError):
    """A box that must carry counting mass is empty at this N."""


class ConfigError(CyclicSpecError):
    """Malformed run configuration."""
