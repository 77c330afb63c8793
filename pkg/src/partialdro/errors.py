"""Exception types shared across the package."""


class PartialDroError(Exception):
    """Base class for all package-specific errors."""


class DimensionMismatch(PartialDroError):
    pass


class NotSymmetric(PartialDroError):
    pass


class NotStrictlyFeasible(PartialDroError):
    """Centered covariance of a moment block is not strictly positive definite."""


class OddDimension(PartialDroError):
    pass


class TooLarge(PartialDroError):
    pass


class TooManyVertices(PartialDroError):
    pass


class EmptyVertexSet(PartialDroError):
    pass


class NotFeasible(PartialDroError):
    """Input violates a representation's constraints beyond tolerance."""


class NotAcyclic(PartialDroError):
    pass


class DisconnectedArc(PartialDroError):
    """An arc does not lie on any source-to-sink path."""


class NotAFlow(PartialDroError):
    pass


class NotDoublyStochastic(PartialDroError):
    pass


class NoPerfectMatching(PartialDroError):
    """Numerical support too thin; retry with a larger support threshold."""


class PartitionMismatch(PartialDroError):
    pass


class IndexOutOfRange(PartialDroError, IndexError):
    pass


class NumericalFailure(PartialDroError):
    """The solver could not make further progress."""


class NegativePhi(PartialDroError):
    """A conditional covariance factor came out indefinite beyond tolerance."""


class NotChordalPattern(PartialDroError):
    pass


class NotPartialPsd(PartialDroError):
    pass


class ConfigInvalid(PartialDroError):
    pass
