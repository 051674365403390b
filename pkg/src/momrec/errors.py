"""Exception hierarchy shared by every stage.

Each error carries an ``exit_code`` so the command line front-end can map
failures onto its documented exit statuses without a lookup table.
"""


class MomrecError(Exception):
    """Base class for all library errors."""

    exit_code = 4

    def __init__(self, message="", **details):
        super().__init__(message)
        self.details = details


class SchemaError(MomrecError):
    exit_code = 2


class QuadratureFailure(MomrecError):
    exit_code = 3


# polyalg
class ZeroPolynomial(MomrecError):
    pass


class SingularHankel(MomrecError):
    pass


class IllConditioned(UserWarning):
    """Warning raised when a Vandermonde system exceeds the condition cap."""


# convdual
class ZeroAtOrigin(MomrecError):
    pass


class LengthMismatch(MomrecError):
    pass


class VanishingFhat(MomrecError):
    pass


# prony
class NodeAtZero(MomrecError):
    pass


class OffCircleNode(MomrecError):
    pass


# dfinite
class InsufficientMoments(MomrecError):
    pass


class EmptyNullspace(MomrecError):
    pass


class JumpCountMismatch(MomrecError):
    pass


class SingularLeadingCoefficient(MomrecError):
    pass


class RankDeficientBasis(MomrecError):
    pass


# signals
class UnsupportedPiece(MomrecError):
    pass

