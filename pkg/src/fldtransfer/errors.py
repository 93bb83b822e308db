"""Exception hierarchy. Every error raised by the library derives from
:class:`FldTransferError`, which is itself a ``ValueError``."""


class FldTransferError(ValueError):
    pass


# stat-core
class NonSymmetric(FldTransferError):
    pass


class IndefiniteCovariance(FldTransferError):
    pass


class DimensionTooSmall(FldTransferError):
    pass


# fld
class MissingClass(FldTransferError):
    pass


class DegenerateCovariance(FldTransferError):
    pass


class SingularCovariance(FldTransferError):
    pass


class ZeroSignal(FldTransferError):
    pass


class DimensionMismatch(FldTransferError):
    pass


# transfer
class EmptySources(FldTransferError):
    pass


class ZeroResultant(FldTransferError):
    pass


class ZeroVector(FldTransferError):
    pass


class DegenerateDraw(FldTransferError):
    pass


# dataset
class ParseError(FldTransferError):
    pass


class InvariantViolation(FldTransferError):
    pass


class TooFewWindows(FldTransferError):
    pass


class TooFewPairs(FldTransferError):
    pass
