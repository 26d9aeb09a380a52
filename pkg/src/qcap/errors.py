"""Exception hierarchy shared by every qcap module."""


class QcapError(Exception):
    """Base class for all qcap errors."""


class NotHermitian(QcapError, ValueError):
    pass


class SingularMatrix(QcapError, ValueError):
    pass


class DimensionOverflow(QcapError, ValueError):
    pass


class BadFactorization(QcapError, ValueError):
    pass


class DimensionMismatch(QcapError, ValueError):
    pass


class NotDensityMatrix(QcapError, ValueError):
    pass


class NotTracePreserving(QcapError, ValueError):
    pass


class NotCompletelyPositive(QcapError, ValueError):
    def __init__(self, message, min_choi_eigenvalue=None):
        super().__init__(message)
        self.min_choi_eigenvalue = min_choi_eigenvalue


class BadParameter(QcapError, ValueError):
    pass


class ElementsExceedIdentity(QcapError, ValueError):
    pass


class InvalidPovm(QcapError, ValueError):
    pass


class InternalInconsistency(QcapError, RuntimeError):
    pass


class SingularArgument(QcapError, ValueError):
    pass


class NotConverged(QcapError, RuntimeError):
    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class EnumerationTooLarge(QcapError, ValueError):
    pass


class NotBlockCode(QcapError, ValueError):
    pass


class ParameterOutOfRange(QcapError, ValueError):
    pass


class SingularElement(QcapError, ValueError):
    pass


class ConfigError(QcapError, ValueError):
    pass
