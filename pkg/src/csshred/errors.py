"""Exception hierarchy shared by every stage of the pipeline."""


class CSShredError(Exception):
    """Base class for all errors raised by this package."""


# field handling
class NonFiniteError(CSShredError, ValueError):
    pass


class ConstantDataError(CSShredError, ValueError):
    pass


class NoValidLocationsError(CSShredError, ValueError):
    pass


class InsufficientLocationsError(CSShredError, ValueError):
    pass


class LagTooLargeError(CSShredError, ValueError):
    pass


class TooFewSamplesError(CSShredError, ValueError):
    pass


# subsampling
class OutOfRangeError(CSShredError, ValueError):
    pass


class DimMismatchError(CSShredError, ValueError):
    pass


# operators and solver
class IndexOutOfRangeError(CSShredError, IndexError):
    pass


class ShapeMismatchError(CSShredError, ValueError):
    pass


class NumericalFailureError(CSShredError, ArithmeticError):
    pass


class AllMissingError(CSShredError, ValueError):
    pass


# training
class NonFiniteGradientError(CSShredError, ArithmeticError):
    pass


class NonFiniteLossError(CSShredError, ArithmeticError):
    pass


class NonFiniteUpdateError(CSShredError, ArithmeticError):
    pass


# metrics
class ZeroReferenceError(CSShredError, ValueError):
    pass


class ImageTooSmallError(CSShredError, ValueError):
    pass


# pipeline
class ConfigError(CSShredError, ValueError):
    pass


class ConfigMismatchError(CSShredError, ValueError):
    pass
