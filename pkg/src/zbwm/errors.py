class ZbwmError(Exception):
    """Base class for all errors raised by this package."""


class ImageFormatError(ZbwmError):
    pass


class DimensionError(ZbwmError, ValueError):
    pass


class NumericalError(ZbwmError, ArithmeticError):
    pass


class NotDetectedError(ZbwmError):
    """Raised when an attack that needs a detected input receives a clean one."""


class SidecarError(ZbwmError):
    pass


class SidecarTimeout(SidecarError, TimeoutError):
    pass
