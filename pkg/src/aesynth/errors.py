"""Exception types shared across the toolkit."""


class AesynthError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(AesynthError, ValueError):
    """A value violates a documented invariant or precondition."""


class GridMismatchError(AesynthError, ValueError):
    """Two gridded quantities that must share a grid do not."""


class InvalidEventError(AesynthError, ValueError):
    """A transmit event is malformed or inconsistent with the operation."""


class MethodMismatchError(AesynthError, ValueError):
    """Requested reconstruction method does not match the recorded events."""


class NoPeakError(AesynthError, ValueError):
    """A region of interest contains no usable peak."""


class OneSidedProfileError(AesynthError, ValueError):
    """A profile never crosses half-maximum on one side; the width is undefined."""


class UndefinedSnrError(AesynthError, ValueError):
    """SNR is undefined because the noise region has zero variance."""


class FileFormatError(AesynthError, ValueError):
    """A file does not conform to the documented on-disk format."""


class ScenarioError(AesynthError, ValueError):
    """A scenario file is malformed.  ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")
