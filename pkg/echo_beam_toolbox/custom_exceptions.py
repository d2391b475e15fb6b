"""
Exceptions shared across the echo-beam-toolbox package
"""


class DomainError(ValueError):
    """Error raised when an input lies outside the domain an operation is defined on"""

    def __init__(self, message):
        super().__init__(message)


class ShapeMismatchError(DomainError):
    """Error raised when array shapes or channel counts do not agree"""

    def __init__(self, message):
        super().__init__(message)


class StftConfigMismatchError(DomainError):
    """Error raised when a spectrogram is inverted with a different STFT configuration"""

    def __init__(self, message):
        super().__init__(message)


class TapeError(RuntimeError):
    """Error raised when a gradient tape is misused (e.g. backward called twice)"""

    def __init__(self, message):
        super().__init__(message)


class NumericalFailureError(ArithmeticError):
    """Error raised when a loss, gradient or input becomes non-finite"""

    def __init__(self, message):
        super().__init__(message)


class ConfigError(ValueError):
    """Error raised for unknown config keys, ill-typed overrides or unreadable config files"""

    def __init__(self, message):
        super().__init__(message)


class ConfigMismatchError(ConfigError):
    """Error raised when a checkpoint was trained with a different model configuration"""

    def __init__(self, message):
        super().__init__(message)


class CheckpointError(IOError):
    """Error raised if a checkpoint file is corrupt, truncated or of an unknown version"""

    def __init__(self, message):
        super().__init__(message)
