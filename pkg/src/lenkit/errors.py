"""Exception hierarchy shared by the library and the command line."""


class LenError(Exception):
    """Base class for all lenkit errors."""

    exit_code = 1


class ConfigError(LenError, ValueError):
    """Invalid configuration, option combination or CLI argument."""

    exit_code = 1


class DataError(LenError, ValueError):
    """Malformed or out-of-range input data."""

    exit_code = 2


class NumericError(LenError, ArithmeticError):
    """Non-finite values encountered during training."""

    exit_code = 3

    def __init__(self, message, epoch=None, layer=None):
        super().__init__(message)
        self.epoch = epoch
        self.layer = layer


class FormulaError(LenError, ValueError):
    """A formula references unknown concepts or is otherwise malformed."""

    exit_code = 1


class FormulaSizeError(FormulaError):
    """A normal-form conversion would exceed the configured size limit."""


class ParseError(FormulaError):
    """Formula text does not conform to the grammar."""

    def __init__(self, message, position):
        super().__init__(f"{message} at position {position}")
        self.position = position
