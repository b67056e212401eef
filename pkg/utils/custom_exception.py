import sys


class CustomException(Exception):
    """
    Root exception for the dialogue coherence toolkit.
    """

    def __init__(self, error_message: str, error_detail: Exception = None):
        """
        Initialize the custom exception.

        Args:
            error_message: A descriptive error message
            error_detail: The original exception that caused this error
        """
        super().__init__(error_message)
        self.error_message = error_message
        self.error_detail = error_detail

        if error_detail:
            _, _, exc_tb = sys.exc_info()
            if exc_tb:
                self.line_number = exc_tb.tb_lineno
                self.file_name = exc_tb.tb_frame.f_code.co_filename
            else:
                self.line_number = None
                self.file_name = None
        else:
            self.line_number = None
            self.file_name = None

    def __str__(self):
        """
        Return a formatted error message.
        """
        if self.line_number and self.file_name:
            return f"Error occurred in {self.file_name} at line {self.line_number}: {self.error_message}"
        else:
            return f"Error: {self.error_message}"


class DimensionError(CustomException):
    """A tensor does not have the shape an operation expects."""


class PreconditionError(CustomException):
    """An operation was called outside its domain (empty sequence, fully masked input, ...)."""


class ConfigurationError(CustomException):
    """Invalid or unknown configuration value."""


class UsageError(CustomException):
    """Bad command-line usage or unusable inputs."""


class DataError(CustomException):
    """Input data violates a contract (label out of range, missing labels, ...)."""


class AutodiffError(CustomException):
    """Misuse of a gradient tape."""


class OptimizationError(CustomException):
    """Optimizer could not apply an update."""


class CompatibilityError(CustomException):
    """Checkpoint and inputs were produced with different vocabularies."""


class ParseError(CustomException):
    """Malformed input file; carries the file path and 1-based line number."""

    def __init__(self, error_message: str, path=None, line_number=None):
        location = ""
        if path is not None:
            location = f"{path}"
            if line_number is not None:
                location += f":{line_number}"
            location += ": "
        super().__init__(f"{location}{error_message}")
        self.path = path
        self.line = line_number


class DivergenceError(CustomException):
    """Training produced a non-finite loss."""

    def __init__(self, epoch: int, batch: int, loss: float):
        super().__init__(f"Non-finite loss {loss} at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch


class NotPerturbable(CustomException):
    """A dialogue admits no valid perturbation of the requested kind."""
