"""Exception families shared across the pipeline.

Each family carries the process exit code the CLI reports for it. Concrete
errors are declared next to the code that raises them.
"""

EXIT_OK = 0
EXIT_IO = 2
EXIT_USAGE = 64
EXIT_DATA_FORMAT = 65
EXIT_NUMERICAL = 70


class FibagError(Exception):
    """Base class for all pipeline errors."""

    exit_code: int = EXIT_NUMERICAL


class DataFormatError(FibagError, ValueError):
    """Input files or records do not match the documented format."""

    exit_code = EXIT_DATA_FORMAT


class NumericalError(FibagError, ArithmeticError):
    """A numerical routine failed (factorization, quadrature, divergence)."""

    exit_code = EXIT_NUMERICAL


class UsageError(FibagError, ValueError):
    """Arguments are outside the documented domain of an operation."""

    exit_code = EXIT_USAGE


class NonFiniteError(NumericalError):
    """A scalar input that must be finite was NaN or infinite."""
