"""Exception types shared across the package.

Each maps to a process exit code in the CLI: configuration problems exit 2,
data problems exit 3, numeric failures exit 4.
"""


class InterludeError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigurationError(InterludeError):
    """Invalid hyperparameter, config key, or option value."""

    exit_code = 2


class BatchAssemblyError(InterludeError):
    """Batch construction received inconsistent group sizes or lengths."""

    exit_code = 2


class DataError(InterludeError):
    """Dataset unreachable, malformed, or empty."""

    exit_code = 3


class NumericError(InterludeError):
    """Non-finite loss or other numeric failure during training."""

    exit_code = 4
