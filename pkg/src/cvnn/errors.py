"""Exception types shared across the package."""


class CvnnError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(CvnnError):
    """Operand shapes are incompatible with the requested operation."""


class SingularityError(CvnnError):
    """Division by an exact zero; the message names the offending index."""


class ConfigError(CvnnError):
    """Invalid or missing configuration value; the message names the field."""


class ContractError(CvnnError):
    """A value violates an interface contract (e.g. a loss that is not real)."""


class UnsupportedOpError(CvnnError):
    """A primitive is not registered for scalar differentiation."""


class UnsupportedArchitectureError(CvnnError):
    """The analytic-gradient recursion only handles pure dense stacks."""


class DegenerateBatchError(CvnnError):
    """Batch statistics requested on a batch that is too small."""


class IntegrityError(CvnnError):
    """Stored indices or file contents are internally inconsistent."""


class DivergenceError(CvnnError):
    """Training produced a non-finite or runaway loss."""
