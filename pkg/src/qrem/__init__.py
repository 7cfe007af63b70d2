"""Characterization and mitigation of correlated qubit readout noise."""
from .errors import CoverageError, QremError, SingularModelError, ValidationError

__version__ = "0.1.0"

__all__ = ["CoverageError", "QremError", "SingularModelError", "ValidationError", "__version__"]
