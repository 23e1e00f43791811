"""Unit commitment with frequency-security constraints built on cubic Bernstein splines."""

from .errors import (BuildError, ConfigError, DomainError, FreqUcError, NumericalError, ParseError, SolverError,
                     ValidationError)
from .grid import FrequencyPolicy, PowerSystem, load_system
from .sfr import SfrScenario, qss_closed_form, rocof_initial, simulate

__version__ = "0.1.0"

__all__ = [
    "BuildError", "ConfigError", "DomainError", "FreqUcError", "NumericalError", "ParseError", "SolverError",
    "ValidationError", "FrequencyPolicy", "PowerSystem", "load_system", "SfrScenario", "qss_closed_form",
    "rocof_initial", "simulate",
]
