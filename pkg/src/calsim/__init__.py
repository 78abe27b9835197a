"""calsim: reduced density of the Caldeira-Leggett model via low-rank bath kernels,
frozen Gaussian trajectories and a factorised Dyson series."""

__version__ = "0.1.0"

from .errors import CalsimError, ConfigError, MemoryBudgetError, NumericalError, SingularZError  # noqa: E402

__all__ = ["__version__", "CalsimError", "ConfigError", "MemoryBudgetError", "NumericalError", "SingularZError"]
