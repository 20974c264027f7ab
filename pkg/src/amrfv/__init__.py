"""Adaptive quad/octree finite-volume solver for barotropic two-fluid flows."""

from amrfv.errors import ConfigError, ContractError, EosError, VacuumError

__version__ = "0.1.0"

__all__ = ["ConfigError", "ContractError", "EosError", "VacuumError", "__version__"]
