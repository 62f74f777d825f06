"""Sparse approximation of linear combinations by greedy recombination (GRIM)."""

__version__ = "0.1.0"

from .errors import ConfigError, DataError, GrimError, NumericalError
from .grim import (GrimConfig, GrimResult, ProblemInstance, normalize_instance,
                   run_grim)
from .recombination import (ReductionSystem, recombine_basic, recombine_tree,
                            recombination_thin)

__all__ = [
    "ConfigError", "DataError", "GrimError", "NumericalError",
    "GrimConfig", "GrimResult", "ProblemInstance", "normalize_instance", "run_grim",
    "ReductionSystem", "recombine_basic", "recombine_tree", "recombination_thin",
]
