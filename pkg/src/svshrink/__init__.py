"""Singular value shrinkage priors for the mean of a matrix-variate Normal."""
from .exceptions import (DegenerateInputError, PoleError, RankDeficiencyError, SeriesConvergenceError,
                         ShrinkageError)
from .matnorm import ModelSpec
from .priors import PriorKind, Stein, Svs, Uniform
from .zonal import Partition, SeriesControl, hyp1f1_matrix

__version__ = "0.1.0"

__all__ = [
    "DegenerateInputError", "ModelSpec", "Partition", "PoleError", "PriorKind", "RankDeficiencyError",
    "SeriesControl", "SeriesConvergenceError", "ShrinkageError", "Stein", "Svs", "Uniform", "hyp1f1_matrix",
]
