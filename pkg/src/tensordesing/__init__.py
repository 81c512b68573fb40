"""Riemannian optimization on a desingularization of the bounded Tucker-rank variety.

Submodules
----------
tensor_core      unfoldings, mode products, sparse and Tucker tensor handles
tucker_geometry  points, tangents, metric, projection, retraction, Hessian
stationarity     optimality residuals, the counterexample, Tucker parametrization
solvers          RGD, RCG, RTR and a product-space comparison method
completion       sampled objective, synthetic data, ratings ingestion
tt_geometry      tensor-train desingularization geometry
io               text file formats
cli              command-line driver
"""

from .errors import (
    BasePointError,
    DataError,
    DegenerateDirectionError,
    DimensionError,
    InconsistencyError,
    ModeIndexError,
    PreconditionError,
    RankError,
    TensorDesingError,
)
from .tucker_geometry import TuckerPoint, TuckerTangent, make_point, random_point

__version__ = "0.1.0"

__all__ = [
    "BasePointError", "DataError", "DegenerateDirectionError", "DimensionError", "InconsistencyError",
    "ModeIndexError", "PreconditionError", "RankError", "TensorDesingError", "TuckerPoint", "TuckerTangent",
    "make_point", "random_point", "__version__",
]
