"""Heavy-tailed PCA for superstatistical data ``X = sqrt(A) G``."""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    DegenerateSampleError,
    HtpcaError,
    IllConditionedRowError,
    NonConvergenceError,
    NotPSDError,
    NumericalError,
    ParameterDomainError,
    ParseError,
    ZeroColumnError,
)
from .sampling import GaussianSpec, RngSeed, StableParams, Subordinator, cholesky, sample_standard_stable, \
    sample_subordinator, sample_superstatistical
from .robust import CauchyParams, cauchy_fit, location_vector, marginal_scale
from .shape import DataQualityWarning, ShapeEstimate, estimate_shape, psd_project, rho_from_ratio, tyler_scatter
from .logcorr import LogLut, SubordinatorLogMoments, build_log_lut, subordinator_log_moments
from .pca import PcaModel, cosine_similarity, fit_pca, log_cost, project_reconstruct, sym_eigen
