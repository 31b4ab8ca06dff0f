"""Vecchia approximations to Gaussian-process likelihoods.

Orderings, ordered nearest neighbors, automatic grouping, the sparse
inverse-Cholesky factor, likelihood evaluation and fitting, prediction and
conditional simulation, and dense-oracle quality measures.
"""

from ._backend import name as backend_name
from ._backend import set_backend, use_backend
from .core import (
    FactorizationError,
    LikelihoodPlan,
    NumericalError,
    RankDeficientError,
    SparseInverseCholesky,
    build_gamma_tilde,
    dense_loglik,
    loglik,
    profile_beta,
    vecchia_loglik,
)
from .covariance import (
    CovarianceModel,
    DuplicateLocationWarning,
    bessel_k,
    build_cov_matrix,
    cross_cov_matrix,
    kernel,
)
from .grouping import BlockPartition, build_grouped_sets, group_blocks, lossless_partition
from .inference import FitConfig, FitResult, fit
from .locations import LocationSet, lonlat_to_xyz, regular_grid
from .neighbors import NeighborSets, full_conditioning, nn_ordered, nn_ordered_brute, nn_ordered_fast
from .ordering import (
    Permutation,
    order_ammd,
    order_middle_out,
    order_mmd_exact,
    order_points,
    order_random,
    order_sorted_coordinate,
)
from .quality import (
    DenseGaussian,
    InformationMatrices,
    baseline_block_independent,
    baseline_taper,
    godambe_information,
    kl_divergence_general,
    kl_divergence_vecchia,
)
from .simulate import (
    PredictionSetup,
    conditional_draw,
    conditional_ensemble,
    conditional_expectation,
    prediction_setup,
    unconditional_draw,
)

__version__ = "0.1.0"
