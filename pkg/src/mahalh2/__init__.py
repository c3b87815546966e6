"""Euclidean- and Mahalanobis-kernel heritability estimation for GWAS-style data."""

__version__ = "0.1.0"

from .core import (
    EffectVector,
    HeritabilityEstimate,
    KernelMatrix,
    LDMatrix,
    Projection,
    TwoComponentEstimate,
    center,
    estimate_mafs,
    standardize,
    standardize_sample,
)
from .estimators import (
    CHeritabilityMLE,
    HERegression,
    KernelMLE,
    TwoComponentML,
    asymptotic_se,
    c_heritability_mle,
    he_regression,
    ml_two_component,
    mle_single_kernel,
)
from .exceptions import (
    ConfigError,
    ConvergenceError,
    CopulaError,
    HeritabilityError,
    IllConditionedError,
    NonIdentifiableError,
    ZeroVarianceError,
)
from .kernels import (
    LDWhitener,
    WhitenedDesign,
    euclidean_grm,
    mahalanobis_grm,
    projection_for_subset,
    whitened_design,
)
from .preprocessing import GenotypeStandardizer
from .truth import true_c_h2, true_h2_fixed, true_partitioned_h2, truth_report

