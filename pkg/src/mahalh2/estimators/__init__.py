from ._profile import KernelSpectrum, ProfileLikelihoodCache
from .mle import AsymptoticVariance, asymptotic_se, c_heritability_mle, mle_single_kernel
from .moments import he_regression
from .two_component import fit_two_component, ml_two_component, subset_kernels
from .api import CHeritabilityMLE, HERegression, KernelMLE, TwoComponentML

__all__ = [
    "KernelSpectrum",
    "ProfileLikelihoodCache",
    "AsymptoticVariance",
    "asymptotic_se",
    "c_heritability_mle",
    "mle_single_kernel",
    "he_regression",
    "fit_two_component",
    "ml_two_component",
    "subset_kernels",
    "KernelMLE",
    "CHeritabilityMLE",
    "HERegression",
    "TwoComponentML",
]
