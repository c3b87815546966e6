"""scikit-learn style wrappers.

``X`` is the standardized ``n x m`` genotype matrix and ``y`` the phenotype;
fitting stores the full result in ``estimate_`` plus the usual trailing
underscore shortcuts.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ..core import as_ld, center, check_genotypes, check_phenotype
from ..exceptions import HeritabilityError
from ..kernels import euclidean_grm, mahalanobis_grm, whitened_design, LDWhitener
from .mle import c_heritability_mle, mle_single_kernel
from .moments import he_regression
from .two_component import ml_two_component


def _check_xy(X, y):
    X = check_genotypes(X)
    y = center(check_phenotype(y, X.shape[0]))
    return X, y


def _kernel(kind, X, ld):
    if kind == "euclidean":
        return euclidean_grm(X)
    if kind == "mahalanobis":
        if ld is None:
            raise HeritabilityError("the Mahalanobis kernel needs an LD matrix")
        return mahalanobis_grm(X, as_ld(ld))
    raise HeritabilityError(f"unknown kernel {kind!r}")


class _HeritabilityMixin:
    def _store(self, est):
        self.estimate_ = est
        self.h2_ = est.h2_hat
        self.eta2_ = est.eta2_hat
        self.sigma2_ = est.sigma2_hat
        return self

    def summary(self):
        check_is_fitted(self, "estimate_")
        return self.estimate_.to_dict()


class KernelMLE(_HeritabilityMixin, BaseEstimator):
    """Single-kernel Gaussian MLE of heritability.

    Parameters
    ----------
    kernel : {"euclidean", "mahalanobis"}
    ld : array-like or LDMatrix, optional
        Required for the Mahalanobis kernel.
    eta2_bounds : tuple of float
        Search interval for the signal-to-noise ratio.
    """

    def __init__(self, kernel="mahalanobis", ld=None, eta2_bounds=(1e-6, 1e6)):
        self.kernel = kernel
        self.ld = ld
        self.eta2_bounds = eta2_bounds

    def fit(self, X, y):
        X, y = _check_xy(X, y)
        self.n_features_in_ = X.shape[1]
        k = _kernel(self.kernel, X, self.ld)
        return self._store(mle_single_kernel(y, k, self.eta2_bounds))


class HERegression(_HeritabilityMixin, BaseEstimator):
    def __init__(self, kernel="euclidean", ld=None):
        self.kernel = kernel
        self.ld = ld

    def fit(self, X, y):
        X, y = _check_xy(X, y)
        self.n_features_in_ = X.shape[1]
        return self._store(he_regression(y, _kernel(self.kernel, X, self.ld)))


class CHeritabilityMLE(_HeritabilityMixin, BaseEstimator):
    """MLE of the heritability explained by a projection of the genotypes.

    With neither ``subset`` nor ``projection`` this is total heritability
    (the Mahalanobis-kernel MLE); with ``subset`` it is the partitioned
    heritability of those SNPs.
    """

    def __init__(self, ld, subset=None, projection=None, eta2_bounds=(1e-6, 1e6), compute_se=True):
        self.ld = ld
        self.subset = subset
        self.projection = projection
        self.eta2_bounds = eta2_bounds
        self.compute_se = compute_se

    def fit(self, X, y):
        X, y = _check_xy(X, y)
        self.n_features_in_ = X.shape[1]
        whitener = LDWhitener(self.ld, subset=self.subset, projection=self.projection).fit(X)
        w = whitened_design(X, whitener.ld_, whitener.projection_)
        self.k_ = w.k
        est = c_heritability_mle(y, w, self.eta2_bounds, self.compute_se)
        self.se_ = est.se
        return self._store(est)


class TwoComponentML(BaseEstimator):
    """Two-kernel (``S`` / complement) variance-components fit."""

    def __init__(self, subset, reml=False, max_iter=500):
        self.subset = subset
        self.reml = reml
        self.max_iter = max_iter

    def fit(self, X, y):
        X, y = _check_xy(X, y)
        self.n_features_in_ = X.shape[1]
        est = ml_two_component(y, X, self.subset, reml=self.reml, max_iter=self.max_iter)
        self.estimate_ = est
        self.sigma2_S_ = est.sigma2_S
        self.sigma2_Sc_ = est.sigma2_Sc
        self.sigma2_e_ = est.sigma2_e
        self.h2_S_ = est.h2_S
        return self

    def summary(self):
        check_is_fitted(self, "estimate_")
        return self.estimate_.to_dict()
