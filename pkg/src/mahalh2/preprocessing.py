"""Genotype standardization as a transformer."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .core import check_genotypes, check_mafs, standardize
from .exceptions import HeritabilityError


class GenotypeStandardizer(TransformerMixin, BaseEstimator):
    """Map 0/1/2 allele counts to ``(f - 2p) / sqrt(2p(1 - p))``.

    Parameters
    ----------
    mafs : array-like, optional
        Population minor-allele frequencies. When omitted the frequency of
        the counted allele is estimated from the genotypes passed to
        :meth:`fit` (and may then exceed 0.5).
    """

    def __init__(self, mafs=None):
        self.mafs = mafs

    def fit(self, X, y=None):
        X = check_genotypes(X, name="raw genotypes")
        if not np.all(np.isin(X, (0, 1, 2))):
            raise HeritabilityError("raw genotypes must be allele counts in {0, 1, 2}")
        if self.mafs is None:
            self.mafs_ = X.mean(axis=0) / 2.0
            if np.any(self.mafs_ <= 0) or np.any(self.mafs_ >= 1):
                raise HeritabilityError("monomorphic SNP: sample allele frequency is 0 or 1")
        else:
            self.mafs_ = check_mafs(self.mafs)
        if self.mafs_.size != X.shape[1]:
            raise HeritabilityError("MAF vector does not match the number of SNPs")
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "mafs_")
        if self.mafs is None:
            q = self.mafs_
            return (np.asarray(X, dtype=float) - 2.0 * q) / np.sqrt(2.0 * q * (1.0 - q))
        return standardize(X, self.mafs_)
