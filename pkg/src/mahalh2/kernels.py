"""Genetic relationship matrices and the LD-whitened design."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .core import KernelMatrix, LDMatrix, Projection, as_ld, check_genotypes
from .exceptions import HeritabilityError, IllConditionedError


def _gram(a, divisor):
    k = (a @ a.T) / divisor
    return 0.5 * (k + k.T)


def euclidean_grm(z):
    """``K = Z Z^T / m``."""
    z = check_genotypes(z)
    return KernelMatrix(_gram(z, z.shape[1]), kind="euclidean", divisor=z.shape[1])


def mahalanobis_grm(z, sigma):
    """``K = Z sigma^{-1} Z^T / m``; the ``1/m`` keeps ``E[K_ii] = 1`` for ``z ~ N(0, sigma)``."""
    z = check_genotypes(z)
    ld = as_ld(sigma)
    if ld.m != z.shape[1]:
        raise HeritabilityError(f"LD matrix is {ld.m} x {ld.m} but genotypes have {z.shape[1]} SNPs")
    m = z.shape[1]
    k = (ld.apply_inv(z) @ z.T) / m
    return KernelMatrix(0.5 * (k + k.T), kind="mahalanobis", divisor=m)


def projection_for_subset(subset, m):
    return Projection.subset(subset, m)


@dataclass(frozen=True)
class WhitenedDesign:
    """``W = Z C (C^T sigma C)^{-1/2}``: rows are i.i.d. ``N(0, I_k)`` for Gaussian genotypes."""

    w: np.ndarray
    projection: Projection
    ld_digest: str

    @property
    def k(self):
        return self.w.shape[1]

    @property
    def n(self):
        return self.w.shape[0]


def _compressed_ld(ld, projection):
    """``C^T sigma C`` as an :class:`LDMatrix`."""
    if projection.kind == "identity":
        return ld
    if projection.kind == "subset":
        try:
            return ld.submatrix(projection.indices)
        except IllConditionedError as exc:
            raise IllConditionedError(f"sigma restricted to the subset is singular: {exc}") from None
    c = np.asarray(projection.matrix)
    try:
        return LDMatrix(c.T @ ld.sigma @ c)
    except IllConditionedError as exc:
        raise IllConditionedError(f"C^T sigma C is rank deficient: {exc}") from None


def whitened_design(z, sigma, projection=None):
    """Whiten the genotypes projected on ``projection`` (identity by default)."""
    z = check_genotypes(z)
    ld = as_ld(sigma)
    m = z.shape[1]
    if ld.m != m:
        raise HeritabilityError(f"LD matrix is {ld.m} x {ld.m} but genotypes have {m} SNPs")
    if projection is None:
        projection = Projection.identity(m)
    if projection.m != m:
        raise HeritabilityError(f"projection is defined on {projection.m} SNPs, not {m}")
    inner = _compressed_ld(ld, projection)
    if projection.kind == "identity":
        zc = z
    elif projection.kind == "subset":
        zc = z[:, projection.indices]
    else:
        zc = z @ projection.matrix
    w = inner.apply_inv_sqrt(zc)
    w.setflags(write=False)
    return WhitenedDesign(w=w, projection=projection, ld_digest=ld.digest)


class LDWhitener(TransformerMixin, BaseEstimator):
    """Transformer wrapper around :func:`whitened_design`.

    Parameters
    ----------
    ld : array-like or LDMatrix
        SNP covariance ``sigma``.
    subset : array-like of int, optional
        Coordinate projection; mutually exclusive with ``projection``.
    projection : array-like of shape (m, k), optional
        General full-column-rank projection matrix.
    """

    def __init__(self, ld, subset=None, projection=None):
        self.ld = ld
        self.subset = subset
        self.projection = projection

    def _projection(self, m):
        if self.subset is not None and self.projection is not None:
            raise HeritabilityError("give either subset or projection, not both")
        if self.subset is not None:
            return Projection.subset(self.subset, m)
        if self.projection is not None:
            p = self.projection
            return p if isinstance(p, Projection) else Projection.general(p)
        return Projection.identity(m)

    def fit(self, X, y=None):
        X = check_genotypes(X)
        self.ld_ = as_ld(self.ld)
        self.projection_ = self._projection(X.shape[1])
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "projection_")
        return np.array(whitened_design(X, self.ld_, self.projection_).w)
