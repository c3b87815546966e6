"""Population heritability of a fixed-effects linear model.

For ``y = z^T u + e`` with ``Cov(z) = sigma`` these are the targets the
estimators are compared against: total heritability, the heritability
attributable to a SNP subset (through the conditional covariance of the
remaining SNPs) and the general projection form.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .core import EffectVector, Projection, as_ld, check_subset
from .exceptions import HeritabilityError, IllConditionedError, ZeroVarianceError

MAX_CONDITION = 1e12


def _effects(u):
    return u.u if isinstance(u, EffectVector) else np.asarray(u, dtype=float)


def _sigma(sigma):
    return as_ld(sigma).sigma if not isinstance(sigma, np.ndarray) else np.asarray(sigma, float)


def _total_variance(g, sigma_e2):
    if sigma_e2 < 0:
        raise HeritabilityError("sigma_e2 must be nonnegative")
    total = g + sigma_e2
    if total <= 0:
        raise ZeroVarianceError("total phenotypic variance is zero")
    return total


def _chol(a):
    w = np.linalg.eigvalsh(a)
    if w[0] <= 0 or w[-1] / w[0] > MAX_CONDITION:
        raise IllConditionedError(
            f"matrix is singular or ill-conditioned (condition number "
            f"{w[-1] / w[0] if w[0] > 0 else np.inf:.3g})"
        )
    return cho_factor(a, lower=True)


def genetic_variance(u, sigma):
    u = _effects(u)
    s = _sigma(sigma)
    return float(u @ s @ u)


def true_h2_fixed(u, sigma, sigma_e2):
    """``u' sigma u / (u' sigma u + sigma_e2)``."""
    g = genetic_variance(u, sigma)
    return g / _total_variance(g, sigma_e2)


def schur_term(u, sigma, subset):
    """``u_Sc' sigma_{Sc|S} u_Sc``: genetic variance left after conditioning on ``z_S``."""
    u = _effects(u)
    s = _sigma(sigma)
    m = s.shape[0]
    idx = check_subset(subset, m)
    comp = np.setdiff1d(np.arange(m), idx)
    if comp.size == 0:
        return 0.0
    cf = _chol(s[np.ix_(idx, idx)])
    cross = s[np.ix_(idx, comp)]
    cond = s[np.ix_(comp, comp)] - cross.T @ cho_solve(cf, cross)
    uc = u[comp]
    return float(uc @ cond @ uc)


def true_partitioned_h2(u, sigma, subset, sigma_e2):
    """Heritability attributable to the SNPs in ``subset``."""
    g = genetic_variance(u, sigma)
    total = _total_variance(g, sigma_e2)
    return (g - schur_term(u, sigma, subset)) / total


def projected_variance(u, sigma, projection):
    """``u' sigma C (C' sigma C)^{-1} C' sigma u``."""
    u = _effects(u)
    s = _sigma(sigma)
    if not isinstance(projection, Projection):
        projection = Projection.general(projection)
    if projection.kind == "identity":
        return float(u @ s @ u)
    if projection.kind == "subset":
        idx = projection.indices
        b = s[idx, :] @ u
        inner = s[np.ix_(idx, idx)]
    else:
        # with sigma = L L', the numerator is |Q' L' u|^2 for A = L' C = Q R;
        # this avoids squaring the condition number of C
        low = np.linalg.cholesky(s)
        q, r = np.linalg.qr(low.T @ np.asarray(projection.matrix))
        d = np.abs(np.diag(r))
        if d.min() <= d.max() / np.sqrt(MAX_CONDITION):
            raise IllConditionedError("C' sigma C is singular or ill-conditioned")
        b = q.T @ (low.T @ u)
        return float(b @ b)
    cf = _chol(inner)
    return float(b @ cho_solve(cf, b))


def true_c_h2(u, sigma, projection, sigma_e2):
    """Heritability explained by the projected genotypes ``C' z``."""
    g = genetic_variance(u, sigma)
    total = _total_variance(g, sigma_e2)
    return projected_variance(u, sigma, projection) / total


def _gamma_matrix(sigma, subset):
    """Quadratic-form matrix of the partitioned numerator, ``u' Gamma u``.

    ``Gamma`` equals ``sigma`` except on the complement block, which is
    replaced by ``sigma_{Sc,S} sigma_S^{-1} sigma_{S,Sc}``.
    """
    s = _sigma(sigma)
    m = s.shape[0]
    idx = check_subset(subset, m)
    comp = np.setdiff1d(np.arange(m), idx)
    g = s.copy()
    if comp.size:
        cf = _chol(s[np.ix_(idx, idx)])
        cross = s[np.ix_(idx, comp)]
        g[np.ix_(comp, comp)] = cross.T @ cho_solve(cf, cross)
    return g


@dataclass
class TruthReport:
    h2_total: float
    genetic_variance: float
    sigma_e2: float
    h2_S: Dict[str, float] = field(default_factory=dict)
    schur: Dict[str, float] = field(default_factory=dict)
    h2_C: Dict[str, float] = field(default_factory=dict)

    def to_dict(self):
        return {
            "h2_total": self.h2_total,
            "components": {
                "genetic_variance": self.genetic_variance,
                "sigma_e2": self.sigma_e2,
                "schur_term": dict(self.schur),
            },
            "h2_S": dict(self.h2_S),
            "h2_C": dict(self.h2_C),
        }


def truth_report(u, sigma, sigma_e2, subsets=None, projections=None):
    """Total, partitioned and projected heritabilities in one pass."""
    g = genetic_variance(u, sigma)
    total = _total_variance(g, sigma_e2)
    rep = TruthReport(h2_total=g / total, genetic_variance=g, sigma_e2=float(sigma_e2))
    for name, s in (subsets or {}).items():
        st = schur_term(u, sigma, s)
        rep.schur[name] = st
        rep.h2_S[name] = (g - st) / total
    for name, c in (projections or {}).items():
        rep.h2_C[name] = projected_variance(u, sigma, c) / total
    return rep
