"""Gaussian maximum likelihood for one kernel and for the whitened design."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import HeritabilityEstimate, as_kernel, center, h2_from_eta2
from ..exceptions import HeritabilityError
from ._profile import KernelSpectrum, maximize_profile


@dataclass(frozen=True)
class AsymptoticVariance:
    """Trace functionals of the Fisher information and the implied standard errors.

    ``psi`` is ``(iota_2 - iota_3^2 / iota_4)^{-1}``, the asymptotic variance of
    ``sqrt(n) * sigma2_hat``; ``psi_eta2`` is ``(iota_4 - iota_3^2 / iota_2)^{-1}``,
    that of ``sqrt(n) * eta2_hat``. ``se_h2`` follows from ``psi_eta2`` by the
    delta method.
    """

    iota_2: float
    iota_3: float
    iota_4: float
    psi: float
    psi_trace_form: float
    psi_eta2: float
    se_h2: float
    se_sigma2: float
    trace_ratio: float
    n: int
    infinite: bool = False

    def to_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def asymptotic_from_spectrum(lam, n, eta2, sigma2):
    if eta2 < 0 or sigma2 <= 0:
        raise HeritabilityError("need eta2 >= 0 and sigma2 > 0")
    lam = np.asarray(lam, dtype=float)
    d = eta2 * lam + 1.0
    # tr(I^{a-2} J^{2-a}) for a = 2, 3, 4
    t2 = float(n)
    t3 = float(np.sum(lam / d))
    t4 = float(np.sum((lam / d) ** 2))
    iota_2 = t2 / (2.0 * n * sigma2**2)
    iota_3 = t3 / (2.0 * n * sigma2)
    iota_4 = t4 / (2.0 * n)
    ratio = t3**2 / (n * t4) if t4 > 0 else 1.0
    infinite = ratio >= 1.0 - 1e-14
    if infinite:
        psi = psi_trace = psi_eta2 = se_h2 = se_s2 = np.inf
    else:
        psi = 1.0 / (iota_2 - iota_3**2 / iota_4)
        psi_trace = 2.0 * sigma2**2 / (1.0 - ratio)
        psi_eta2 = 1.0 / (iota_4 - iota_3**2 / iota_2)
        se_h2 = float(np.sqrt(psi_eta2 / ((1.0 + eta2) ** 4 * n)))
        se_s2 = float(np.sqrt(psi / n))
    return AsymptoticVariance(
        iota_2=iota_2,
        iota_3=iota_3,
        iota_4=iota_4,
        psi=float(psi),
        psi_trace_form=float(psi_trace),
        psi_eta2=float(psi_eta2),
        se_h2=float(se_h2),
        se_sigma2=float(se_s2),
        trace_ratio=float(ratio),
        n=int(n),
        infinite=bool(infinite),
    )


def _fit(cache, eta2_bounds, method, n_features=None):
    eta2, n_evals, at_bound = maximize_profile(cache, eta2_bounds)
    sigma2 = cache.sigma2(eta2)
    if not np.isfinite(sigma2) or sigma2 <= 0:
        raise HeritabilityError("non-finite residual variance at the optimum")
    return dict(
        h2_hat=h2_from_eta2(eta2),
        eta2_hat=eta2,
        sigma2_hat=sigma2,
        method=method,
        boundary_flag=bool(at_bound),
        loglik=cache.loglik(sigma2, eta2),
        n_iter=n_evals,
        n=cache.n,
    )


def mle_single_kernel(y, k, eta2_bounds=(1e-6, 1e6), spectrum=None):
    """Maximum likelihood heritability under ``y ~ N(0, s2 (eta2 K + I))``.

    ``K`` should follow the unit-diagonal convention (as produced by
    :func:`~mahalh2.kernels.euclidean_grm` or
    :func:`~mahalh2.kernels.mahalanobis_grm`). ``y`` is mean-centered first.
    A precomputed :class:`KernelSpectrum` of ``K`` may be passed to skip the
    eigendecomposition when fitting several phenotypes.
    """
    kern = as_kernel(k)
    y = center(y)
    if y.shape[0] != kern.n:
        raise HeritabilityError(f"phenotype has {y.shape[0]} entries, kernel is {kern.n} x {kern.n}")
    cache = (spectrum or KernelSpectrum.from_kernel(kern.k)).cache(y)
    return HeritabilityEstimate(**_fit(cache, eta2_bounds, f"mle-{kern.kind}"))


def c_heritability_mle(y, w, eta2_bounds=(1e-6, 1e6), compute_se=True, spectrum=None):
    """Heritability explained by a projection, fitted on the whitened design.

    Uses the kernel ``W W^T / k``. ``sigma2_hat`` is the residual variance not
    explained by the projection. With the identity projection this coincides
    with the Mahalanobis-kernel MLE.
    """
    from ..kernels import WhitenedDesign

    wmat = w.w if isinstance(w, WhitenedDesign) else np.asarray(w, dtype=float)
    if wmat.ndim != 2 or wmat.shape[1] < 1:
        raise HeritabilityError("whitened design must be n x k with k >= 1")
    y = center(y)
    n, k = wmat.shape
    if y.shape[0] != n:
        raise HeritabilityError(f"phenotype has {y.shape[0]} entries, design has {n} rows")
    cache = (spectrum or KernelSpectrum.from_design(wmat, k)).cache(y)
    fit = _fit(cache, eta2_bounds, "c-mle")
    flags = {"k_over_n": k / n, "k_over_n_near_one": abs(k / n - 1.0) < 0.05}
    asym = None
    se = None
    if compute_se:
        asym = asymptotic_from_spectrum(cache.lam, n, fit["eta2_hat"], fit["sigma2_hat"])
        se = asym.se_h2
    return HeritabilityEstimate(**fit, se=se, flags=flags, asymptotic=asym)


def asymptotic_se(w, eta2_hat, sigma2_perp_hat):
    """Asymptotic variance block for a whitened-design fit.

    All traces come from the spectrum of ``W W^T / k``, so the cost after
    one decomposition is O(n).
    """
    from ..kernels import WhitenedDesign

    wmat = w.w if isinstance(w, WhitenedDesign) else np.asarray(w, dtype=float)
    n, k = wmat.shape
    if k >= n:
        lam = np.linalg.eigvalsh((wmat @ wmat.T) / k)
    else:
        s = np.linalg.svd(wmat, compute_uv=False)
        lam = np.concatenate([s**2 / k, np.zeros(n - k)])
    return asymptotic_from_spectrum(np.clip(lam, 0.0, None), n, eta2_hat, sigma2_perp_hat)
