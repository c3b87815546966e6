"""Haseman-Elston moment regression."""
from __future__ import annotations

import numpy as np

from ..core import HeritabilityEstimate, as_kernel, check_phenotype
from ..exceptions import HeritabilityError, ZeroVarianceError


def he_regression(y, k):
    """Regress ``y_i y_j`` on ``K_ij`` over pairs ``i < j`` through the origin.

    Both moments are uncentered averages over the ``n(n-1)/2`` pairs. The
    estimate is not truncated to ``[0, 1]``; ``flags["out_of_range"]`` marks
    estimates outside it.
    """
    kern = as_kernel(k)
    y = check_phenotype(y, kern.n)
    n = y.shape[0]
    if n < 3:
        raise HeritabilityError("HE regression needs at least three individuals")
    kk = kern.k
    diag = np.diag(kk)
    npairs = n * (n - 1) / 2.0
    sum_kk = (np.sum(kk * kk) - np.sum(diag * diag)) / 2.0
    if sum_kk <= 0:
        raise HeritabilityError("kernel has no nonzero off-diagonal entries")
    sum_yk = (y @ kk @ y - np.sum(diag * y * y)) / 2.0
    var_k = sum_kk / npairs
    cov_yk = sum_yk / npairs
    sigma_g2 = cov_yk / var_k
    total = float(y @ y) / n
    if total <= 0:
        raise ZeroVarianceError("phenotype has zero variance")
    h2 = sigma_g2 / total
    sigma_e2 = total - sigma_g2
    eta2 = sigma_g2 / sigma_e2 if sigma_e2 != 0 else np.inf
    return HeritabilityEstimate(
        h2_hat=float(h2),
        eta2_hat=float(eta2),
        sigma2_hat=float(sigma_e2),
        method=f"he-{kern.kind}",
        n=n,
        flags={"out_of_range": not (0.0 <= h2 <= 1.0), "sigma_g2": float(sigma_g2)},
    )
