"""Two-variance-component ML (optionally REML) with Euclidean kernels."""
from __future__ import annotations

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.optimize import minimize

from ..core import TwoComponentEstimate, center, check_genotypes, check_subset
from ..exceptions import HeritabilityError

LOWER = 1e-8


def subset_kernels(z, subset):
    """``K_S = Z_S Z_S^T / |S|`` and ``K_Sc = Z_Sc Z_Sc^T / (m - |S|)``."""
    z = check_genotypes(z)
    m = z.shape[1]
    s = check_subset(subset, m)
    if s.size == m:
        raise HeritabilityError("subset must be a proper subset of the SNPs")
    mask = np.zeros(m, dtype=bool)
    mask[s] = True
    zs, zc = z[:, mask], z[:, ~mask]
    ks = zs @ zs.T / zs.shape[1]
    kc = zc @ zc.T / zc.shape[1]
    return 0.5 * (ks + ks.T), 0.5 * (kc + kc.T)


def negloglik(theta, y, kernels, reml=False, with_grad=True):
    """Negative log-likelihood in ``theta = log(variance components)``.

    ``kernels`` lists the non-identity kernels; the last component of
    ``theta`` multiplies the identity.
    """
    n = y.shape[0]
    var = np.exp(theta)
    v = var[-1] * np.eye(n)
    for s2, k in zip(var[:-1], kernels):
        v += s2 * k
    try:
        cf = cho_factor(v, lower=True, check_finite=False)
    except np.linalg.LinAlgError:
        return (np.inf, np.zeros_like(theta)) if with_grad else np.inf
    logdet = 2.0 * np.sum(np.log(np.diag(cf[0])))
    vinv_y = cho_solve(cf, y, check_finite=False)
    if reml:
        one = np.ones(n)
        vinv_1 = cho_solve(cf, one, check_finite=False)
        s = one @ vinv_1
        py = vinv_y - vinv_1 * (one @ vinv_y) / s
        val = 0.5 * (logdet + np.log(s) + y @ py + (n - 1) * np.log(2 * np.pi))
    else:
        py = vinv_y
        val = 0.5 * (logdet + y @ py + n * np.log(2 * np.pi))
    if not with_grad:
        return float(val)
    vinv = cho_solve(cf, np.eye(n), check_finite=False)
    if reml:
        p = vinv - np.outer(vinv_1, vinv_1) / s
    else:
        p = vinv
    grad = np.empty_like(theta)
    for i, k in enumerate(kernels):
        grad[i] = 0.5 * var[i] * (np.sum(p * k) - py @ k @ py)
    grad[-1] = 0.5 * var[-1] * (np.trace(p) - py @ py)
    return float(val), grad


def fit_two_component(y, k_s, k_sc, reml=False, max_iter=500, gtol=1e-7):
    """Maximize the two-kernel Gaussian likelihood over log-variances."""
    y = center(y)
    n = y.shape[0]
    if k_s.shape != (n, n) or k_sc.shape != (n, n):
        raise HeritabilityError("kernel shapes do not match the phenotype")
    vy = float(y @ y) / n
    upper = np.log(1e4 * vy)
    theta0 = np.full(3, np.log(vy / 3.0))
    bounds = [(np.log(LOWER), upper)] * 3
    res = minimize(
        negloglik,
        theta0,
        args=(y, (k_s, k_sc), reml),
        jac=True,
        method="L-BFGS-B",
        bounds=bounds,
        options={"maxiter": max_iter, "gtol": gtol, "ftol": 1e-13},
    )
    var = np.exp(res.x)
    _, grad = negloglik(res.x, y, (k_s, k_sc), reml)
    # gradient components pushing against an active bound are not a failure
    free = ~((res.x <= bounds[0][0] + 1e-9) & (grad > 0)) & ~((res.x >= upper - 1e-9) & (grad < 0))
    gnorm = float(np.linalg.norm(grad[free])) if np.any(free) else 0.0
    names = ("sigma2_S", "sigma2_Sc", "sigma2_e")
    pinned = tuple(nm for nm, v in zip(names, var) if v <= LOWER * (1 + 1e-6))
    return TwoComponentEstimate(
        sigma2_S=float(var[0]),
        sigma2_Sc=float(var[1]),
        sigma2_e=float(var[2]),
        loglik=-float(res.fun),
        n_iter=int(res.nit),
        converged=bool(res.success) or gnorm < 1e-4 * n,
        grad_norm=gnorm,
        pinned=pinned,
        reml=reml,
    )


def ml_two_component(y, z, subset, reml=False, max_iter=500):
    """Fit ``y ~ N(0, s_S K_S + s_Sc K_Sc + s_e I)`` and report ``h2_S`` from the components.

    ``reml=True`` applies the one-degree-of-freedom correction for the
    implicit intercept removed by centering.
    """
    k_s, k_sc = subset_kernels(z, subset)
    return fit_two_component(y, k_s, k_sc, reml=reml, max_iter=max_iter)
