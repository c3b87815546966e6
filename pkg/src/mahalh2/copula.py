"""Gaussian copula with Binomial(2, p) marginals.

A latent standard normal ``x`` is discretized as ``f = 1{x > a1} + 1{x > a2}``
with thresholds chosen so that ``f ~ Binomial(2, p)``. For two coordinates
with latent correlation ``r`` the covariance of the counts is a sum of
orthant terms ``Phi2(a, b; r) - Phi(a) Phi(b)``, each of which equals
``int_0^r phi2(a, b; t) dt``. Substituting ``t = sin(theta)`` removes the
endpoint singularity and leaves a smooth integrand that Gauss-Legendre
handles to near machine precision.
"""
from __future__ import annotations

import logging

import numpy as np
from scipy.special import ndtr, ndtri

from .exceptions import CopulaError

log = logging.getLogger(__name__)

RHO_CLAMP = 1.0 - 1e-7


def binomial_thresholds(p):
    """Latent-normal cut points for Binomial(2, p): ``P(f=0)=(1-p)^2``, ``P(f<=1)=1-p^2``."""
    p = np.asarray(p, dtype=float)
    return np.stack([ndtri((1.0 - p) ** 2), ndtri(1.0 - p**2)], axis=-1)


def _orthant_excess(a, b, r, nodes, weights):
    """``Phi2(a, b; r) - Phi(a) Phi(b)`` for broadcastable arrays."""
    a, b, r = np.broadcast_arrays(a, b, r)
    theta_max = np.arcsin(np.clip(r, -1.0, 1.0))
    half = 0.5 * theta_max
    out = np.zeros(a.shape)
    for x, w in zip(nodes, weights):
        th = half * (x + 1.0)
        s, c = np.sin(th), np.cos(th)
        c2 = c * c
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            q = (a * a - 2.0 * s * a * b + b * b) / (2.0 * c2)
            val = np.exp(-q)
        val = np.where(c2 > 0, val, 0.0)
        out += w * val
    return out * half / (2.0 * np.pi)


def _comonotone_excess(a, b, sign):
    if sign > 0:
        return ndtr(np.minimum(a, b)) - ndtr(a) * ndtr(b)
    return np.maximum(0.0, ndtr(a) + ndtr(b) - 1.0) - ndtr(a) * ndtr(b)


def _count_sd(p):
    return np.sqrt(2.0 * p * (1.0 - p))


def achieved_correlation(rho_z, p_a, p_b, quadrature_order=32):
    """Correlation of the two Binomial(2, p) counts under latent correlation ``rho_z``.

    Vectorized over broadcastable inputs. ``rho_z = +-1`` is evaluated in
    closed form (comonotone / countermonotone coupling).
    """
    rho_z, p_a, p_b = np.broadcast_arrays(
        np.asarray(rho_z, float), np.asarray(p_a, float), np.asarray(p_b, float)
    )
    ta = binomial_thresholds(p_a)
    tb = binomial_thresholds(p_b)
    nodes, weights = np.polynomial.legendre.leggauss(int(quadrature_order))
    cov = np.zeros(rho_z.shape)
    for s in range(2):
        for t in range(2):
            cov += _orthant_excess(ta[..., s], tb[..., t], rho_z, nodes, weights)
    for sign in (1, -1):
        mask = rho_z == sign
        if np.any(mask):
            exact = np.zeros(rho_z.shape)
            for s in range(2):
                for t in range(2):
                    exact += _comonotone_excess(ta[..., s], tb[..., t], sign)
            cov = np.where(mask, exact, cov)
    return cov / (_count_sd(p_a) * _count_sd(p_b))


def frechet_bounds(p_a, p_b):
    """Smallest and largest attainable correlations between the two counts."""
    lo = achieved_correlation(-1.0, p_a, p_b)
    hi = achieved_correlation(1.0, p_a, p_b)
    return lo, hi


def intermediate_correlations(target, p_a, p_b, quadrature_order=32, tol=1e-4, max_iter=500):
    """Vectorized latent-correlation recovery.

    Returns ``(rho_z, achieved, n_iter)``. The update is multiplicative,
    ``rho_z <- clamp(rho_z * target / achieved)``, started at ``rho_z = target``,
    with a bisection fallback when a step leaves the current bracket (the
    multiplicative step alone cycles for rare-variant pairs).
    Raises :class:`CopulaError` for unattainable targets or non-convergence.
    """
    target, p_a, p_b = np.broadcast_arrays(
        np.asarray(target, float), np.asarray(p_a, float), np.asarray(p_b, float)
    )
    if np.any(np.abs(target) >= 1):
        raise CopulaError("target correlations must lie in (-1, 1)")
    if np.any(p_a <= 0) or np.any(p_a > 0.5) or np.any(p_b <= 0) or np.any(p_b > 0.5):
        raise CopulaError("MAFs must lie in (0, 0.5]")
    lo, hi = frechet_bounds(p_a, p_b)
    bad = (target > hi + tol) | (target < lo - tol)
    if np.any(bad):
        i = np.flatnonzero(bad.ravel())[0]
        raise CopulaError(
            f"target correlation {target.ravel()[i]:.4g} outside attainable range "
            f"[{lo.ravel()[i]:.4g}, {hi.ravel()[i]:.4g}] for MAFs "
            f"({p_a.ravel()[i]:.4g}, {p_b.ravel()[i]:.4g})"
        )
    rho = target.astype(float).copy()
    active = target != 0
    achieved = np.zeros_like(rho)
    # achieved correlation is increasing in rho, so keep a bracket and
    # bisect whenever the multiplicative step leaves it
    lower = np.full(rho.shape, -RHO_CLAMP)
    upper = np.full(rho.shape, RHO_CLAMP)
    n_iter = 0
    while True:
        if np.any(active):
            achieved[active] = achieved_correlation(
                rho[active], p_a[active], p_b[active], quadrature_order
            )
            below = active & (achieved < target)
            above = active & (achieved > target)
            lower[below] = rho[below]
            upper[above] = rho[above]
        err = np.abs(achieved - target)
        active = active & (err > tol)
        if not np.any(active):
            break
        if n_iter >= max_iter:
            i = np.flatnonzero(active.ravel())[0]
            raise CopulaError(
                f"latent correlation recovery did not converge after {max_iter} iterations "
                f"(target {target.ravel()[i]:.4g}, last achieved {achieved.ravel()[i]:.4g})"
            )
        n_iter += 1
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(achieved != 0, target / achieved, 1.0)
        step = np.clip(rho * ratio, -RHO_CLAMP, RHO_CLAMP)
        inside = (step > lower) & (step < upper)
        step = np.where(inside, step, 0.5 * (lower + upper))
        rho[active] = step[active]
    return rho, achieved, n_iter


_memo = {}


def copula_intermediate_correlation(
    target_rho, p_a, p_b, quadrature_order=32, tol=1e-4, max_iter=500
):
    """Latent Gaussian correlation giving the requested count correlation."""
    key = (float(target_rho), float(p_a), float(p_b), int(quadrature_order), float(tol))
    if key not in _memo:
        rho, _, _ = intermediate_correlations(
            target_rho, p_a, p_b, quadrature_order, tol, max_iter
        )
        _memo[key] = float(rho)
    return _memo[key]


def repair_correlation(r, floor=1e-8):
    """Clip eigenvalues at ``floor`` and rescale to unit diagonal.

    Returns ``(repaired, frobenius_distortion, min_eigenvalue_before)``.
    """
    w, v = np.linalg.eigh(r)
    if w[0] >= floor:
        return r, 0.0, float(w[0])
    fixed = (v * np.maximum(w, floor)) @ v.T
    d = np.sqrt(np.diag(fixed))
    fixed = fixed / np.outer(d, d)
    fixed = 0.5 * (fixed + fixed.T)
    np.fill_diagonal(fixed, 1.0)
    return fixed, float(np.linalg.norm(fixed - r)), float(w[0])


class CopulaSampler:
    """Precomputed latent correlation blocks for correlated Binomial(2, p) SNPs.

    Built once per (MAFs, target LD) pair; :meth:`sample` is then cheap and
    safe to call from several threads with independent generators.
    """

    def __init__(self, mafs, sigma_target, quadrature_order=32, tol=1e-4, max_iter=500, repair=True):
        from .core import as_ld, check_mafs

        self.mafs = check_mafs(mafs)
        ld = as_ld(sigma_target)
        if ld.m != self.mafs.size:
            raise CopulaError(f"{self.mafs.size} MAFs for an LD matrix of size {ld.m}")
        diag = np.diag(ld.sigma)
        if not np.allclose(diag, 1.0, atol=1e-12):
            raise CopulaError("target LD matrix must have unit diagonal (standardized SNPs)")
        self.block_slices = ld.block_slices
        self.thresholds = binomial_thresholds(self.mafs)
        self.latent_blocks = []
        self.block_factors = []
        self.distortion = 0.0
        self.min_eigenvalue = np.inf
        self.n_iter = 0
        for sl in self.block_slices:
            target = ld.sigma[sl, sl]
            p = self.mafs[sl]
            b = target.shape[0]
            iu = np.triu_indices(b, 1)
            latent = np.eye(b)
            if iu[0].size:
                rho, _, it = intermediate_correlations(
                    target[iu], p[iu[0]], p[iu[1]], quadrature_order, tol, max_iter
                )
                self.n_iter = max(self.n_iter, it)
                latent[iu] = rho
                latent[iu[1], iu[0]] = rho
            w0 = np.linalg.eigvalsh(latent)[0]
            self.min_eigenvalue = min(self.min_eigenvalue, float(w0))
            if w0 < 1e-8:
                if not repair:
                    raise CopulaError(
                        f"latent correlation block is not positive definite "
                        f"(smallest eigenvalue {w0:.3g})"
                    )
                latent, dist, _ = repair_correlation(latent)
                self.distortion = float(np.hypot(self.distortion, dist))
                log.info("repaired latent block %s, distortion %.3g", sl, dist)
            self.latent_blocks.append(latent)
            self.block_factors.append(np.linalg.cholesky(latent))
        self.quadrature_order = quadrature_order

    @property
    def m(self):
        return self.mafs.size

    def latent_correlation(self):
        from scipy.linalg import block_diag

        return block_diag(*self.latent_blocks)

    def achieved_correlation(self):
        """Population correlation of the standardized counts implied by the latent blocks."""
        out = np.zeros((self.m, self.m))
        for sl, latent in zip(self.block_slices, self.latent_blocks):
            p = self.mafs[sl]
            out[sl, sl] = achieved_correlation(
                latent, p[:, None], p[None, :], self.quadrature_order
            )
        np.fill_diagonal(out, 1.0)
        return out

    def sample(self, n, rng):
        """Draw an ``n x m`` matrix of allele counts (int8)."""
        x = np.empty((n, self.m))
        for sl, chol in zip(self.block_slices, self.block_factors):
            x[:, sl] = rng.standard_normal((n, chol.shape[0])) @ chol.T
        f = (x > self.thresholds[:, 0]).astype(np.int8)
        f += x > self.thresholds[:, 1]
        return f
