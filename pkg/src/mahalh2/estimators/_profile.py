"""Spectral reduction of the single-variance-component Gaussian likelihood.

With ``K = U diag(lam) U^T`` and ``q = (U^T y)^2`` the average log-likelihood
of ``y ~ N(0, s2 (eta2 K + I))`` is

    l(s2, eta2) = -1/2 log s2 - 1/(2n) sum log(eta2 lam + 1)
                  - 1/(2 n s2) sum q / (eta2 lam + 1)

so every evaluation costs O(n) once the eigendecomposition is known.
"""
from __future__ import annotations

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from ..exceptions import HeritabilityError, NonIdentifiableError, ZeroVarianceError

GRID_POINTS = 81
XATOL = 1e-8


class KernelSpectrum:
    """Eigendecomposition of a kernel, reusable across phenotypes.

    ``basis`` holds the eigenvectors with nonzero eigenvalue when the kernel
    comes from a thin design; the remaining eigenvalues are zero and only the
    norm of ``y`` outside the basis matters.
    """

    def __init__(self, lam, basis, n):
        self.lam = np.asarray(lam, dtype=float)
        self.basis = basis
        self.n = int(n)
        top = max(self.lam.max(), 0.0)
        if self.lam.min() < -1e-8 * top:
            raise HeritabilityError(
                f"kernel is not positive semidefinite (eigenvalue {self.lam.min():.3g})"
            )
        self.lam = np.clip(self.lam, 0.0, None)
        if top <= 0 or self.lam.max() - self.lam.min() <= 1e-10 * top:
            raise NonIdentifiableError(
                "kernel spectrum is flat: only s2 * (1 + eta2) is identified"
            )

    @classmethod
    def from_kernel(cls, k):
        k = np.asarray(k, dtype=float)
        lam, u = np.linalg.eigh(k)
        return cls(lam, u, k.shape[0])

    @classmethod
    def from_design(cls, w, divisor):
        """Spectrum of ``W W^T / divisor`` without forming it when ``k < n``."""
        w = np.asarray(w, dtype=float)
        n, k = w.shape
        if k >= n:
            return cls.from_kernel((w @ w.T) / divisor)
        u, s, _ = np.linalg.svd(w, full_matrices=False)
        return cls(np.concatenate([s**2 / divisor, np.zeros(n - k)]), u, n)

    def cache(self, y):
        y = np.asarray(y, dtype=float)
        if y.shape != (self.n,):
            raise HeritabilityError(f"phenotype has {y.shape[0]} entries, kernel is {self.n} x {self.n}")
        r = self.basis.T @ y
        if self.basis.shape[1] < self.n:
            rest = max(float(y @ y - r @ r), 0.0)
            r = np.concatenate([r, [np.sqrt(rest)], np.zeros(self.n - r.size - 1)])
        q = r**2
        if not np.any(q):
            raise ZeroVarianceError("phenotype has zero variance")
        return ProfileLikelihoodCache(self.lam, q, self.n)


class ProfileLikelihoodCache:
    """Eigenvalues of the kernel and squared rotated phenotype."""

    def __init__(self, lam, q, n):
        self.lam = np.asarray(lam, dtype=float)
        self.q = np.asarray(q, dtype=float)
        self.n = int(n)

    @classmethod
    def from_kernel(cls, k, y):
        return KernelSpectrum.from_kernel(k).cache(y)

    @classmethod
    def from_design(cls, w, y, divisor):
        return KernelSpectrum.from_design(w, divisor).cache(y)

    # likelihood pieces -----------------------------------------------------

    def sigma2(self, eta2):
        return float(np.sum(self.q / (eta2 * self.lam + 1.0)) / self.n)

    def loglik(self, sigma2, eta2):
        d = eta2 * self.lam + 1.0
        return float(
            -0.5 * np.log(sigma2)
            - 0.5 * np.mean(np.log(d))
            - np.sum(self.q / d) / (2.0 * self.n * sigma2)
        )

    def profile(self, t):
        """Profiled average log-likelihood at ``eta2 = exp(t)``."""
        e = np.exp(t)
        d = e * self.lam + 1.0
        s2 = np.sum(self.q / d) / self.n
        return float(-0.5 * np.log(s2) - 0.5 * np.mean(np.log(d)) - 0.5)

    def profile_grad(self, t):
        """Derivative of :meth:`profile` with respect to ``t = log eta2``."""
        e = np.exp(t)
        d = e * self.lam + 1.0
        a = np.sum(self.q * self.lam / d**2)
        b = np.sum(self.q / d)
        return float(e * (0.5 * a / b - 0.5 * np.mean(self.lam / d)))

    def traces(self, eta2):
        """``tr(I J^{-1})`` and ``tr(I^2 J^{-2})`` for ``I = K``, ``J = eta2 K + I``."""
        d = eta2 * self.lam + 1.0
        return float(np.sum(self.lam / d)), float(np.sum((self.lam / d) ** 2))


def maximize_profile(cache, eta2_bounds=(1e-6, 1e6)):
    """Maximize the profiled likelihood over ``log eta2``.

    A coarse grid locates the best bracket, bounded Brent search refines it
    and a root-find on the analytic derivative polishes the optimum.
    Returns ``(eta2, n_evals, at_bound)``.
    """
    lo, hi = (float(b) for b in eta2_bounds)
    if not 0 < lo < hi:
        raise HeritabilityError("eta2 bounds must satisfy 0 < lower < upper")
    t_lo, t_hi = np.log(lo), np.log(hi)
    grid = np.linspace(t_lo, t_hi, GRID_POINTS)
    vals = np.array([cache.profile(t) for t in grid])
    if not np.all(np.isfinite(vals)):
        raise HeritabilityError("non-finite likelihood; is the kernel badly scaled?")
    i = int(np.argmax(vals))
    a, b = grid[max(i - 1, 0)], grid[min(i + 1, GRID_POINTS - 1)]
    res = minimize_scalar(
        lambda t: -cache.profile(t), bounds=(a, b), method="bounded", options={"xatol": XATOL}
    )
    t = float(res.x)
    n_evals = GRID_POINTS + int(res.nfev)
    # polish on the score equation when the optimum is interior
    step = 1e-4
    left, right = max(t - step, t_lo), min(t + step, t_hi)
    g_left, g_right = cache.profile_grad(left), cache.profile_grad(right)
    if g_left > 0 > g_right:
        t = brentq(cache.profile_grad, left, right, xtol=1e-14, rtol=4 * np.finfo(float).eps)
    elif cache.profile(t_lo) >= cache.profile(t):
        t = t_lo
    elif cache.profile(t_hi) >= cache.profile(t):
        t = t_hi
    eta2 = float(np.exp(t))
    at_bound = abs(eta2 - lo) <= 1e-3 * lo or abs(eta2 - hi) <= 1e-3 * hi
    return eta2, n_evals, at_bound
