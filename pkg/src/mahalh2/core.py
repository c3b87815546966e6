"""Shared domain types, normalization conventions and input validation.

Arrays follow the usual layout: genotypes are ``(n_individuals, n_snps)``,
phenotypes are length ``n``. SNP indices are 0-based everywhere.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence

import numpy as np

from .exceptions import HeritabilityError, IllConditionedError, ZeroVarianceError

EIGENVALUE_FLOOR = 1e-10


def _frozen(a):
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


# ---------------------------------------------------------------------------
# validation helpers


def check_mafs(p, *, min_maf=0.0, max_adjacent_diff=None):
    """Validate a vector of minor-allele frequencies and return it as floats."""
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise HeritabilityError("MAF vector must be one-dimensional and nonempty")
    if not np.all(np.isfinite(p)):
        raise HeritabilityError("MAF vector contains non-finite values")
    if np.any(p <= 0) or np.any(p > 0.5):
        raise HeritabilityError("MAFs must lie in (0, 0.5]")
    if np.any(p < min_maf):
        raise HeritabilityError(f"MAFs below the minimum {min_maf}")
    if max_adjacent_diff is not None and p.size > 1:
        gap = np.abs(np.diff(p)).max()
        if gap >= max_adjacent_diff:
            raise HeritabilityError(
                f"adjacent MAF difference {gap:.4g} violates the bound {max_adjacent_diff}"
            )
    return p


def check_genotypes(z, *, name="genotypes"):
    z = np.asarray(z, dtype=float)
    if z.ndim != 2:
        raise HeritabilityError(f"{name} must be a 2-D array, got shape {z.shape}")
    if z.shape[0] == 0 or z.shape[1] == 0:
        raise HeritabilityError(f"{name} is empty")
    if not np.all(np.isfinite(z)):
        raise HeritabilityError(f"{name} contains non-finite values")
    return z


def check_phenotype(y, n=None):
    y = np.asarray(y, dtype=float)
    if y.ndim == 2 and y.shape[1] == 1:
        y = y[:, 0]
    if y.ndim != 1:
        raise HeritabilityError("phenotype must be a vector")
    if n is not None and y.shape[0] != n:
        raise HeritabilityError(f"phenotype has {y.shape[0]} entries, expected {n}")
    if not np.all(np.isfinite(y)):
        raise HeritabilityError("phenotype contains non-finite values")
    return y


def check_subset(subset, m):
    """Return a sorted, duplicate-free integer index array inside ``[0, m)``."""
    s = np.asarray(subset)
    if s.ndim != 1 or s.size == 0:
        raise HeritabilityError("subset must be a nonempty 1-D index collection")
    if not np.issubdtype(s.dtype, np.integer):
        if not np.all(np.equal(np.mod(s, 1), 0)):
            raise HeritabilityError("subset indices must be integers")
        s = s.astype(np.int64)
    if s.min() < 0 or s.max() >= m:
        raise HeritabilityError(f"subset indices must lie in [0, {m})")
    if np.unique(s).size != s.size:
        raise HeritabilityError("subset contains duplicate indices")
    return np.sort(s).astype(np.int64)


# ---------------------------------------------------------------------------
# genotypes and phenotypes


def standardize(f, p):
    """Standardize raw allele counts with population MAFs.

    ``z_ij = (f_ij - 2 p_j) / sqrt(2 p_j (1 - p_j))``. No centering across
    individuals is applied: the population frequency is the center.
    """
    f = np.asarray(f, dtype=float)
    if f.ndim != 2:
        raise HeritabilityError("raw genotype matrix must be 2-D")
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or p.shape[0] != f.shape[1]:
        raise HeritabilityError(
            f"MAF vector of length {p.shape} does not match {f.shape[1]} SNPs"
        )
    if np.any(p <= 0) or np.any(p > 0.5):
        raise HeritabilityError("MAFs must lie in (0, 0.5] to standardize")
    return (f - 2.0 * p) / np.sqrt(2.0 * p * (1.0 - p))


def estimate_mafs(f):
    """Minor-allele frequencies estimated from the study genotypes themselves."""
    f = np.asarray(f, dtype=float)
    p = f.mean(axis=0) / 2.0
    p = np.minimum(p, 1.0 - p)
    if np.any(p <= 0):
        raise HeritabilityError("monomorphic SNP: sample MAF is zero")
    return p


def standardize_sample(f):
    """Standardize with frequencies estimated from ``f`` itself.

    Uses the frequency ``q_j`` of the counted allele, which may exceed 0.5
    in a sample; returns ``(z, q)``.
    """
    f = np.asarray(f, dtype=float)
    if f.ndim != 2:
        raise HeritabilityError("raw genotype matrix must be 2-D")
    q = f.mean(axis=0) / 2.0
    if np.any(q <= 0) or np.any(q >= 1):
        raise HeritabilityError("monomorphic SNP: sample allele frequency is 0 or 1")
    return (f - 2.0 * q) / np.sqrt(2.0 * q * (1.0 - q)), q


def center(y_raw):
    """Subtract the sample mean. Constant vectors are rejected."""
    y = check_phenotype(y_raw)
    if y.shape[0] < 2:
        raise HeritabilityError("need at least two phenotype values")
    y = y - y.mean()
    if not np.any(y):
        raise ZeroVarianceError("phenotype has zero variance")
    return y


# ---------------------------------------------------------------------------
# LD matrix


def _block_boundaries(sigma):
    """Split points of the finest contiguous block-diagonal partition."""
    m = sigma.shape[0]
    nz = sigma != 0
    # furthest column touched by each row (and, by symmetry, each column)
    last = np.where(nz.any(axis=1), m - 1 - np.argmax(nz[:, ::-1], axis=1), np.arange(m))
    reach = np.maximum.accumulate(np.maximum(last, np.arange(m)))
    ends = np.flatnonzero(reach == np.arange(m)) + 1
    return np.concatenate(([0], ends))


class LDMatrix:
    """Symmetric positive-definite SNP covariance with cached square roots.

    The matrix is split into its contiguous diagonal blocks (a generic dense
    matrix is a single block) and every block is eigendecomposed on
    construction. Dense ``sqrt``/``inv_sqrt``/``inv`` are assembled from the
    block factors on first access; the ``apply_*`` methods never form them.
    """

    def __init__(self, sigma):
        s = np.array(sigma, dtype=float)
        if s.ndim != 2 or s.shape[0] != s.shape[1] or s.shape[0] == 0:
            raise HeritabilityError("LD matrix must be square and nonempty")
        if not np.all(np.isfinite(s)):
            raise HeritabilityError("LD matrix contains non-finite values")
        asym = np.abs(s - s.T).max()
        if asym > 1e-8 * max(np.abs(s).max(), 1.0):
            raise HeritabilityError(f"LD matrix is not symmetric (max asymmetry {asym:.3g})")
        s = 0.5 * (s + s.T)
        self._sigma = _frozen(s)
        bounds = _block_boundaries(s)
        self.block_slices = tuple(slice(a, b) for a, b in zip(bounds[:-1], bounds[1:]))
        self._eig = []
        for sl in self.block_slices:
            w, v = np.linalg.eigh(s[sl, sl])
            self._eig.append((w, v))
        evals = np.concatenate([w for w, _ in self._eig])
        self.eigenvalues = _frozen(np.sort(evals))
        lo, hi = self.eigenvalues[0], self.eigenvalues[-1]
        if hi <= 0 or lo < EIGENVALUE_FLOOR * hi:
            raise IllConditionedError(
                f"LD matrix smallest eigenvalue {lo:.3g} is below {EIGENVALUE_FLOOR:g} x largest ({hi:.3g})"
            )

    @classmethod
    def from_blocks(cls, blocks):
        from scipy.linalg import block_diag

        return cls(block_diag(*blocks))

    @property
    def sigma(self):
        return self._sigma

    @property
    def m(self):
        return self._sigma.shape[0]

    @property
    def shape(self):
        return self._sigma.shape

    @cached_property
    def digest(self):
        return hashlib.sha1(self._sigma.tobytes()).hexdigest()[:16]

    def _assemble(self, power):
        out = np.zeros_like(self._sigma)
        for sl, (w, v) in zip(self.block_slices, self._eig):
            out[sl, sl] = (v * w**power) @ v.T
        out = 0.5 * (out + out.T)
        out.setflags(write=False)
        return out

    @cached_property
    def sqrt(self):
        return self._assemble(0.5)

    @cached_property
    def inv_sqrt(self):
        return self._assemble(-0.5)

    @cached_property
    def inv(self):
        return self._assemble(-1.0)

    def _apply(self, x, power):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.m:
            raise HeritabilityError(f"expected {self.m} columns, got {x.shape[-1]}")
        out = np.empty_like(x)
        for sl, (w, v) in zip(self.block_slices, self._eig):
            out[..., sl] = ((x[..., sl] @ v) * w**power) @ v.T
        return out

    def apply_sqrt(self, x):
        """``x @ sigma^{1/2}`` computed block by block."""
        return self._apply(x, 0.5)

    def apply_inv_sqrt(self, x):
        return self._apply(x, -0.5)

    def apply_inv(self, x):
        return self._apply(x, -1.0)

    def submatrix(self, idx):
        idx = np.asarray(idx)
        return LDMatrix(self._sigma[np.ix_(idx, idx)])

    def __repr__(self):
        return f"LDMatrix(m={self.m}, blocks={len(self.block_slices)})"


def as_ld(sigma):
    return sigma if isinstance(sigma, LDMatrix) else LDMatrix(sigma)


# ---------------------------------------------------------------------------
# kernels and projections


@dataclass(frozen=True)
class KernelMatrix:
    """An ``n x n`` genetic relationship matrix.

    ``divisor`` records the normalizing constant that was applied
    (``m``, ``|S|`` or ``k``) so that the diagonal has unit expectation.
    """

    k: np.ndarray
    kind: str = "custom"
    divisor: float = 1.0

    def __post_init__(self):
        k = np.asarray(self.k, dtype=float)
        if k.ndim != 2 or k.shape[0] != k.shape[1]:
            raise HeritabilityError("kernel must be square")
        if self.kind not in ("euclidean", "mahalanobis", "custom"):
            raise HeritabilityError(f"unknown kernel kind {self.kind!r}")
        k = 0.5 * (k + k.T)
        k.setflags(write=False)
        object.__setattr__(self, "k", k)

    @property
    def n(self):
        return self.k.shape[0]

    def is_psd(self, rtol=1e-8):
        w = np.linalg.eigvalsh(self.k)
        return bool(w[0] >= -rtol * max(w[-1], 0.0))


def as_kernel(k):
    return k if isinstance(k, KernelMatrix) else KernelMatrix(np.asarray(k, dtype=float))


@dataclass(frozen=True)
class Projection:
    """Linear projection of the genotype vector.

    ``kind`` is ``"identity"``, ``"subset"`` (coordinate selection) or
    ``"general"`` (an ``m x k`` full-column-rank matrix).
    """

    kind: str
    m: int
    indices: Optional[np.ndarray] = None
    matrix: Optional[np.ndarray] = None

    @classmethod
    def identity(cls, m):
        return cls("identity", int(m))

    @classmethod
    def subset(cls, indices, m):
        idx = check_subset(indices, m)
        idx.setflags(write=False)
        return cls("subset", int(m), indices=idx)

    @classmethod
    def general(cls, c):
        c = np.array(c, dtype=float)
        if c.ndim != 2 or c.shape[1] > c.shape[0]:
            raise HeritabilityError("projection matrix must be m x k with k <= m")
        s = np.linalg.svd(c, compute_uv=False)
        if s[-1] <= 1e-10 * s[0]:
            raise IllConditionedError("projection matrix is not of full column rank")
        c.setflags(write=False)
        return cls("general", c.shape[0], matrix=c)

    @property
    def k(self):
        if self.kind == "identity":
            return self.m
        if self.kind == "subset":
            return int(self.indices.size)
        return int(self.matrix.shape[1])

    def as_matrix(self):
        """Dense ``m x k`` representation."""
        if self.kind == "identity":
            return np.eye(self.m)
        if self.kind == "subset":
            c = np.zeros((self.m, self.k))
            c[self.indices, np.arange(self.k)] = 1.0
            return c
        return np.asarray(self.matrix)


# ---------------------------------------------------------------------------
# effects and estimates


@dataclass(frozen=True)
class EffectVector:
    u: np.ndarray
    causal: np.ndarray
    psi: np.ndarray

    def __post_init__(self):
        for name in ("u", "psi"):
            a = np.array(getattr(self, name), dtype=float)
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        c = np.array(self.causal, dtype=np.int64)
        c.setflags(write=False)
        object.__setattr__(self, "causal", c)

    @property
    def m(self):
        return self.u.shape[0]


@dataclass(frozen=True)
class HeritabilityEstimate:
    """Result of a single-kernel, moment or whitened-design fit.

    ``sigma2_hat`` is the residual variance (``sigma_e^2`` for a kernel fit,
    the variance not explained by the projection for a whitened fit).
    """

    h2_hat: float
    eta2_hat: float
    sigma2_hat: float
    method: str
    se: Optional[float] = None
    boundary_flag: bool = False
    loglik: Optional[float] = None
    n_iter: int = 0
    n: int = 0
    flags: dict = field(default_factory=dict)
    asymptotic: Optional[object] = None

    def to_dict(self):
        out = {
            "method": self.method,
            "h2_hat": self.h2_hat,
            "eta2_hat": self.eta2_hat,
            "sigma2_hat": self.sigma2_hat,
            "se": self.se,
            "boundary_flag": self.boundary_flag,
            "loglik": self.loglik,
            "n_iter": self.n_iter,
            "n": self.n,
            "flags": dict(self.flags),
        }
        if self.asymptotic is not None:
            out["asymptotic_variance"] = self.asymptotic.to_dict()
        return out


@dataclass(frozen=True)
class TwoComponentEstimate:
    sigma2_S: float
    sigma2_Sc: float
    sigma2_e: float
    loglik: float
    n_iter: int
    converged: bool
    grad_norm: float
    pinned: tuple = ()
    reml: bool = False

    @property
    def h2_S(self):
        return self.sigma2_S / (self.sigma2_S + self.sigma2_Sc + self.sigma2_e)

    @property
    def h2_total(self):
        return (self.sigma2_S + self.sigma2_Sc) / (self.sigma2_S + self.sigma2_Sc + self.sigma2_e)

    def to_dict(self):
        return {
            "method": "two-comp-reml" if self.reml else "two-comp-ml",
            "sigma2_S": self.sigma2_S,
            "sigma2_Sc": self.sigma2_Sc,
            "sigma2_e": self.sigma2_e,
            "h2_S": self.h2_S,
            "loglik": self.loglik,
            "n_iter": self.n_iter,
            "converged": self.converged,
            "grad_norm": self.grad_norm,
            "pinned": list(self.pinned),
        }


def h2_from_eta2(eta2):
    return eta2 / (1.0 + eta2)


__all__: Sequence[str] = [
    "LDMatrix",
    "KernelMatrix",
    "Projection",
    "EffectVector",
    "HeritabilityEstimate",
    "TwoComponentEstimate",
    "standardize",
    "center",
    "estimate_mafs",
    "check_mafs",
    "check_subset",
]
