"""Simulators for LD matrices, MAFs, genotypes, effects and phenotypes.

Every simulator is a pure function of its inputs and a
:class:`numpy.random.Generator`. :class:`RngStream` derives independent,
reproducible generators per (seed, replicate, purpose).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

from .copula import CopulaSampler
from .core import EffectVector, LDMatrix, as_ld, center, check_genotypes, check_mafs
from .exceptions import HeritabilityError

# purposes for sub-stream derivation
GENOTYPES, EFFECTS, NOISE, MAFS, SUBSETS = range(5)


@dataclass(frozen=True)
class RngStream:
    """Seeded sub-stream factory.

    ``RngStream(seed).generator(r, GENOTYPES)`` always returns a generator
    with the same state for the same arguments, independent of the order in
    which replicates are processed.
    """

    seed: int
    replicate: Optional[int] = None

    def generator(self, *key):
        spawn_key = tuple(int(k) for k in key)
        if self.replicate is not None:
            spawn_key = (int(self.replicate),) + spawn_key
        ss = np.random.SeedSequence(entropy=int(self.seed), spawn_key=spawn_key)
        return np.random.default_rng(ss)

    def for_replicate(self, r):
        return RngStream(self.seed, int(r))


@dataclass(frozen=True)
class ArBlockSpec:
    block_size: int
    rhos: Tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "rhos", tuple(float(r) for r in self.rhos))
        if self.block_size < 1:
            raise HeritabilityError("block size must be positive")
        if not self.rhos:
            raise HeritabilityError("at least one block is required")
        if any(abs(r) >= 1 for r in self.rhos):
            raise HeritabilityError("AR correlations must lie in (-1, 1)")

    @property
    def m(self):
        return self.block_size * len(self.rhos)

    @classmethod
    def halves(cls, m, block_size, rho_low, rho_high):
        """``nu = m / block_size`` blocks, the first half at ``rho_low``, the rest at ``rho_high``."""
        if m % block_size:
            raise HeritabilityError(f"m={m} is not a multiple of the block size {block_size}")
        nu = m // block_size
        return cls(block_size, tuple(rho_low if k < nu / 2 else rho_high for k in range(nu)))


def ar_block(size, rho):
    idx = np.arange(size)
    return rho ** np.abs(idx[:, None] - idx[None, :]).astype(float)


def build_block_ar_sigma(spec: ArBlockSpec) -> LDMatrix:
    """Block-diagonal LD matrix whose k-th block has entries ``rho_k^|i-j|``."""
    return LDMatrix.from_blocks([ar_block(spec.block_size, r) for r in spec.rhos])


def sample_mafs(m, min_maf=0.05, max_adjacent_diff=0.05, rng=None, max_tries=100000):
    """Uniform MAFs on ``[min_maf, 0.5]`` with adjacent gaps below ``max_adjacent_diff``.

    Each entry after the first is redrawn until it lands within the allowed
    distance of its predecessor (sequential rejection).
    """
    if m < 1:
        raise HeritabilityError("m must be at least 1")
    if max_adjacent_diff <= 0:
        raise HeritabilityError("max_adjacent_diff must be positive")
    if not 0 < min_maf <= 0.5:
        raise HeritabilityError("min_maf must lie in (0, 0.5]")
    rng = np.random.default_rng(rng)
    p = np.empty(m)
    p[0] = rng.uniform(min_maf, 0.5)
    for j in range(1, m):
        for _ in range(max_tries):
            c = rng.uniform(min_maf, 0.5)
            if abs(c - p[j - 1]) < max_adjacent_diff or min_maf == 0.5:
                break
        else:
            raise HeritabilityError("could not satisfy the adjacency constraint")
        p[j] = c
    return p


def simulate_gaussian_genotypes(n, sigma, rng):
    """``n`` i.i.d. rows from ``N(0, sigma)``, generated as ``X @ sigma^{1/2}``."""
    if n < 1:
        raise HeritabilityError("n must be at least 1")
    ld = as_ld(sigma)
    x = rng.standard_normal((n, ld.m))
    return ld.apply_sqrt(x)


def simulate_binomial_genotypes(n, mafs, sigma_target, rng, sampler=None):
    """Allele counts with Binomial(2, p_j) marginals and standardized covariance ~ ``sigma_target``.

    Pass a prebuilt :class:`CopulaSampler` to reuse its latent-correlation
    table across replicates.
    """
    if sampler is None:
        sampler = CopulaSampler(mafs, sigma_target)
    if n < 1:
        raise HeritabilityError("n must be at least 1")
    return sampler.sample(n, rng)


# ---------------------------------------------------------------------------
# effects


@dataclass(frozen=True)
class CausalConfig:
    """Where causal loci sit and how their effect variances are set.

    mode
        ``"all"`` (every index in ``regions``, or all of ``[0, m)`` when no
        regions are given), ``"region"`` (every index in ``regions``) or
        ``"uniform_sample"`` (``size`` indices drawn without replacement from
        ``regions``).
    regions
        Half-open index ranges ``(start, stop)``; or an explicit index list
        via ``indices``.
    variance_rule
        ``"equal"`` gives each causal locus ``sigma_g^2 / |A|``;
        ``"maf_weighted"`` gives ``psi_j`` proportional to ``1 / (p_j (1 - p_j))``,
        normalized so the ``psi_j`` sum to ``sigma_g^2``.
    """

    mode: str = "all"
    regions: Tuple[Tuple[int, int], ...] = ()
    indices: Optional[Tuple[int, ...]] = None
    size: Optional[int] = None
    variance_rule: str = "equal"
    distribution: str = "gaussian"

    def __post_init__(self):
        if self.mode not in ("all", "region", "uniform_sample"):
            raise HeritabilityError(f"unknown causal mode {self.mode!r}")
        if self.variance_rule not in ("equal", "maf_weighted"):
            raise HeritabilityError(f"unknown variance rule {self.variance_rule!r}")
        if self.distribution != "gaussian":
            raise HeritabilityError(f"unsupported effect distribution {self.distribution!r}")
        object.__setattr__(self, "regions", tuple((int(a), int(b)) for a, b in self.regions))
        if self.indices is not None:
            object.__setattr__(self, "indices", tuple(int(i) for i in self.indices))
        if self.mode == "uniform_sample" and (self.size is None or self.size < 0):
            raise HeritabilityError("uniform_sample mode needs a nonnegative size")

    def pool(self, m):
        """Candidate index set implied by the regions (sorted, unique)."""
        if self.indices is not None:
            idx = np.asarray(self.indices, dtype=np.int64)
        elif self.regions:
            idx = np.concatenate([np.arange(a, b) for a, b in self.regions]).astype(np.int64)
        else:
            idx = np.arange(m, dtype=np.int64)
        if idx.size and (idx.min() < 0 or idx.max() >= m):
            raise HeritabilityError(f"causal region outside [0, {m})")
        return np.unique(idx)

    def draw_causal_set(self, m, rng):
        pool = self.pool(m)
        if self.mode in ("all", "region"):
            return pool
        if self.size > pool.size:
            raise HeritabilityError(
                f"cannot sample {self.size} causal loci from a region of {pool.size}"
            )
        if self.size and pool.size == 0:
            raise HeritabilityError("empty region with nonzero requested |A|")
        return np.sort(rng.choice(pool, size=self.size, replace=False))


def effect_variances(causal, mafs, sigma_g2, rule):
    """Per-locus variances ``psi_j`` over the causal set, summing to ``sigma_g2``."""
    causal = np.asarray(causal, dtype=np.int64)
    if causal.size == 0:
        return np.zeros(0)
    if rule == "equal":
        return np.full(causal.size, sigma_g2 / causal.size)
    p = np.asarray(mafs, dtype=float)[causal]
    w = 1.0 / (p * (1.0 - p))
    return sigma_g2 * w / w.sum()


def simulate_effects(config: CausalConfig, mafs, sigma_g2, rng, m=None) -> EffectVector:
    """Draw fixed genetic effects ``u_j ~ N(0, psi_j)`` on the causal set, 0 elsewhere."""
    if sigma_g2 < 0:
        raise HeritabilityError("sigma_g2 must be nonnegative")
    if m is None:
        if mafs is None:
            raise HeritabilityError("need mafs or m to size the effect vector")
        m = len(mafs)
    if config.variance_rule == "maf_weighted":
        mafs = check_mafs(mafs)
        if mafs.size != m:
            raise HeritabilityError("MAF vector length does not match m")
    causal = config.draw_causal_set(m, rng) if sigma_g2 > 0 else np.zeros(0, dtype=np.int64)
    psi_a = effect_variances(causal, mafs, sigma_g2, config.variance_rule)
    u = np.zeros(m)
    psi = np.zeros(m)
    if causal.size:
        u[causal] = rng.standard_normal(causal.size) * np.sqrt(psi_a)
        psi[causal] = psi_a
    return EffectVector(u=u, causal=causal, psi=psi)


def combine_effects(parts: Sequence[EffectVector]) -> EffectVector:
    """Sum effect vectors with disjoint causal sets."""
    if not parts:
        raise HeritabilityError("nothing to combine")
    causal = np.concatenate([p.causal for p in parts])
    if np.unique(causal).size != causal.size:
        raise HeritabilityError("causal sets overlap")
    return EffectVector(
        u=np.sum([p.u for p in parts], axis=0),
        causal=np.sort(causal),
        psi=np.sum([p.psi for p in parts], axis=0),
    )


def simulate_phenotype(z, u, sigma_e2, rng):
    """``y = Z u + e`` with ``e ~ N(0, sigma_e2 I)``, then mean-centered."""
    z = check_genotypes(z)
    u = u.u if isinstance(u, EffectVector) else np.asarray(u, dtype=float)
    if u.shape != (z.shape[1],):
        raise HeritabilityError("effect vector does not match genotype columns")
    if sigma_e2 < 0:
        raise HeritabilityError("sigma_e2 must be nonnegative")
    y = z @ u
    if sigma_e2 > 0:
        y = y + rng.standard_normal(z.shape[0]) * np.sqrt(sigma_e2)
    return center(y)
