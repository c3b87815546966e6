"""Simulate, estimate and tabulate: the experiment loop.

Each replicate draws its genotypes once from its own sub-stream and every
scenario's phenotype is fit against the same genotypes, so kernel
decompositions are shared across scenarios. Rows are long-format, one per
(replicate, scenario, estimator, quantity).
"""
from __future__ import annotations

import logging
import platform
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np

from .. import __version__
from ..copula import CopulaSampler
from ..core import LDMatrix, Projection, check_mafs, standardize
from ..estimators import KernelSpectrum, c_heritability_mle, he_regression, mle_single_kernel
from ..estimators.two_component import fit_two_component, subset_kernels
from ..exceptions import HeritabilityError
from ..io import load_array, write_csv, write_json
from ..kernels import euclidean_grm, mahalanobis_grm, whitened_design
from ..simulate import (
    EFFECTS,
    GENOTYPES,
    MAFS,
    NOISE,
    RngStream,
    build_block_ar_sigma,
    combine_effects,
    sample_mafs,
    simulate_effects,
    simulate_gaussian_genotypes,
    simulate_phenotype,
)
from ..truth import genetic_variance, schur_term
from .config import ExperimentConfig
from .summary import SUMMARY_COLUMNS, summarize

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
ROW_COLUMNS = (
    "replicate", "scenario", "estimator", "quantity", "estimate", "truth", "se",
    "converged", "boundary", "flags",
)
FAILURE_THRESHOLD = 0.05


class ExperimentError(HeritabilityError):
    """A replicate failed; carries the replicate id."""

    def __init__(self, replicate, cause):
        super().__init__(f"replicate {replicate} failed: {type(cause).__name__}: {cause}")
        self.replicate = replicate
        self.cause = cause


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    rows: List[dict]
    summary: List[dict]
    manifest: dict
    n_fits: int = 0
    n_failed_fits: int = 0

    @property
    def failure_fraction(self):
        return self.n_failed_fits / self.n_fits if self.n_fits else 0.0

    @property
    def threshold_exceeded(self):
        return self.failure_fraction > FAILURE_THRESHOLD

    def write(self, out_dir):
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_csv(out / "replicates.csv", self.rows, ROW_COLUMNS)
        write_csv(out / "summary.csv", self.summary, SUMMARY_COLUMNS)
        write_json(out / "manifest.json", self.manifest)
        return out


@dataclass
class _Context:
    """State shared read-only by all replicates."""

    cfg: ExperimentConfig
    ld: LDMatrix
    mafs: Optional[np.ndarray]
    sampler: Optional[CopulaSampler]
    subsets: dict
    fixed_effects: dict = field(default_factory=dict)


def _load_ld(cfg):
    if cfg.ld.kind == "ar_blocks":
        return build_block_ar_sigma(cfg.ld.ar_spec(cfg.m))
    sigma = load_array(cfg.ld.path, ndim=2)
    if sigma.shape != (cfg.m, cfg.m):
        raise HeritabilityError(f"LD file is {sigma.shape}, config has m = {cfg.m}")
    return LDMatrix(sigma)


def _load_mafs(cfg, root):
    if cfg.maf.source == "file":
        p = check_mafs(load_array(cfg.maf.path, ndim=1), min_maf=0.0)
        if p.size != cfg.m:
            raise HeritabilityError(f"MAF file has {p.size} entries, config has m = {cfg.m}")
        return p
    return sample_mafs(
        cfg.m, cfg.maf.min_maf, cfg.maf.max_adjacent_diff, rng=root.generator(MAFS)
    )


def draw_effects(ctx, scenario, rng):
    """Sum of one effect draw per scenario component (disjoint causal sets)."""
    parts = [
        simulate_effects(
            comp.causal_config(ctx.cfg.m, ctx.cfg.variance_rule, ctx.subsets), ctx.mafs,
            comp.sigma2, rng,
            m=ctx.cfg.m,
        )
        for comp in scenario.components
    ]
    return combine_effects(parts)


def _row(r, scenario, estimator, quantity, estimate, truth, se=None, converged=True,
         boundary=False, flags=""):
    return dict(
        replicate=r, scenario=scenario, estimator=estimator, quantity=quantity,
        estimate=float(estimate), truth=None if truth is None else float(truth),
        se=None if se is None else float(se), converged=bool(converged),
        boundary=bool(boundary), flags=flags,
    )


def _genotypes(ctx, rng):
    cfg = ctx.cfg
    if cfg.genotype_model == "gaussian":
        return simulate_gaussian_genotypes(cfg.n, ctx.ld, rng)
    f = ctx.sampler.sample(cfg.n, rng)
    return standardize(f, ctx.mafs)


class _Kernels:
    """Per-replicate lazily built kernels, spectra and designs."""

    def __init__(self, ctx, z):
        self.ctx, self.z = ctx, z
        self._cache = {}

    def _get(self, key, build):
        if key not in self._cache:
            self._cache[key] = build()
        return self._cache[key]

    def grm(self, kind):
        if kind == "euclidean":
            return self._get(("grm", kind), lambda: euclidean_grm(self.z))
        return self._get(("grm", kind), lambda: mahalanobis_grm(self.z, self.ctx.ld))

    def grm_spectrum(self, kind):
        return self._get(("spec", kind), lambda: KernelSpectrum.from_kernel(self.grm(kind).k))

    def design(self, subset_name):
        def build():
            if subset_name is None:
                proj = Projection.identity(self.z.shape[1])
            else:
                proj = Projection.subset(self.ctx.subsets[subset_name], self.z.shape[1])
            w = whitened_design(self.z, self.ctx.ld, proj)
            return w, KernelSpectrum.from_design(w.w, w.k)

        return self._get(("design", subset_name), build)

    def split(self, subset_name):
        return self._get(
            ("split", subset_name), lambda: subset_kernels(self.z, self.ctx.subsets[subset_name])
        )


def _run_replicate(ctx, r):
    cfg = ctx.cfg
    stream = RngStream(cfg.seed).for_replicate(r)
    z = _genotypes(ctx, stream.generator(GENOTYPES))
    kern = _Kernels(ctx, z)
    sigma = ctx.ld.sigma
    rows = []
    fits = failed = 0
    for s_idx, scen in enumerate(cfg.scenarios):
        if cfg.effect_regime == "fixed":
            eff = ctx.fixed_effects[scen.name]
        else:
            eff = draw_effects(ctx, scen, stream.generator(s_idx, EFFECTS))
        y = simulate_phenotype(z, eff, scen.sigma_e2, stream.generator(s_idx, NOISE))
        g = genetic_variance(eff.u, sigma)
        total = g + scen.sigma_e2
        h2_total = g / total
        h2_s = {
            name: (g - schur_term(eff.u, sigma, idx)) / total
            for name, idx in ctx.subsets.items()
        }
        for est in cfg.estimators:
            if est.startswith("mle-"):
                kind = est[4:]
                fit = mle_single_kernel(
                    y, kern.grm(kind), cfg.eta2_bounds, spectrum=kern.grm_spectrum(kind)
                )
                fits += 1
                failed += fit.boundary_flag
                rows.append(_row(r, scen.name, est, "h2", fit.h2_hat, h2_total,
                                 boundary=fit.boundary_flag))
            elif est.startswith("he-"):
                fit = he_regression(y, kern.grm(est[3:]))
                flags = "out_of_range" if fit.flags["out_of_range"] else ""
                rows.append(_row(r, scen.name, est, "h2", fit.h2_hat, h2_total, flags=flags))
            elif est == "cmle":
                targets = [(None, "h2", h2_total)] if not ctx.subsets else [
                    (name, f"h2_S[{name}]", h2_s[name]) for name in ctx.subsets
                ]
                for name, quantity, truth in targets:
                    w, spec = kern.design(name)
                    fit = c_heritability_mle(y, w, cfg.eta2_bounds, spectrum=spec)
                    fits += 1
                    failed += fit.boundary_flag
                    flags = "k_over_n_near_one" if fit.flags["k_over_n_near_one"] else ""
                    rows.append(_row(r, scen.name, est, quantity, fit.h2_hat, truth, se=fit.se,
                                     boundary=fit.boundary_flag, flags=flags))
            elif est.startswith("two-comp"):
                reml = est.endswith("reml")
                for name, idx in ctx.subsets.items():
                    k_s, k_sc = kern.split(name)
                    fit = fit_two_component(y, k_s, k_sc, reml=reml)
                    fits += 1
                    failed += not fit.converged
                    in_s = np.zeros(cfg.m, dtype=bool)
                    in_s[idx] = True
                    truths = {
                        "h2_S": h2_s[name],
                        "sigma2_S": float(eff.psi[in_s].sum()),
                        "sigma2_Sc": float(eff.psi[~in_s].sum()),
                        "sigma2_e": scen.sigma_e2,
                    }
                    values = {
                        "h2_S": fit.h2_S,
                        "sigma2_S": fit.sigma2_S,
                        "sigma2_Sc": fit.sigma2_Sc,
                        "sigma2_e": fit.sigma2_e,
                    }
                    flags = ";".join(f"pinned:{p}" for p in fit.pinned)
                    for q, v in values.items():
                        rows.append(_row(r, scen.name, est, f"{q}[{name}]", v, truths[q],
                                         converged=fit.converged, flags=flags))
    return rows, fits, failed


def build_context(cfg):
    root = RngStream(cfg.seed)
    ld = _load_ld(cfg)
    need_mafs = cfg.genotype_model == "copula_binomial" or cfg.variance_rule == "maf_weighted"
    mafs = _load_mafs(cfg, root) if need_mafs or cfg.maf.source == "file" else None
    sampler = None
    if cfg.genotype_model == "copula_binomial":
        t0 = time.perf_counter()
        sampler = CopulaSampler(mafs, ld)
        log.info("copula table built in %.2fs (distortion %.3g)", time.perf_counter() - t0,
                 sampler.distortion)
    subsets = {s.name: s.indices_for(cfg.m) for s in cfg.subsets}
    for name, idx in subsets.items():
        if idx.size == 0 or idx.min() < 0 or idx.max() >= cfg.m:
            raise HeritabilityError(f"subset {name!r} is empty or outside [0, {cfg.m})")
    ctx = _Context(cfg, ld, mafs, sampler, subsets)
    if cfg.effect_regime == "fixed":
        for s_idx, scen in enumerate(cfg.scenarios):
            ctx.fixed_effects[scen.name] = draw_effects(ctx, scen, root.generator(s_idx, EFFECTS))
    return ctx


def run_experiment(cfg: ExperimentConfig, threads=1, full_scale=False, replicates=None):
    """Run every replicate and return rows, summary and manifest.

    ``replicates`` optionally restricts the run to the given replicate ids;
    each replicate's rows depend only on ``(config, seed, replicate id)``.
    """
    if full_scale:
        cfg = cfg.at_full_scale()
    t0 = time.perf_counter()
    ctx = build_context(cfg)
    ids = list(range(cfg.replicates)) if replicates is None else [int(r) for r in replicates]

    def work(r):
        try:
            return _run_replicate(ctx, r)
        except Exception as exc:  # surfaced with the replicate id
            raise ExperimentError(r, exc) from exc

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, ids))
    else:
        results = [work(r) for r in ids]
    rows = [row for res in results for row in res[0]]
    n_fits = sum(res[1] for res in results)
    n_failed = sum(res[2] for res in results)
    summary = summarize(rows) if len(ids) >= 2 else []
    wall = time.perf_counter() - t0
    manifest = {
        "name": cfg.name,
        "config_hash": cfg.digest(),
        "seed": cfg.seed,
        "replicates": len(ids),
        "n": cfg.n,
        "m": cfg.m,
        "full_scale": bool(full_scale),
        "schema_version": SCHEMA_VERSION,
        "row_columns": list(ROW_COLUMNS),
        "summary_columns": list(SUMMARY_COLUMNS),
        "summary_skipped": len(ids) < 2,
        "wall_time_s": round(wall, 3),
        "threads": threads,
        "versions": {
            "mahalh2": __version__,
            "numpy": np.__version__,
            "scipy": __import__("scipy").__version__,
            "python": platform.python_version(),
        },
        "fits": n_fits,
        "failed_fits": n_failed,
        "failure_fraction": n_failed / n_fits if n_fits else 0.0,
        "failure_threshold": FAILURE_THRESHOLD,
        "copula": None if ctx.sampler is None else {
            "distortion": ctx.sampler.distortion,
            "min_latent_eigenvalue": ctx.sampler.min_eigenvalue,
            "iterations": ctx.sampler.n_iter,
        },
    }
    res = ExperimentResult(cfg, rows, summary, manifest, n_fits, n_failed)
    if res.threshold_exceeded:
        log.error(
            "%d of %d fits hit a bound or failed to converge (%.1f%% > %.0f%%)",
            n_failed, n_fits, 100 * res.failure_fraction, 100 * FAILURE_THRESHOLD,
        )
    return res
