"""Command-line interface: ``mahalh2 <command> ...``.

Exit codes: 0 success, 1 invalid input or numerical error, 2 configuration
or usage error, 3 too many replicates hit a bound or failed to converge.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .core import LDMatrix, check_mafs, standardize, standardize_sample
from .exceptions import ConfigError, HeritabilityError
from .io import load_array, load_effects, save_array, write_json

log = logging.getLogger("mahalh2")

EXIT_OK, EXIT_ERROR, EXIT_CONFIG, EXIT_THRESHOLD = 0, 1, 2, 3


def parse_subset(spec, m=None):
    """Index set from ``a:b[,c:d...]`` ranges, ``every:K[:offset]``, or a file of indices."""
    if Path(spec).exists():
        return load_array(spec, ndim=1).astype(np.int64)
    if spec.startswith("every:"):
        if m is None:
            raise HeritabilityError("'every:' subsets need the number of SNPs")
        parts = spec.split(":")[1:]
        step = int(parts[0])
        offset = int(parts[1]) if len(parts) > 1 else 0
        return np.arange(offset, m, step, dtype=np.int64)
    try:
        ranges = [tuple(int(x) for x in r.split(":")) for r in spec.split(",")]
        out = []
        for r in ranges:
            out.append(np.arange(r[0], r[1]) if len(r) == 2 else np.array([r[0]]))
        return np.concatenate(out).astype(np.int64)
    except ValueError:
        raise HeritabilityError(f"cannot parse subset {spec!r}") from None


def _named_subset(spec, m):
    name, sep, rest = spec.partition("=")
    if not sep:
        return spec, parse_subset(spec, m)
    return name, parse_subset(rest, m)


def _load_genotypes(args):
    g = load_array(args.genotypes, ndim=2).astype(float)
    if args.encoding == "standardized":
        return g
    if args.mafs and args.sample_mafs:
        raise HeritabilityError("give --mafs or --sample-mafs, not both")
    if args.sample_mafs:
        return standardize_sample(g)[0]
    if not args.mafs:
        raise HeritabilityError("raw genotypes need --mafs or --sample-mafs")
    return standardize(g, check_mafs(load_array(args.mafs, ndim=1)))


def _load_ld(path, m=None):
    if path is None:
        return None
    ld = LDMatrix(load_array(path, ndim=2))
    if m is not None and ld.m != m:
        raise HeritabilityError(f"LD matrix is {ld.m} x {ld.m}, genotypes have {m} SNPs")
    return ld


# ---------------------------------------------------------------------------
# commands


def cmd_grm(args):
    from .kernels import euclidean_grm, mahalanobis_grm

    z = _load_genotypes(args)
    if args.kernel == "mahalanobis":
        ld = _load_ld(args.ld, z.shape[1])
        if ld is None:
            raise HeritabilityError("the Mahalanobis kernel needs --ld")
        k = mahalanobis_grm(z, ld)
    else:
        k = euclidean_grm(z)
    save_array(args.out, k.k)
    return EXIT_OK


def cmd_estimate(args):
    from .estimators import c_heritability_mle, he_regression, mle_single_kernel
    from .estimators.two_component import ml_two_component
    from .core import Projection, center
    from .kernels import euclidean_grm, mahalanobis_grm, whitened_design

    z = _load_genotypes(args)
    n, m = z.shape
    y = load_array(args.phenotypes, ndim=1).astype(float)
    if y.shape[0] != n:
        raise HeritabilityError(f"{y.shape[0]} phenotypes for {n} genotype rows")
    ld = _load_ld(args.ld, m)
    subset = parse_subset(args.subset, m) if args.subset else None

    def kernel():
        if args.kernel == "mahalanobis":
            if ld is None:
                raise HeritabilityError("the Mahalanobis kernel needs --ld")
            return mahalanobis_grm(z, ld)
        return euclidean_grm(z)

    if args.method == "mle":
        est = mle_single_kernel(y, kernel()).to_dict()
    elif args.method == "he":
        est = he_regression(center(y), kernel()).to_dict()
    elif args.method == "cmle":
        if ld is None:
            raise HeritabilityError("cmle needs --ld")
        proj = Projection.subset(subset, m) if subset is not None else Projection.identity(m)
        est = c_heritability_mle(y, whitened_design(z, ld, proj)).to_dict()
    else:
        if subset is None:
            raise HeritabilityError("two-comp needs --subset")
        est = ml_two_component(y, z, subset, reml=args.reml).to_dict()
    write_json(args.out, est)
    return EXIT_OK


def cmd_truth(args):
    from .truth import truth_report

    eff = load_effects(args.effects)
    sigma = load_array(args.ld, ndim=2)
    m = sigma.shape[0]
    subsets = dict(_named_subset(s, m) for s in args.subset or [])
    rep = truth_report(eff, sigma, args.sigma_e2, subsets=subsets)
    write_json(args.out, rep.to_dict())
    return EXIT_OK


def cmd_simulate(args):
    """Write one replicate's LD, MAFs, genotypes, effects and phenotypes."""
    from .harness.config import load_config
    from .harness.runner import draw_effects, build_context
    from .simulate import EFFECTS, GENOTYPES, NOISE, RngStream, simulate_gaussian_genotypes
    from .simulate import simulate_phenotype
    from .truth import truth_report

    cfg = load_config(args.config)
    if args.full_scale:
        cfg = cfg.at_full_scale()
    ctx = build_context(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ext = "." + args.format
    stream = RngStream(cfg.seed).for_replicate(args.replicate)
    rng = stream.generator(GENOTYPES)
    save_array(out / f"ld{ext}", ctx.ld.sigma)
    if ctx.mafs is not None:
        save_array(out / "mafs.txt", ctx.mafs)
    if cfg.genotype_model == "gaussian":
        z = simulate_gaussian_genotypes(cfg.n, ctx.ld, rng)
    else:
        f = ctx.sampler.sample(cfg.n, rng)
        save_array(out / f"raw_genotypes{ext}", f)
        z = standardize(f, ctx.mafs)
    save_array(out / f"genotypes{ext}", z)
    for s_idx, scen in enumerate(cfg.scenarios):
        if cfg.effect_regime == "fixed":
            eff = ctx.fixed_effects[scen.name]
        else:
            eff = draw_effects(ctx, scen, stream.generator(s_idx, EFFECTS))
        y = simulate_phenotype(z, eff, scen.sigma_e2, stream.generator(s_idx, NOISE))
        d = out / scen.name
        d.mkdir(exist_ok=True)
        save_array(d / "effects.txt", eff.u)
        save_array(d / "phenotypes.txt", y)
        rep = truth_report(eff, ctx.ld.sigma, scen.sigma_e2, ctx.subsets)
        write_json(d / "truth.json", rep.to_dict())
    write_json(
        out / "manifest.json",
        {
            "name": cfg.name,
            "config_hash": cfg.digest(),
            "seed": cfg.seed,
            "replicate": args.replicate,
            "n": cfg.n,
            "m": cfg.m,
            "genotype_model": cfg.genotype_model,
            "scenarios": [s.name for s in cfg.scenarios],
            "copula_distortion": None if ctx.sampler is None else ctx.sampler.distortion,
        },
    )
    return EXIT_OK


def cmd_experiment(args):
    from .harness.config import load_config
    from .harness.runner import run_experiment

    cfg = load_config(args.config)
    res = run_experiment(cfg, threads=args.threads, full_scale=args.full_scale)
    out = res.write(args.out)
    print(f"wrote {len(res.rows)} rows to {out}")
    for s in res.summary:
        print(
            f"{s['scenario']:>16} {s['estimator']:>16} {s['quantity']:>14}  "
            f"mean {s['mean']:.4f}  95% CI ({s['ci_low']:.4f}, {s['ci_high']:.4f})"
            + (f"  truth {s['truth_mean']:.4f}" if s["truth_mean"] is not None else "")
        )
    if res.threshold_exceeded:
        print(
            f"error: {res.n_failed_fits} of {res.n_fits} fits hit a bound or did not converge",
            file=sys.stderr,
        )
        return EXIT_THRESHOLD
    return EXIT_OK


# ---------------------------------------------------------------------------


def _genotype_args(p):
    p.add_argument("--genotypes", required=True, help="n x m matrix (.npy, .txt, .csv)")
    p.add_argument("--encoding", choices=("raw", "standardized"), default="standardized")
    p.add_argument("--mafs", help="population MAFs for raw genotypes")
    p.add_argument(
        "--sample-mafs", action="store_true", help="estimate MAFs from the raw genotypes"
    )


def build_parser():
    ap = argparse.ArgumentParser(prog="mahalh2", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate one replicate of an experiment to files")
    p.add_argument("--config", required=True, help="config file or preset name")
    p.add_argument("--out", required=True)
    p.add_argument("--replicate", type=int, default=0)
    p.add_argument("--format", choices=("csv", "npy"), default="csv", help="matrix file format")
    p.add_argument("--full-scale", action="store_true")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("grm", help="compute a genetic relationship matrix")
    p.add_argument("--kernel", choices=("euclidean", "mahalanobis"), required=True)
    _genotype_args(p)
    p.add_argument("--ld")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_grm)

    p = sub.add_parser("estimate", help="estimate heritability")
    p.add_argument("--method", choices=("mle", "he", "cmle", "two-comp"), required=True)
    p.add_argument("--kernel", choices=("euclidean", "mahalanobis"), default="mahalanobis")
    _genotype_args(p)
    p.add_argument("--phenotypes", required=True)
    p.add_argument("--ld")
    p.add_argument("--subset", help="a:b[,c:d], every:K[:offset] or a file of indices")
    p.add_argument("--reml", action="store_true", help="two-comp: restricted likelihood")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("truth", help="population heritabilities of fixed effects")
    p.add_argument("--effects", required=True)
    p.add_argument("--ld", required=True)
    p.add_argument("--sigma-e2", type=float, required=True)
    p.add_argument("--subset", action="append", help="[name=]subset spec; repeatable")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_truth)

    p = sub.add_parser("experiment", help="run a simulation study")
    p.add_argument("--config", required=True, help="config file or preset name")
    p.add_argument("--out", required=True)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--full-scale", action="store_true")
    p.set_defaults(func=cmd_experiment)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s"
    )
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except HeritabilityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
