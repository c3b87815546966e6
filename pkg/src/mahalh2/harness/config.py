"""Experiment configuration: TOML parsing, validation and serialization.

A config describes one simulation design plus a list of scenarios that
vary the causal architecture. Regions may be given as absolute half-open
index ranges (``regions``) or as fractions of ``m`` (``region_fractions``);
fractions keep presets valid when ``--full-scale`` changes ``m``.
"""
from __future__ import annotations

import hashlib
import json
import re
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np
import tomli
import tomli_w

from ..exceptions import ConfigError
from ..simulate import ArBlockSpec, CausalConfig

ESTIMATORS = (
    "mle-euclidean",
    "mle-mahalanobis",
    "he-euclidean",
    "he-mahalanobis",
    "cmle",
    "two-comp",
    "two-comp-reml",
)

_TOP_KEYS = {
    "name", "replicates", "seed", "estimators", "scale", "ld", "genotypes", "maf",
    "effects", "noise", "subsets", "scenarios", "fit",
}
_SECTION_KEYS = {
    "scale": {"n", "m", "full_n", "full_m"},
    "ld": {"kind", "block_size", "rhos", "halves", "path"},
    "genotypes": {"model"},
    "maf": {"source", "min_maf", "max_adjacent_diff", "path"},
    "effects": {"regime", "variance_rule", "components"},
    "noise": {"sigma_e2"},
    "fit": {"eta2_bounds", "boundary_tolerance"},
}
_COMPONENT_KEYS = {
    "sigma2", "mode", "regions", "region_fractions", "indices", "size", "subset", "complement",
}
_SUBSET_KEYS = {"name", "every", "offset", "regions", "region_fractions", "indices"}
_SCENARIO_KEYS = {"name", "effects", "noise"}


def _resolve_ranges(regions, fractions, m):
    out = [(int(a), int(b)) for a, b in regions]
    out += [(int(round(a * m)), int(round(b * m))) for a, b in fractions]
    return tuple(out)


@dataclass(frozen=True)
class ComponentSpec:
    sigma2: float
    mode: str = "region"
    regions: Tuple[Tuple[int, int], ...] = ()
    region_fractions: Tuple[Tuple[float, float], ...] = ()
    indices: Optional[Tuple[int, ...]] = None
    size: Optional[int] = None
    subset: Optional[str] = None
    complement: bool = False

    def causal_config(self, m, variance_rule, subsets=None):
        """Resolve to a :class:`CausalConfig`; ``subsets`` maps names to index arrays."""
        indices = self.indices
        if self.subset is not None:
            idx = np.asarray(subsets[self.subset])
            if self.complement:
                idx = np.setdiff1d(np.arange(m), idx)
            indices = tuple(int(i) for i in idx)
        return CausalConfig(
            mode=self.mode,
            regions=_resolve_ranges(self.regions, self.region_fractions, m),
            indices=indices,
            size=self.size,
            variance_rule=variance_rule,
        )


@dataclass(frozen=True)
class SubsetSpec:
    name: str
    every: Optional[int] = None
    offset: int = 0
    regions: Tuple[Tuple[int, int], ...] = ()
    region_fractions: Tuple[Tuple[float, float], ...] = ()
    indices: Optional[Tuple[int, ...]] = None

    def indices_for(self, m):
        if self.indices is not None:
            idx = np.asarray(self.indices, dtype=np.int64)
        elif self.every is not None:
            idx = np.arange(self.offset, m, self.every, dtype=np.int64)
        else:
            ranges = _resolve_ranges(self.regions, self.region_fractions, m)
            idx = np.concatenate([np.arange(a, b) for a, b in ranges]).astype(np.int64)
        return np.unique(idx)


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    components: Tuple[ComponentSpec, ...]
    sigma_e2: float


@dataclass(frozen=True)
class LdSpec:
    kind: str = "ar_blocks"
    block_size: Optional[int] = None
    rhos: Optional[Tuple[float, ...]] = None
    halves: Optional[Tuple[float, float]] = None
    path: Optional[str] = None

    def ar_spec(self, m):
        if self.rhos is not None:
            spec = ArBlockSpec(self.block_size, self.rhos)
            if spec.m != m:
                raise ConfigError(f"LD blocks cover {spec.m} SNPs but m = {m}")
            return spec
        return ArBlockSpec.halves(m, self.block_size, *self.halves)


@dataclass(frozen=True)
class MafSpec:
    source: str = "sampled"
    min_maf: float = 0.05
    max_adjacent_diff: float = 0.05
    path: Optional[str] = None


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    n: int
    m: int
    replicates: int
    seed: int
    estimators: Tuple[str, ...]
    scenarios: Tuple[ScenarioSpec, ...]
    ld: LdSpec = field(default_factory=LdSpec)
    genotype_model: str = "gaussian"
    maf: MafSpec = field(default_factory=MafSpec)
    effect_regime: str = "redrawn"
    variance_rule: str = "equal"
    subsets: Tuple[SubsetSpec, ...] = ()
    full_n: Optional[int] = None
    full_m: Optional[int] = None
    eta2_bounds: Tuple[float, float] = (1e-6, 1e6)

    def at_full_scale(self):
        from dataclasses import replace

        return replace(self, n=self.full_n or self.n, m=self.full_m or self.m)

    def digest(self):
        blob = json.dumps(config_to_dict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


# ---------------------------------------------------------------------------
# parsing


def _line_of(text, key):
    if text is None:
        return None
    pat = re.compile(rf"^\s*(\[+\s*)?[\w.\-]*\b{re.escape(key)}\b")
    for i, line in enumerate(text.splitlines(), start=1):
        if pat.match(line):
            return i
    return None


class _Parser:
    def __init__(self, text=None):
        self.text = text

    def fail(self, msg, key=None):
        raise ConfigError(msg, line=_line_of(self.text, key) if key else None)

    def check_keys(self, table, allowed, where):
        for key in table:
            if key not in allowed:
                self.fail(f"unknown key {key!r} in {where}", key)

    def require(self, table, key, where):
        if key not in table:
            self.fail(f"missing required field {key!r} in {where}")
        return table[key]

    def number(self, value, key, kind=float, lo=None, hi=None, strict_lo=False):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            self.fail(f"{key!r} must be a number, got {value!r}", key)
        if kind is int and (not isinstance(value, int)):
            self.fail(f"{key!r} must be an integer, got {value!r}", key)
        if lo is not None and (value < lo or (strict_lo and value == lo)):
            self.fail(f"{key!r} = {value} is out of range", key)
        if hi is not None and value > hi:
            self.fail(f"{key!r} = {value} is out of range", key)
        return kind(value)

    def ranges(self, value, key, kind):
        if not isinstance(value, list) or not all(
            isinstance(r, list) and len(r) == 2 for r in value
        ):
            self.fail(f"{key!r} must be a list of [start, stop] pairs", key)
        return tuple((kind(a), kind(b)) for a, b in value)

    def component(self, t):
        self.check_keys(t, _COMPONENT_KEYS, "effects component")
        sigma2 = self.number(self.require(t, "sigma2", "effects component"), "sigma2", lo=0)
        mode = t.get("mode", "region")
        if mode not in ("all", "region", "uniform_sample"):
            self.fail(f"unknown causal mode {mode!r}", "mode")
        size = t.get("size")
        if mode == "uniform_sample":
            size = self.number(self.require(t, "size", "uniform_sample component"), "size", int, lo=0)
        idx = t.get("indices")
        complement = t.get("complement", False)
        if not isinstance(complement, bool):
            self.fail("'complement' must be true or false", "complement")
        if complement and "subset" not in t:
            self.fail("'complement' needs a 'subset'", "complement")
        return ComponentSpec(
            sigma2=sigma2,
            mode=mode,
            regions=self.ranges(t.get("regions", []), "regions", int),
            region_fractions=self.ranges(t.get("region_fractions", []), "region_fractions", float),
            indices=tuple(int(i) for i in idx) if idx is not None else None,
            size=size,
            subset=str(t["subset"]) if "subset" in t else None,
            complement=complement,
        )

    def effects(self, t, where):
        self.check_keys(t, _SECTION_KEYS["effects"], where)
        comps = t.get("components")
        if not comps:
            self.fail(f"{where} needs at least one [[effects.components]] entry", "components")
        return tuple(self.component(c) for c in comps)

    def subset(self, t):
        self.check_keys(t, _SUBSET_KEYS, "subsets entry")
        name = str(self.require(t, "name", "subsets entry"))
        every = t.get("every")
        if every is not None:
            every = self.number(every, "every", int, lo=1)
        idx = t.get("indices")
        spec = SubsetSpec(
            name=name,
            every=every,
            offset=self.number(t.get("offset", 0), "offset", int, lo=0),
            regions=self.ranges(t.get("regions", []), "regions", int),
            region_fractions=self.ranges(t.get("region_fractions", []), "region_fractions", float),
            indices=tuple(int(i) for i in idx) if idx is not None else None,
        )
        if spec.every is None and spec.indices is None and not (spec.regions or spec.region_fractions):
            self.fail(f"subset {name!r} defines no indices", "name")
        return spec

    def parse(self, d):
        self.check_keys(d, _TOP_KEYS, "top level")
        for section, allowed in _SECTION_KEYS.items():
            if section in d:
                if not isinstance(d[section], dict):
                    self.fail(f"[{section}] must be a table", section)
                if section != "effects":
                    self.check_keys(d[section], allowed, f"[{section}]")
        name = str(self.require(d, "name", "top level"))
        replicates = self.number(self.require(d, "replicates", "top level"), "replicates", int, lo=1)
        seed = self.number(self.require(d, "seed", "top level"), "seed", int, lo=0)
        est = self.require(d, "estimators", "top level")
        if not isinstance(est, list) or not est:
            self.fail("'estimators' must be a nonempty list", "estimators")
        for e in est:
            if e not in ESTIMATORS:
                self.fail(f"unknown estimator {e!r}; choose from {', '.join(ESTIMATORS)}", "estimators")

        scale = self.require(d, "scale", "top level")
        n = self.number(self.require(scale, "n", "[scale]"), "n", int, lo=3)
        m = self.number(self.require(scale, "m", "[scale]"), "m", int, lo=1)
        full_n = scale.get("full_n")
        full_m = scale.get("full_m")

        ld_t = self.require(d, "ld", "top level")
        kind = ld_t.get("kind", "ar_blocks")
        if kind == "ar_blocks":
            bs = self.number(self.require(ld_t, "block_size", "[ld]"), "block_size", int, lo=1)
            rhos = ld_t.get("rhos")
            halves = ld_t.get("halves")
            if (rhos is None) == (halves is None):
                self.fail("[ld] needs exactly one of 'rhos' or 'halves'", "ld")
            for r in rhos or halves:
                if abs(r) >= 1:
                    self.fail(f"AR correlation {r} must lie in (-1, 1)", "rhos" if rhos else "halves")
            ld = LdSpec(
                kind, bs,
                tuple(float(r) for r in rhos) if rhos else None,
                tuple(float(r) for r in halves) if halves else None,
            )
            if halves is not None and len(halves) != 2:
                self.fail("'halves' takes two correlations", "halves")
            if m % bs:
                self.fail(f"m = {m} is not a multiple of block_size = {bs}", "block_size")
        elif kind == "file":
            ld = LdSpec(kind, path=str(self.require(ld_t, "path", "[ld]")))
        else:
            self.fail(f"unknown LD kind {kind!r}", "kind")

        model = d.get("genotypes", {}).get("model", "gaussian")
        if model not in ("gaussian", "copula_binomial"):
            self.fail(f"unknown genotype model {model!r}", "model")

        maf_t = d.get("maf", {})
        source = maf_t.get("source", "sampled")
        if source not in ("sampled", "file"):
            self.fail(f"unknown MAF source {source!r}", "source")
        maf = MafSpec(
            source=source,
            min_maf=self.number(maf_t.get("min_maf", 0.05), "min_maf", lo=0, hi=0.5, strict_lo=True),
            max_adjacent_diff=self.number(
                maf_t.get("max_adjacent_diff", 0.05), "max_adjacent_diff", lo=0, strict_lo=True
            ),
            path=str(maf_t["path"]) if "path" in maf_t else None,
        )
        if source == "file" and maf.path is None:
            self.fail("MAF source 'file' needs a path", "source")

        eff = self.require(d, "effects", "top level")
        regime = eff.get("regime", "redrawn")
        if regime not in ("redrawn", "fixed"):
            self.fail(f"unknown effect regime {regime!r}", "regime")
        rule = eff.get("variance_rule", "equal")
        if rule not in ("equal", "maf_weighted"):
            self.fail(f"unknown variance rule {rule!r}", "variance_rule")
        base_components = self.effects(eff, "[effects]") if "components" in eff else None

        noise = self.require(d, "noise", "top level")
        base_e2 = self.number(self.require(noise, "sigma_e2", "[noise]"), "sigma_e2", lo=0)

        scenarios = []
        for s in d.get("scenarios", []):
            self.check_keys(s, _SCENARIO_KEYS, "scenario")
            sname = str(self.require(s, "name", "scenario"))
            comps = self.effects(s["effects"], f"scenario {sname!r}") if "effects" in s else base_components
            if comps is None:
                self.fail(f"scenario {sname!r} has no effect components", "name")
            e2 = base_e2
            if "noise" in s:
                self.check_keys(s["noise"], {"sigma_e2"}, f"scenario {sname!r} noise")
                e2 = self.number(s["noise"].get("sigma_e2", base_e2), "sigma_e2", lo=0)
            scenarios.append(ScenarioSpec(sname, comps, e2))
        if not scenarios:
            if base_components is None:
                self.fail("[effects] needs components when no scenarios are given", "effects")
            scenarios.append(ScenarioSpec("default", base_components, base_e2))
        names = [s.name for s in scenarios]
        if len(set(names)) != len(names):
            self.fail("scenario names must be unique", "scenarios")

        subsets = tuple(self.subset(t) for t in d.get("subsets", []))
        if len({s.name for s in subsets}) != len(subsets):
            self.fail("subset names must be unique", "subsets")
        known = {s.name for s in subsets}
        for scen in scenarios:
            for c in scen.components:
                if c.subset is not None and c.subset not in known:
                    self.fail(f"effects component refers to unknown subset {c.subset!r}", "subset")
        if any(e.startswith("two-comp") for e in est) and not subsets:
            self.fail("two-component estimators need at least one [[subsets]] entry", "estimators")

        fit = d.get("fit", {})
        bounds = tuple(float(b) for b in fit.get("eta2_bounds", (1e-6, 1e6)))
        if len(bounds) != 2 or not 0 < bounds[0] < bounds[1]:
            self.fail("eta2_bounds must be [lower, upper] with 0 < lower < upper", "eta2_bounds")

        return ExperimentConfig(
            name=name,
            n=n,
            m=m,
            replicates=replicates,
            seed=seed,
            estimators=tuple(est),
            scenarios=tuple(scenarios),
            ld=ld,
            genotype_model=model,
            maf=maf,
            effect_regime=regime,
            variance_rule=rule,
            subsets=subsets,
            full_n=int(full_n) if full_n is not None else None,
            full_m=int(full_m) if full_m is not None else None,
            eta2_bounds=bounds,
        )


def parse_config(text):
    try:
        d = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"TOML syntax error: {exc}") from None
    return _Parser(text).parse(d)


def config_from_dict(d):
    return _Parser().parse(d)


def load_config(path):
    """Read a config file, or a shipped preset when ``path`` names one."""
    p = Path(path)
    if not p.exists():
        if str(path) in list_presets():
            return load_preset(str(path))
        raise ConfigError(f"config file {path} does not exist")
    cfg = parse_config(p.read_text())
    # relative data paths are resolved against the config's directory
    from dataclasses import replace

    if cfg.ld.path and not Path(cfg.ld.path).is_absolute():
        cfg = replace(cfg, ld=replace(cfg.ld, path=str(p.parent / cfg.ld.path)))
    if cfg.maf.path and not Path(cfg.maf.path).is_absolute():
        cfg = replace(cfg, maf=replace(cfg.maf, path=str(p.parent / cfg.maf.path)))
    return cfg


def list_presets():
    files = resources.files("mahalh2.harness").joinpath("presets")
    return sorted(f.name[:-5] for f in files.iterdir() if f.name.endswith(".toml"))


def load_preset(name):
    f = resources.files("mahalh2.harness").joinpath("presets", f"{name}.toml")
    if not f.is_file():
        raise ConfigError(f"no preset named {name!r}")
    return parse_config(f.read_text())


# ---------------------------------------------------------------------------
# serialization


def _drop_none(d):
    return {k: v for k, v in d.items() if v is not None and v != () and v != []}


def _component_dict(c):
    d = _drop_none(asdict(c))
    if not d.get("complement"):
        d.pop("complement", None)
    for k in ("regions", "region_fractions"):
        if k in d:
            d[k] = [list(r) for r in d[k]]
    if "indices" in d:
        d["indices"] = list(d["indices"])
    return d


def config_to_dict(cfg):
    scale = _drop_none({"n": cfg.n, "m": cfg.m, "full_n": cfg.full_n, "full_m": cfg.full_m})
    ld = _drop_none(
        {
            "kind": cfg.ld.kind,
            "block_size": cfg.ld.block_size,
            "rhos": list(cfg.ld.rhos) if cfg.ld.rhos else None,
            "halves": list(cfg.ld.halves) if cfg.ld.halves else None,
            "path": cfg.ld.path,
        }
    )
    subsets = []
    for s in cfg.subsets:
        d = _component_dict(s)
        if s.every is None:
            d.pop("offset", None)
        subsets.append(d)
    return _drop_none(
        {
            "name": cfg.name,
            "replicates": cfg.replicates,
            "seed": cfg.seed,
            "estimators": list(cfg.estimators),
            "scale": scale,
            "ld": ld,
            "genotypes": {"model": cfg.genotype_model},
            "maf": _drop_none(asdict(cfg.maf)),
            "effects": {"regime": cfg.effect_regime, "variance_rule": cfg.variance_rule},
            "noise": {"sigma_e2": cfg.scenarios[0].sigma_e2},
            "fit": {"eta2_bounds": list(cfg.eta2_bounds)},
            "subsets": subsets,
            "scenarios": [
                {
                    "name": s.name,
                    "noise": {"sigma_e2": s.sigma_e2},
                    "effects": {"components": [_component_dict(c) for c in s.components]},
                }
                for s in cfg.scenarios
            ],
        }
    )


def dump_config(cfg):
    return tomli_w.dumps(config_to_dict(cfg))
