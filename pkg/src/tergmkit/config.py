"""Run configuration: YAML schema (version 1), parsing and validation.

Top-level keys::

    schema_version: 1
    output_dir: out              # relative to the working directory
    workers: 1
    data:       {edges, attributes, dyad_covariates, delimiter, threshold}   # relative to the config file
    attributes: [{name, kind: numeric|categorical|binary, levels: [...]}]
    model:      {memory_order, terms: [...]}
    fit:        {bootstrap, seed, tolerance, max_iterations, level}
    analysis:   {mixing: [...], probabilities: [...], deciles: [...]}
    simulate:   {n, periods, theta, burn_in, seed, attributes, dyad, fit}

Either ``data`` or ``simulate`` supplies the panel.  Term entries follow
:func:`tergmkit.terms.term_from_dict`; ``kind: mixing`` expands a full set of
NodeMix terms minus a reference pair.
"""
from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping

import numpy as np
import pandas as pd
import yaml

from .netcore import ATTRIBUTE_KINDS, AttributeSpec, PanelError
from .terms import ModelError, ModelSpec, NodeMix, model_from_dicts

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
SPARSE_CELL_TIES = 5
TOP_LEVEL_KEYS = {"schema_version", "output_dir", "workers", "data", "attributes", "model", "fit",
                  "analysis", "simulate"}


class ConfigError(ValueError):
    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(d.message for d in self.diagnostics if d.level == "error"))


@dataclass(frozen=True)
class Diagnostic:
    level: str  # "error" or "warning"
    code: str
    message: str
    where: str = ""

    def to_dict(self) -> dict:
        return {"level": self.level, "code": self.code, "message": self.message, "where": self.where}


@dataclass(frozen=True)
class DataConfig:
    edges: Path | None = None
    attributes: Path | None = None
    dyad_covariates: Path | None = None
    delimiter: str = ","
    threshold: int = 1


@dataclass(frozen=True)
class FitConfig:
    bootstrap: int | None = None
    seed: int | None = None
    tolerance: float = 1e-8
    max_iterations: int = 100
    level: float = 0.95


@dataclass(frozen=True)
class SimulateConfig:
    n: int = 30
    periods: int = 10
    theta: Any = None  # mapping term name -> value, or list in model order
    burn_in: int = 100
    seed: int = 0
    attributes: Mapping[str, Any] | None = None
    dyad: Mapping[str, Any] | None = None
    fit: bool = True


@dataclass(frozen=True)
class RunConfig:
    source: Path | None = None
    raw: Mapping[str, Any] = field(default_factory=dict, repr=False)
    output_dir: Path = Path("out")
    workers: int = 1
    data: DataConfig | None = None
    attribute_specs: tuple[AttributeSpec, ...] = ()
    memory_order: int = 0
    terms: tuple[Mapping[str, Any], ...] = ()
    fit: FitConfig | None = None
    analysis: Mapping[str, Any] = field(default_factory=dict)
    simulate: SimulateConfig | None = None

    @property
    def digest(self) -> str:
        """sha256 of the canonical YAML of the raw configuration."""
        text = yaml.safe_dump(self.raw, sort_keys=True, default_flow_style=False)
        return hashlib.sha256(text.encode("utf-8")).hexdigest()

    def specs(self) -> dict[str, AttributeSpec]:
        if self.simulate is not None and self.data is None:
            from .simulation import make_attribute_generator
            gen = make_attribute_generator(self.simulate.attributes)
            if gen is not None:
                specs, _ = gen(max(self.simulate.n, 2), np.random.default_rng(0))
                return {s.name: s for s in specs}
        return {s.name: s for s in self.attribute_specs}

    def model(self) -> ModelSpec:
        return model_from_dicts(self.terms, self.specs())

    def with_overrides(self, seed: int | None = None, workers: int | None = None,
                       output_dir: str | Path | None = None, data_dir: str | Path | None = None) -> "RunConfig":
        """Copy with command-line overrides applied.

        ``data_dir`` points the data section at ``edges.csv``,
        ``attributes.csv`` and ``dyad_covariates.csv`` in one directory (the
        layout ``write_panel`` produces); absent optional files are skipped.
        """
        cfg = self
        if data_dir is not None:
            d = Path(data_dir)
            base = cfg.data or DataConfig()
            opt = {k: (d / f"{k}.csv" if (d / f"{k}.csv").exists() else None)
                   for k in ("attributes", "dyad_covariates")}
            cfg = replace(cfg, data=replace(base, edges=d / "edges.csv", delimiter=",", **opt))
        if seed is not None:
            if cfg.fit is not None:
                cfg = replace(cfg, fit=replace(cfg.fit, seed=int(seed)))
            if cfg.simulate is not None:
                cfg = replace(cfg, simulate=replace(cfg.simulate, seed=int(seed)))
        if workers is not None:
            cfg = replace(cfg, workers=int(workers))
        if output_dir is not None:
            cfg = replace(cfg, output_dir=Path(output_dir))
        return cfg


def _path(base: Path, value) -> Path | None:
    if value in (None, ""):
        return None
    p = Path(str(value)).expanduser()
    return p if p.is_absolute() else (base / p)


def _int(d, key, default, where, diags, minimum=None):
    v = d.get(key, default)
    if v is None:
        return None
    try:
        iv = int(v)
        if iv != v and not isinstance(v, str):
            raise ValueError
    except (TypeError, ValueError):
        diags.append(Diagnostic("error", "bad-type", f"{key} must be an integer, got {v!r}", where))
        return default
    if minimum is not None and iv < minimum:
        diags.append(Diagnostic("error", "out-of-range", f"{key} must be >= {minimum}, got {iv}", where))
    return iv


def parse_config(raw: Mapping[str, Any], source: Path | None = None) -> tuple[RunConfig, list[Diagnostic]]:
    """Schema-level parsing.  Returns the config and any diagnostics found."""
    diags: list[Diagnostic] = []
    if not isinstance(raw, Mapping):
        return RunConfig(source), [Diagnostic("error", "bad-document", "config must be a mapping")]
    base = source.parent if source is not None else Path.cwd()
    version = raw.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        diags.append(Diagnostic("error", "schema-version",
                                f"unsupported schema_version {version!r}; expected {SCHEMA_VERSION}"))
    for k in sorted(set(raw) - TOP_LEVEL_KEYS):
        diags.append(Diagnostic("warning", "unknown-key", f"unknown top-level key {k!r} ignored"))

    data = None
    if raw.get("data") is not None:
        d = raw["data"]
        data = DataConfig(_path(base, d.get("edges")), _path(base, d.get("attributes")),
                          _path(base, d.get("dyad_covariates")), str(d.get("delimiter", ",")),
                          _int(d, "threshold", 1, "data", diags, minimum=0))
        if data.edges is None:
            diags.append(Diagnostic("error", "missing-input", "data.edges is required", "data"))

    specs = []
    for k, a in enumerate(raw.get("attributes") or []):
        where = f"attributes[{k}]"
        try:
            kind = str(a.get("kind", "numeric")).lower()
            if kind not in ATTRIBUTE_KINDS:
                raise PanelError(f"kind must be one of {ATTRIBUTE_KINDS}, got {kind!r}")
            levels = tuple(str(x) for x in (a.get("levels") or ()))
            specs.append(AttributeSpec(str(a["name"]), kind, levels))
        except (PanelError, KeyError, AttributeError) as e:
            diags.append(Diagnostic("error", "bad-attribute", f"invalid attribute declaration: {e}", where))
    names = [s.name for s in specs]
    for dup in sorted({x for x in names if names.count(x) > 1}):
        diags.append(Diagnostic("error", "bad-attribute", f"attribute {dup!r} declared twice", "attributes"))

    model = raw.get("model") or {}
    terms = tuple(model.get("terms") or ())
    memory_order = _int(model, "memory_order", 0, "model", diags, minimum=0)

    fit = None
    if raw.get("fit") is not None:
        f = raw["fit"]
        fit = FitConfig(_int(f, "bootstrap", None, "fit", diags, minimum=1),
                        _int(f, "seed", None, "fit", diags, minimum=0),
                        float(f.get("tolerance", 1e-8)), _int(f, "max_iterations", 100, "fit", diags, minimum=1),
                        float(f.get("level", 0.95)))
        if not 0 < fit.level < 1:
            diags.append(Diagnostic("error", "out-of-range", f"fit.level must be in (0, 1), got {fit.level}", "fit"))

    sim = None
    if raw.get("simulate") is not None:
        s = raw["simulate"]
        sim = SimulateConfig(_int(s, "n", 30, "simulate", diags, minimum=2),
                             _int(s, "periods", 10, "simulate", diags, minimum=1),
                             s.get("theta"), _int(s, "burn_in", 100, "simulate", diags, minimum=0),
                             _int(s, "seed", 0, "simulate", diags, minimum=0),
                             s.get("attributes"), s.get("dyad"), bool(s.get("fit", True)))

    workers = _int(raw, "workers", 1, "", diags, minimum=1)
    cfg = RunConfig(source, dict(raw), Path(str(raw.get("output_dir") or "out")).expanduser(), workers, data,
                    tuple(specs), memory_order, terms, fit, dict(raw.get("analysis") or {}), sim)
    return cfg, diags


def load_config(path) -> RunConfig:
    """Read and parse a YAML config; schema errors raise ConfigError."""
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as e:
        raise ConfigError([Diagnostic("error", "bad-document", f"{path}: {e}")]) from None
    cfg, diags = parse_config(raw, path.resolve())
    if any(d.level == "error" for d in diags):
        raise ConfigError(diags)
    return cfg


# ---------------------------------------------------------------------------
# cross-reference validation


def _dyad_names(cfg: RunConfig) -> set[str] | None:
    if cfg.data is not None:
        path = cfg.data.dyad_covariates
        if path is None:
            return set()
        if not path.exists():
            return None
        df = pd.read_csv(path, sep=cfg.data.delimiter, dtype=str, keep_default_na=False)
        col = "covariate" if "covariate" in df.columns else "cov_name"
        return set(df[col].str.strip()) if col in df.columns else set()
    if cfg.simulate is not None:
        from .simulation import make_dyad_generator
        gen = make_dyad_generator(cfg.simulate.dyad)
        return set(gen(2, np.random.default_rng(0))) if gen is not None else set()
    return set()


def _check_selector(sel: Mapping[str, Any], specs, where, diags):
    for side in ("sender", "receiver"):
        for attr, cond in (sel.get(side) or {}).items():
            if attr not in specs:
                diags.append(Diagnostic("error", "undeclared-attribute",
                                        f"selector uses unknown attribute {attr!r}", where))
                continue
            spec = specs[attr]
            if spec.is_categorical:
                wanted = cond if isinstance(cond, (list, tuple)) else [cond]
                for lvl in wanted:
                    if str(lvl) not in spec.levels:
                        diags.append(Diagnostic("error", "undeclared-level",
                                                f"level {lvl!r} not in {list(spec.levels)}", where))


def validate(cfg: RunConfig, check_data: bool = True) -> list[Diagnostic]:
    """All schema and cross-reference checks; warnings are kept apart from errors."""
    _, diags = parse_config(cfg.raw, cfg.source) if cfg.raw else (None, [])
    if cfg.data is None and cfg.simulate is None:
        diags.append(Diagnostic("error", "missing-input", "need a data or a simulate section"))
    if cfg.data is not None and check_data:
        for key in ("edges", "attributes", "dyad_covariates"):
            p = getattr(cfg.data, key)
            if p is not None and not p.exists():
                diags.append(Diagnostic("error", "missing-input", f"data.{key}: no such file {p}", "data"))
    if not cfg.terms:
        diags.append(Diagnostic("error", "empty-model", "model.terms is empty", "model"))
    if cfg.fit is None:
        diags.append(Diagnostic("error", "missing-fit", "fit section with bootstrap and seed is required"))
    else:
        if cfg.fit.bootstrap is None:
            diags.append(Diagnostic("error", "missing-fit", "fit.bootstrap is required", "fit"))
        if cfg.fit.seed is None:
            diags.append(Diagnostic("error", "missing-fit", "fit.seed is required", "fit"))

    try:
        specs = cfg.specs()
    except (PanelError, ValueError, KeyError) as e:
        diags.append(Diagnostic("error", "bad-generator", f"simulate.attributes: {e}", "simulate"))
        specs = {}
    dyad_names = _dyad_names(cfg) if check_data else None

    model = None
    if cfg.terms:
        try:
            model = cfg.model()
        except ModelError as e:
            diags.append(Diagnostic("error", e.code, str(e), "model.terms"))
        except (TypeError, ValueError, AttributeError) as e:
            diags.append(Diagnostic("error", "invalid-term", f"bad term entry: {e}", "model.terms"))
    if model is not None:
        for k, term in enumerate(model.terms):
            try:
                term.validate(specs, dyad_names, cfg.memory_order)
            except ModelError as e:
                diags.append(Diagnostic("error", e.code, str(e), f"model.terms[{term.name}]"))
    if cfg.simulate is not None and model is not None:
        try:
            simulation_theta(cfg, model)
        except ValueError as e:
            diags.append(Diagnostic("error", "bad-theta", str(e), "simulate.theta"))

    for k, req in enumerate(cfg.analysis.get("mixing") or []):
        attr = req.get("attr")
        if attr not in specs or not specs[attr].is_categorical:
            diags.append(Diagnostic("error", "undeclared-attribute",
                                    f"mixing needs a declared categorical attribute, got {attr!r}",
                                    f"analysis.mixing[{k}]"))
    for k, req in enumerate(cfg.analysis.get("probabilities") or []):
        _check_selector(req, specs, f"analysis.probabilities[{k}]", diags)
    for k, req in enumerate(cfg.analysis.get("deciles") or []):
        where = f"analysis.deciles[{k}]"
        attr = req.get("attr")
        if attr not in specs or specs[attr].is_categorical:
            diags.append(Diagnostic("error", "undeclared-attribute",
                                    f"decile attribute must be declared numeric, got {attr!r}", where))
        if req.get("period") is None:
            diags.append(Diagnostic("error", "missing-period", "decile curve needs a period", where))
        _check_selector({"receiver": req.get("receiver") or {}}, specs, where, diags)

    if (check_data and model is not None and cfg.data is not None
            and not any(d.level == "error" for d in diags)):
        diags.extend(sparsity_warnings(cfg, model))
    return diags


def sparsity_warnings(cfg: RunConfig, model: ModelSpec, panel=None) -> list[Diagnostic]:
    """Warn for NodeMix cells with fewer than SPARSE_CELL_TIES ties over the modeled periods."""
    cells = [t for t in model.terms if isinstance(t, NodeMix)]
    if not cells:
        return []
    if panel is None:
        from .pipeline import ingest
        panel = ingest(cfg)
    out = []
    for term in cells:
        ties = 0
        for t in panel.modeled_indices:
            cov = panel.covariates(t)
            Y = panel.periods[t].graph.adjacency
            ties += int((term.contribution(cov, Y.shape[0]) * Y).sum())
        if ties < SPARSE_CELL_TIES:
            out.append(Diagnostic("warning", "sparse-mixing-cell",
                                  f"term {term.name!r} has {ties} observed ties (< {SPARSE_CELL_TIES})",
                                  f"model.terms[{term.name}]"))
    return out


def simulation_theta(cfg: RunConfig, model: ModelSpec) -> np.ndarray:
    theta = cfg.simulate.theta
    if theta is None:
        raise ValueError("simulate.theta is required")
    if isinstance(theta, Mapping):
        unknown = sorted(set(theta) - set(model.names))
        if unknown:
            raise ValueError(f"simulate.theta names unknown terms {unknown}")
        missing = [n for n in model.names if n not in theta]
        if missing:
            raise ValueError(f"simulate.theta has no value for {missing}")
        return np.array([float(theta[n]) for n in model.names])
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (len(model),):
        raise ValueError(f"simulate.theta has {theta.size} values, model has {len(model)} terms")
    return theta
