"""Batch pipeline: ingest, simulate, fit, analyse, and emit tables plus a manifest.

Every stage writes into a staging directory next to ``output_dir`` and moves
its files into place only on success, so a failed run leaves no partial
artifacts behind.  Apart from ``manifest.json`` (which records timings), the
outputs depend only on the config, the inputs and the seed.
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
import shutil
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__
from .analysis import (DyadSelector, _DeltaCache, decile_curve, dyad_probability_sample,
                       panel_mixing)
from .config import ConfigError, DataConfig, Diagnostic, RunConfig, simulation_theta, sparsity_warnings, validate
from .estimation import FitResult, bootstrap_fit, period_blocks
from .io import read_panel, write_panel, write_table
from .netcore import PanelNetwork
from .simulation import make_attribute_generator, make_dyad_generator, simulate_panel
from .terms import ModelSpec

logger = logging.getLogger(__name__)

WORKERS_ENV = "TERGMKIT_WORKERS"


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _dump_json(obj, path: Path):
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n", encoding="utf-8")


@dataclass
class Stage:
    """Staging area for one command's artifacts."""

    cfg: RunConfig
    command: str
    directory: Path
    inputs: dict[str, str] = field(default_factory=dict)
    timings: dict[str, float] = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)

    def path(self, name: str) -> Path:
        p = self.directory / name
        p.parent.mkdir(parents=True, exist_ok=True)
        return p

    @contextmanager
    def timed(self, name: str):
        t0 = time.perf_counter()
        yield
        self.timings[name] = round(time.perf_counter() - t0, 6)


@contextmanager
def staged(cfg: RunConfig, command: str):
    out = Path(cfg.output_dir)
    out.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=f".{out.name}.staging-", dir=out.parent))
    stage = Stage(cfg, command, tmp)
    try:
        yield stage
        write_manifest(stage)
        out.mkdir(parents=True, exist_ok=True)
        for src in sorted(tmp.rglob("*")):
            if src.is_file():
                dst = out / src.relative_to(tmp)
                dst.parent.mkdir(parents=True, exist_ok=True)
                os.replace(src, dst)
    finally:
        shutil.rmtree(tmp, ignore_errors=True)


def write_manifest(stage: Stage):
    cfg = stage.cfg
    artifacts = {str(p.relative_to(stage.directory)): sha256_file(p)
                 for p in sorted(stage.directory.rglob("*")) if p.is_file()}
    manifest = {
        "tool": "tergmkit",
        "version": __version__,
        "command": stage.command,
        "config": str(cfg.source) if cfg.source else None,
        "config_sha256": cfg.digest,
        "inputs": stage.inputs,
        "seed": {"fit": cfg.fit.seed if cfg.fit else None,
                 "simulate": cfg.simulate.seed if cfg.simulate else None},
        "bootstrap": cfg.fit.bootstrap if cfg.fit else None,
        "workers": cfg.workers,
        "artifacts": artifacts,
        "timings_seconds": stage.timings,
        "notes": stage.notes,
    }
    _dump_json(manifest, stage.directory / "manifest.json")


def resolve_workers(cfg: RunConfig, flag: int | None = None) -> RunConfig:
    """Worker count precedence: command-line flag, then environment, then config."""
    if flag is not None:
        return cfg.with_overrides(workers=flag)
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            return cfg.with_overrides(workers=max(1, int(env)))
        except ValueError:
            raise ConfigError([Diagnostic("error", "bad-type",
                                          f"{WORKERS_ENV} must be an integer, got {env!r}")]) from None
    return cfg


def check(cfg: RunConfig, need_data: bool = True):
    diags = validate(cfg, check_data=need_data)
    if any(d.level == "error" for d in diags):
        raise ConfigError(diags)
    for d in diags:
        logger.warning("%s: %s", d.code, d.message)
    return diags


# ---------------------------------------------------------------------------
# stages


def ingest(cfg: RunConfig, stage: Stage | None = None) -> PanelNetwork:
    d = cfg.data
    panel = read_panel(d.edges, d.attributes, d.dyad_covariates, cfg.attribute_specs,
                       threshold=d.threshold, memory_order=cfg.memory_order, delimiter=d.delimiter)
    if stage is not None:
        for key in ("edges", "attributes", "dyad_covariates"):
            p = getattr(d, key)
            if p is not None:
                stage.inputs[key] = sha256_file(p)
    return panel


def simulate(cfg: RunConfig, model: ModelSpec) -> tuple[PanelNetwork, np.ndarray]:
    s = cfg.simulate
    theta = simulation_theta(cfg, model)
    panel = simulate_panel(s.n, s.periods, model, theta, make_attribute_generator(s.attributes),
                           seed=s.seed, burn_in=s.burn_in, dyad_generator=make_dyad_generator(s.dyad))
    if cfg.memory_order:
        panel = panel.with_memory_order(cfg.memory_order)
    return panel, theta


def load_panel(cfg: RunConfig, model: ModelSpec, stage: Stage | None = None):
    """Observed panel from ``data``, else a simulated one (with its true theta)."""
    if cfg.data is not None:
        return ingest(cfg, stage), None
    return simulate(cfg, model)


def panel_summary_rows(panel: PanelNetwork):
    for p in panel.periods:
        n = p.graph.n
        ties = p.graph.edge_count
        weight = int(p.weighted.weights.sum()) if p.weighted is not None else ties
        yield (p.label, n, ties, ties / (n * (n - 1)) if n > 1 else float("nan"), weight)


PANEL_SUMMARY_HEADER = ("period", "nodes", "ties", "density", "total_weight")


def interval_header(level: float) -> tuple[str, str]:
    a = (1 - level) / 2 * 100
    return f"{a:g}%", f"{100 - a:g}%"


def fit_panel(cfg: RunConfig, panel: PanelNetwork, model: ModelSpec):
    f = cfg.fit
    blocks = period_blocks(panel, model, cfg.workers)
    fit = bootstrap_fit(panel, model, B=f.bootstrap, seed=f.seed, workers=cfg.workers,
                        tolerance=f.tolerance, max_iterations=f.max_iterations, level=f.level,
                        blocks=blocks)
    return fit, blocks


def write_fit(stage: Stage, fit: FitResult):
    lo, hi = interval_header(fit.level)
    write_table(stage.path("coefficients.csv"), ("term", "Estimate", lo, hi),
                zip(fit.term_names, fit.theta, fit.ci_lower, fit.ci_upper))
    write_table(stage.path("bootstrap.csv"), ("replicate", "failed") + fit.term_names,
                ((b, int(fit.failed[b]), *fit.replicates[b]) for b in range(fit.B)))
    _dump_json(fit.to_dict(), stage.path("fit.json"))
    stage.notes.extend(fit.warnings)


def write_recovery(stage: Stage, fit: FitResult, truth: np.ndarray):
    lo, hi = interval_header(fit.level)
    rows = [(n, t, e, a, b, int(a <= t <= b))
            for n, t, e, a, b in zip(fit.term_names, truth, fit.theta, fit.ci_lower, fit.ci_upper)]
    write_table(stage.path("recovery.csv"), ("term", "true", "Estimate", lo, hi, "covered"), rows)


def _periods_of(panel: PanelNetwork, spec) -> list[str]:
    if spec is None or spec == "all":
        return panel.labels
    return [str(x) for x in (spec if isinstance(spec, list) else [spec])]


def run_analyses(stage: Stage, cfg: RunConfig, fit, model: ModelSpec, panel: PanelNetwork, blocks=None):
    req = cfg.analysis
    cache = _DeltaCache()
    if blocks is not None:
        cache.update(zip(panel.modeled_indices, blocks))
    else:
        for t in panel.modeled_indices:
            cache.get_block(model, panel, t)

    for m in req.get("mixing") or []:
        attr = m["attr"]
        rows = []
        for label in _periods_of(panel, m.get("periods")):
            rep = panel_mixing(panel, label, attr, bool(m.get("exclude_self", False)))
            rows += [(label, *r) for r in rep.rows()]
        write_table(stage.path(f"mixing_{attr}.csv"),
                    ("period", "sender", "receiver", "ties", "observed_share", "baseline_share",
                     "preferential"), rows)

    def probability(r):
        sel = DyadSelector.from_dict(r)
        m, seed = r.get("m"), int(r.get("seed", 0))
        out = [dyad_probability_sample(fit, model, panel, r.get("periods"), sel, m, seed, cache)]
        if r.get("per_period", False):
            for t in panel.modeled_indices:
                try:
                    out.append(dyad_probability_sample(fit, model, panel, panel.periods[t].label, sel,
                                                       m, seed, cache))
                except ValueError:
                    continue
        return out

    def decile(r):
        sel = DyadSelector({}, dict(r.get("receiver") or {}), str(r.get("name", "")))
        return decile_curve(fit, model, panel, str(r["period"]), r["attr"], sel, r.get("m"),
                            int(r.get("seed", 0)), cache)

    probs = req.get("probabilities") or []
    deciles = req.get("deciles") or []
    with ThreadPoolExecutor(max_workers=max(1, cfg.workers)) as ex:
        prob_results = list(ex.map(probability, probs))
        decile_results = list(ex.map(decile, deciles))

    if probs:
        rows = []
        for group in prob_results:
            for s in group:
                period = "all" if len(s.periods) > 1 else s.periods[0]
                rows.append((s.selector, period, s.median, s.q25, s.q75, s.mean, s.m, s.matches, s.seed))
        write_table(stage.path("probabilities.csv"),
                    ("selector", "period", "median", "q25", "q75", "mean", "m", "matches", "seed"), rows)
    for k, (r, curve) in enumerate(zip(deciles, decile_results)):
        name = r.get("name") or f"{r['attr']}_{k}"
        write_table(stage.path(f"decile_{name}.csv"),
                    ("decile", "lower", "upper", "median", "q25", "q75", "m", "matches"), curve.rows())


# ---------------------------------------------------------------------------
# commands


def cmd_validate(cfg: RunConfig):
    return validate(cfg)


def cmd_ingest(cfg: RunConfig) -> Path:
    if cfg.data is None:
        raise ConfigError([Diagnostic("error", "missing-input", "ingest needs a data section")])
    check(cfg)
    with staged(cfg, "ingest") as stage:
        with stage.timed("ingest"):
            panel = ingest(cfg, stage)
        write_table(stage.path("panel_summary.csv"), PANEL_SUMMARY_HEADER, panel_summary_rows(panel))
    return cfg.output_dir


def _tie_weight(cfg: RunConfig) -> int:
    # simulated ties must survive the configured threshold when re-ingested
    return (cfg.data or DataConfig()).threshold + 1


def cmd_simulate(cfg: RunConfig) -> Path:
    """Simulate from the ``simulate`` section even when ``data`` is also configured."""
    if cfg.simulate is None:
        raise ConfigError([Diagnostic("error", "missing-simulate", "simulate section is required")])
    check(cfg, need_data=False)
    model = cfg.model()
    with staged(cfg, "simulate") as stage:
        with stage.timed("simulate"):
            panel, theta = simulate(cfg, model)
        write_panel(panel, stage.directory / "panel", tie_weight=_tie_weight(cfg))
        write_table(stage.path("panel_summary.csv"), PANEL_SUMMARY_HEADER, panel_summary_rows(panel))
        if cfg.simulate.fit and cfg.fit is not None:
            with stage.timed("fit"):
                fit, _ = fit_panel(cfg, panel, model)
            write_fit(stage, fit)
            write_recovery(stage, fit, theta)
    return cfg.output_dir


def cmd_fit(cfg: RunConfig) -> Path:
    check(cfg)
    model = cfg.model()
    with staged(cfg, "fit") as stage:
        with stage.timed("ingest"):
            panel, truth = load_panel(cfg, model, stage)
        with stage.timed("fit"):
            fit, _ = fit_panel(cfg, panel, model)
        write_fit(stage, fit)
        if truth is not None:
            write_recovery(stage, fit, truth)
    return cfg.output_dir


def cmd_report(cfg: RunConfig, fit_path: Path | None = None) -> Path:
    check(cfg)
    model = cfg.model()
    fit_path = Path(fit_path) if fit_path else cfg.output_dir / "fit.json"
    if not fit_path.exists():
        raise FileNotFoundError(f"no fit results at {fit_path}; run the fit command first")
    fit = FitResult.from_dict(json.loads(fit_path.read_text(encoding="utf-8")))
    if fit.term_names != tuple(model.names):
        raise ValueError(f"{fit_path}: terms do not match the configured model")
    with staged(cfg, "report") as stage:
        stage.inputs["fit"] = sha256_file(fit_path)
        with stage.timed("ingest"):
            panel, _ = load_panel(cfg, model, stage)
        with stage.timed("analysis"):
            run_analyses(stage, cfg, fit, model, panel)
    return cfg.output_dir


def cmd_run(cfg: RunConfig) -> Path:
    """Ingest (or simulate), fit, and run every requested analysis."""
    diags = check(cfg)
    model = cfg.model()
    with staged(cfg, "run") as stage:
        stage.notes.extend(f"{d.code}: {d.message}" for d in diags if d.level == "warning")
        with stage.timed("ingest"):
            panel, truth = load_panel(cfg, model, stage)
        if truth is not None:
            write_panel(panel, stage.directory / "panel", tie_weight=_tie_weight(cfg))
            stage.notes.extend(f"{d.code}: {d.message}" for d in sparsity_warnings(cfg, model, panel))
        write_table(stage.path("panel_summary.csv"), PANEL_SUMMARY_HEADER, panel_summary_rows(panel))
        with stage.timed("fit"):
            fit, blocks = fit_panel(cfg, panel, model)
        write_fit(stage, fit)
        if truth is not None:
            write_recovery(stage, fit, truth)
        with stage.timed("analysis"):
            run_analyses(stage, cfg, fit, model, panel, blocks)
    return cfg.output_dir


COMMANDS: dict[str, Any] = {
    "ingest": cmd_ingest, "simulate": cmd_simulate, "fit": cmd_fit, "report": cmd_report, "run": cmd_run,
}
