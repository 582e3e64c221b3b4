"""Assortative-mixing baselines and dyad-sampled tie probabilities."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np
from scipy.special import expit

from .netcore import AttributeSpec, DirectedGraph, PanelNetwork, PeriodCovariates
from .statistics import change_statistics
from .terms import ModelSpec


class AnalysisError(ValueError):
    pass


def _codes(values: Sequence[Any], levels: Sequence[str]) -> np.ndarray:
    values = np.asarray(values, dtype=object) if not isinstance(values, np.ndarray) else values
    if values.dtype.kind in "iu":
        return values.astype(np.int64)
    lookup = {lvl: k for k, lvl in enumerate(levels)}
    out = np.full(len(values), -1, dtype=np.int64)
    for pos, v in enumerate(values):
        if v is None:
            continue
        if str(v) not in lookup:
            raise AnalysisError(f"value {v!r} not in levels {list(levels)}")
        out[pos] = lookup[str(v)]
    return out


def baseline_shares(roster_values: Sequence[Any], levels: Sequence[str],
                    exclude_self: bool = False) -> np.ndarray:
    """Share of each group in the roster: the mixing expected without preference.

    With ``exclude_self`` the result is a matrix whose row g gives the shares
    seen by a member of group g once the member is removed from the pool.
    Nodes with a missing value are left out.
    """
    codes = _codes(roster_values, levels)
    codes = codes[codes >= 0]
    if len(codes) == 0:
        raise AnalysisError("empty roster")
    sizes = np.bincount(codes, minlength=len(levels)).astype(float)
    if not exclude_self:
        return sizes / sizes.sum()
    if sizes.sum() < 2:
        raise AnalysisError("self-excluded baseline needs at least two nodes")
    return (sizes[None, :] - np.eye(len(levels))) / (sizes.sum() - 1)


@dataclass(frozen=True, eq=False)
class MixingReport:
    """Observed group-to-group tie shares against the roster baseline.

    ``shares[g, h]`` is the fraction of group g's out-ties that go to group
    h (NaN for a group without out-ties); ``preferential = shares -
    baseline`` column-wise.
    """

    attribute: str
    levels: tuple[str, ...]
    group_sizes: np.ndarray
    baseline: np.ndarray
    counts: np.ndarray
    shares: np.ndarray
    preferential: np.ndarray

    def rows(self):
        for g, s in enumerate(self.levels):
            for h, r in enumerate(self.levels):
                base = self.baseline[g, h] if self.baseline.ndim == 2 else self.baseline[h]
                yield (s, r, int(self.counts[g, h]), self.shares[g, h], base, self.preferential[g, h])

    def percent(self) -> np.ndarray:
        return 100.0 * self.shares


def mixing_matrix(graph: DirectedGraph, values: Sequence[Any], levels: Sequence[str],
                  attribute: str = "", exclude_self: bool = False) -> MixingReport:
    codes = _codes(values, levels)
    if len(codes) != graph.n:
        raise AnalysisError(f"{len(codes)} attribute values for {graph.n} nodes")
    Y = graph.adjacency.astype(bool)
    touched = Y.any(axis=0) | Y.any(axis=1)
    bad = np.flatnonzero(touched & (codes < 0))
    if bad.size:
        raise AnalysisError(f"nodes with ties but no {attribute or 'attribute'} value: "
                            f"{[graph.node_ids[k] for k in bad]}")
    L = len(levels)
    ii, jj = np.nonzero(Y)
    counts = np.zeros((L, L), dtype=np.int64)
    np.add.at(counts, (codes[ii], codes[jj]), 1)
    totals = counts.sum(axis=1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        shares = np.where(totals > 0, counts / np.where(totals == 0, 1, totals), np.nan)
    base = baseline_shares(codes, levels, exclude_self)
    sizes = np.bincount(codes[codes >= 0], minlength=L)
    pref = shares - (base if base.ndim == 2 else base[None, :])
    return MixingReport(attribute, tuple(levels), sizes, base, counts, shares, pref)


def panel_mixing(panel: PanelNetwork, label: str, attribute: str, exclude_self: bool = False) -> MixingReport:
    spec = panel.attributes.specs[attribute]
    if not spec.is_categorical:
        raise AnalysisError(f"attribute {attribute!r} is not categorical")
    p = panel.periods[panel.index(label)]
    codes = panel.attributes.column(p.label, attribute, p.roster)
    return mixing_matrix(p.graph, codes, spec.levels, attribute, exclude_self)


# ---------------------------------------------------------------------------
# selectors


@dataclass(frozen=True)
class DyadSelector:
    """Conditions on sender and receiver attributes.

    Each condition maps an attribute to a level, a list of levels, or a
    ``{"min": a, "max": b}`` closed range for numeric attributes.
    """

    sender: Mapping[str, Any] = field(default_factory=dict)
    receiver: Mapping[str, Any] = field(default_factory=dict)
    name: str = ""

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "DyadSelector":
        return cls(dict(d.get("sender", {}) or {}), dict(d.get("receiver", {}) or {}), str(d.get("name", "")))

    @property
    def label(self) -> str:
        if self.name:
            return self.name

        def fmt(c):
            return ",".join(f"{k}={v}" for k, v in sorted(c.items())) or "*"
        return f"{fmt(self.sender)}->{fmt(self.receiver)}"

    def node_mask(self, side: Mapping[str, Any], cov: PeriodCovariates, n: int) -> np.ndarray:
        ok = np.ones(n, dtype=bool)
        for attr, cond in side.items():
            if attr not in cov.attributes:
                raise AnalysisError(f"selector {self.label!r}: unknown attribute {attr!r}")
            spec: AttributeSpec = cov.specs[attr]
            x = cov.attributes[attr]
            if spec.is_categorical:
                wanted = cond if isinstance(cond, (list, tuple, set)) else [cond]
                for lvl in wanted:
                    if str(lvl) not in spec.levels:
                        raise AnalysisError(f"selector {self.label!r}: level {lvl!r} not in {list(spec.levels)}")
                codes = [spec.levels.index(str(lvl)) for lvl in wanted]
                ok &= np.isin(x, codes)
            elif isinstance(cond, Mapping):
                lo, hi = float(cond.get("min", -np.inf)), float(cond.get("max", np.inf))
                ok &= (x >= lo) & (x <= hi)
            else:
                wanted = cond if isinstance(cond, (list, tuple, set)) else [cond]
                ok &= np.isin(x, [float(v) for v in wanted])
        return ok

    def mask(self, cov: PeriodCovariates, n: int, sender_mask=None) -> np.ndarray:
        s = self.node_mask(self.sender, cov, n)
        if sender_mask is not None:
            s = s & sender_mask
        r = self.node_mask(self.receiver, cov, n)
        m = s[:, None] & r[None, :]
        np.fill_diagonal(m, False)
        return m


# ---------------------------------------------------------------------------
# predicted probabilities


@dataclass(frozen=True, eq=False)
class ProbabilitySummary:
    selector: str
    periods: tuple[str, ...]
    median: float
    q25: float
    q75: float
    mean: float
    m: int
    matches: int
    seed: int | None
    probabilities: np.ndarray = field(repr=False, default=None)


def _theta(fit) -> np.ndarray:
    return np.asarray(getattr(fit, "theta", fit), dtype=float)


def _period_list(panel: PanelNetwork, periods) -> list[int]:
    if periods is None or periods == "all":
        return list(panel.modeled_indices)
    if isinstance(periods, (str, int)):
        periods = [periods]
    idx = [panel.index(str(p)) for p in periods]
    for t in idx:
        if t < panel.memory_order:
            raise AnalysisError(f"period {panel.periods[t].label} precedes the modeled range")
    return idx


class _DeltaCache(dict):
    def get_block(self, model, panel, t):
        if t not in self:
            self[t] = change_statistics(model, panel.periods[t].graph, panel.covariates(t))
        return self[t]


def matching_probabilities(fit, model: ModelSpec, panel: PanelNetwork, periods, selector: DyadSelector,
                           sender_mask_fn=None, cache: dict | None = None) -> np.ndarray:
    """Tie probability of every valid dyad matching ``selector``, conditional on the observed network."""
    theta = _theta(fit)
    if len(theta) != len(model):
        raise AnalysisError(f"fit has {len(theta)} coefficients, model has {len(model)} terms")
    cache = cache if isinstance(cache, _DeltaCache) else _DeltaCache()
    out = []
    for t in _period_list(panel, periods):
        block = cache.get_block(model, panel, t)
        cov = panel.covariates(t)
        n = panel.periods[t].graph.n
        smask = sender_mask_fn(t, cov) if sender_mask_fn is not None else None
        mask = selector.mask(cov, n, smask)
        rows = mask[block.dyads[:, 0], block.dyads[:, 1]]
        out.append(expit(block.X[rows] @ theta))
    return np.concatenate(out) if out else np.empty(0)


def summarize(probs: np.ndarray, m: int | None, seed: int | np.random.SeedSequence | None,
              selector: str, periods: Sequence[str], seed_label=None) -> ProbabilitySummary:
    N = len(probs)
    if m is None:
        sample = probs
    else:
        rng = np.random.default_rng(seed)
        sample = probs[rng.choice(N, size=m, replace=False)] if m <= N else probs[rng.integers(0, N, size=m)]
    if len(sample) == 0:
        return ProbabilitySummary(selector, tuple(periods), np.nan, np.nan, np.nan, np.nan, 0, N,
                                  seed_label, sample)
    q25, med, q75 = np.quantile(sample, [0.25, 0.5, 0.75])
    return ProbabilitySummary(selector, tuple(periods), float(med), float(q25), float(q75),
                              float(sample.mean()), len(sample), N, seed_label, sample)


def dyad_probability_sample(fit, model: ModelSpec, panel: PanelNetwork, periods, selector: DyadSelector,
                            m: int | None = None, seed: int = 0, cache: dict | None = None) -> ProbabilitySummary:
    """Median and quartiles of predicted tie probabilities over sampled dyads.

    ``periods`` is a label, a list of labels, or None / "all" for every
    modeled period (dyads pooled).  ``m=None`` uses every matching dyad;
    otherwise m dyads are drawn uniformly, without replacement unless m
    exceeds the number of matches.
    """
    probs = matching_probabilities(fit, model, panel, periods, selector, cache=cache)
    if len(probs) == 0:
        raise AnalysisError(f"selector {selector.label!r} matches no dyads")
    labels = [panel.periods[t].label for t in _period_list(panel, periods)]
    return summarize(probs, m, seed, selector.label, labels, seed_label=seed)


@dataclass(frozen=True, eq=False)
class DecileCurve:
    attribute: str
    selector: str
    period: str
    bounds: np.ndarray  # 11 quantile boundaries
    summaries: tuple[ProbabilitySummary, ...]

    def rows(self):
        for d, s in enumerate(self.summaries):
            yield (d + 1, self.bounds[d], self.bounds[d + 1], s.median, s.q25, s.q75, s.m, s.matches)


def decile_of(values: np.ndarray, bounds: np.ndarray) -> np.ndarray:
    """Decile 1..10 of each value: the first boundary it does not exceed."""
    return np.searchsorted(bounds[1:-1], values, side="left") + 1


def decile_curve(fit, model: ModelSpec, panel: PanelNetwork, period, sender_attr: str,
                 receiver_selector: DyadSelector, m: int | None = None, seed: int = 0,
                 cache: dict | None = None) -> DecileCurve:
    """Median tie probability by decile of a numeric sender attribute.

    Deciles are cut at the empirical quantiles of the attribute over the
    period's roster; a value equal to a cut point belongs to the lower
    decile.  Each decile uses its own random substream of ``seed``.
    """
    t = _period_list(panel, period)
    if len(t) != 1:
        raise AnalysisError("decile curves are computed for a single period")
    t = t[0]
    cov = panel.covariates(t)
    if sender_attr not in cov.attributes or cov.specs[sender_attr].is_categorical:
        raise AnalysisError(f"decile attribute {sender_attr!r} must be a declared numeric attribute")
    x = cov.attributes[sender_attr]
    present = ~np.isnan(x)
    if np.unique(x[present]).size < 10:
        raise AnalysisError(f"{sender_attr!r} has fewer than 10 distinct values in period "
                            f"{cov.period_label}; use coarser quantiles")
    bounds = np.quantile(x[present], np.linspace(0, 1, 11))
    dec = np.where(present, decile_of(np.where(present, x, 0.0), bounds), 0)
    cache = cache if isinstance(cache, _DeltaCache) else _DeltaCache()
    streams = np.random.SeedSequence(seed).spawn(10)
    out = []
    for d in range(1, 11):
        probs = matching_probabilities(fit, model, panel, [cov.period_label], receiver_selector,
                                       sender_mask_fn=lambda _t, _c, d=d: dec == d, cache=cache)
        out.append(summarize(probs, m, streams[d - 1], receiver_selector.label, [cov.period_label],
                             seed_label=seed))
    return DecileCurve(sender_attr, receiver_selector.label, cov.period_label, bounds, tuple(out))
