"""Longitudinal directed-network data model.

Graphs are stored as dense numpy matrices indexed by a per-period roster of
external node ids.  Everything here is immutable once built: arrays are
flagged read-only and the containers are frozen dataclasses.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

logger = logging.getLogger(__name__)

NUMERIC = "numeric"
CATEGORICAL = "categorical"
BINARY = "binary"
ATTRIBUTE_KINDS = (NUMERIC, CATEGORICAL, BINARY)
MISSING_CODE = -1


class PanelError(ValueError):
    """Raised when graphs, rosters or covariates are inconsistent."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


def _zero_diagonal(a: np.ndarray, what: str) -> np.ndarray:
    diag = np.diagonal(a)
    if np.any(diag != 0):
        warnings.warn(f"{what}: {int(np.count_nonzero(diag))} nonzero diagonal entries set to zero",
                      stacklevel=3)
        a = a.copy()
        np.fill_diagonal(a, 0)
    return a


def _check_ids(node_ids: Sequence[Any], n: int, what: str) -> tuple[str, ...]:
    ids = tuple(str(x) for x in node_ids)
    if len(ids) != n:
        raise PanelError(f"{what}: {len(ids)} node ids for a {n}x{n} matrix")
    if len(set(ids)) != n:
        seen, dup = set(), []
        for x in ids:
            if x in seen:
                dup.append(x)
            seen.add(x)
        raise PanelError(f"{what}: duplicate node ids {sorted(set(dup))}")
    return ids


@dataclass(frozen=True, eq=False)
class WeightedGraph:
    """Sender -> receiver tie counts (e.g. bills cosponsored)."""

    weights: np.ndarray
    node_ids: tuple[str, ...] = ()

    def __post_init__(self):
        w = np.asarray(self.weights)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise PanelError(f"weight matrix must be square, got shape {w.shape}")
        if not np.all(np.isfinite(w)) or np.any(w < 0) or np.any(w != np.round(w)):
            raise PanelError("weights must be nonnegative integers")
        w = _zero_diagonal(w.astype(np.int64), "WeightedGraph")
        ids = self.node_ids or tuple(str(i) for i in range(w.shape[0]))
        object.__setattr__(self, "weights", _readonly(w))
        object.__setattr__(self, "node_ids", _check_ids(ids, w.shape[0], "WeightedGraph"))

    @property
    def n(self) -> int:
        return self.weights.shape[0]

    def __eq__(self, other):
        return (isinstance(other, WeightedGraph) and self.node_ids == other.node_ids
                and np.array_equal(self.weights, other.weights))


@dataclass(frozen=True, eq=False)
class DirectedGraph:
    """Binary directed graph without self-ties."""

    adjacency: np.ndarray
    node_ids: tuple[str, ...] = ()

    def __post_init__(self):
        a = np.asarray(self.adjacency)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise PanelError(f"adjacency must be square, got shape {a.shape}")
        if not np.all((a == 0) | (a == 1)):
            raise PanelError("adjacency entries must be 0 or 1")
        a = _zero_diagonal(a.astype(np.int8), "DirectedGraph")
        ids = self.node_ids or tuple(str(i) for i in range(a.shape[0]))
        object.__setattr__(self, "adjacency", _readonly(a))
        object.__setattr__(self, "node_ids", _check_ids(ids, a.shape[0], "DirectedGraph"))

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[tuple[int, int]], node_ids=()) -> "DirectedGraph":
        a = np.zeros((n, n), dtype=np.int8)
        for i, j in edges:
            a[i, j] = 1
        return cls(a, tuple(node_ids))

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    @property
    def edge_count(self) -> int:
        return int(self.adjacency.sum(dtype=np.int64))

    def edges(self) -> list[tuple[int, int]]:
        return [tuple(e) for e in np.argwhere(self.adjacency).tolist()]

    def permuted(self, order: Sequence[int]) -> "DirectedGraph":
        """Graph re-indexed so that new index k is old node ``order[k]``."""
        order = np.asarray(order)
        return DirectedGraph(self.adjacency[np.ix_(order, order)],
                             tuple(self.node_ids[k] for k in order))

    def __eq__(self, other):
        return (isinstance(other, DirectedGraph) and self.node_ids == other.node_ids
                and np.array_equal(self.adjacency, other.adjacency))


def threshold(graph: WeightedGraph, k: int = 1) -> DirectedGraph:
    """Binary graph with a tie wherever the count strictly exceeds ``k``."""
    if k < 0:
        raise ValueError(f"threshold must be >= 0, got {k}")
    return DirectedGraph((graph.weights > k).astype(np.int8), graph.node_ids)


def degrees(graph: DirectedGraph) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(in_degree, out_degree)``."""
    a = graph.adjacency.astype(np.int64)
    return a.sum(axis=0), a.sum(axis=1)


# ---------------------------------------------------------------------------
# attributes


@dataclass(frozen=True)
class AttributeSpec:
    name: str
    kind: str = NUMERIC
    levels: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind not in ATTRIBUTE_KINDS:
            raise PanelError(f"attribute {self.name!r}: unknown type {self.kind!r}")
        object.__setattr__(self, "levels", tuple(str(x) for x in self.levels))
        if self.kind == CATEGORICAL:
            if not self.levels:
                raise PanelError(f"categorical attribute {self.name!r} needs declared levels")
            if len(set(self.levels)) != len(self.levels):
                raise PanelError(f"attribute {self.name!r}: duplicate levels")

    @property
    def is_categorical(self) -> bool:
        return self.kind == CATEGORICAL

    def encode(self, values: Sequence[Any]) -> np.ndarray:
        """Encode raw values: level codes (-1 = missing) or floats (NaN = missing)."""
        if self.is_categorical:
            lookup = {lvl: k for k, lvl in enumerate(self.levels)}
            out = np.full(len(values), MISSING_CODE, dtype=np.int64)
            for pos, v in enumerate(values):
                if _is_missing(v):
                    continue
                key = str(v)
                if key not in lookup:
                    raise PanelError(f"attribute {self.name!r}: value {key!r} not in levels {list(self.levels)}")
                out[pos] = lookup[key]
            return out
        out = np.array([np.nan if _is_missing(v) else float(v) for v in values], dtype=float)
        if self.kind == BINARY and np.any(~np.isnan(out) & (out != 0) & (out != 1)):
            raise PanelError(f"binary attribute {self.name!r} has values other than 0/1")
        return out

    def decode(self, codes: np.ndarray) -> list[Any]:
        if self.is_categorical:
            return [None if c < 0 else self.levels[c] for c in codes]
        return [None if np.isnan(x) else float(x) for x in codes]

    def missing_mask(self, encoded: np.ndarray) -> np.ndarray:
        return encoded < 0 if self.is_categorical else np.isnan(encoded)


def _is_missing(v) -> bool:
    if v is None:
        return True
    if isinstance(v, float) and math.isnan(v):
        return True
    return isinstance(v, str) and v.strip() in ("", "NA", "NaN", "nan")


@dataclass(frozen=True)
class AttributeTable:
    """Per-period node attribute values keyed by node id.

    ``values[period_label][attr_name][node_id]`` holds raw values; a node
    without an entry is treated as missing for that attribute.
    """

    specs: Mapping[str, AttributeSpec] = field(default_factory=dict)
    values: Mapping[str, Mapping[str, Mapping[str, Any]]] = field(default_factory=dict)

    def __post_init__(self):
        for label, per_attr in self.values.items():
            for name, per_node in per_attr.items():
                if name not in self.specs:
                    raise PanelError(f"period {label}: undeclared attribute {name!r}")
                # validates level membership
                self.specs[name].encode(list(per_node.values()))

    def column(self, label: str, name: str, roster: Sequence[str]) -> np.ndarray:
        spec = self.specs[name]
        per_node = self.values.get(label, {}).get(name, {})
        return spec.encode([per_node.get(node) for node in roster])

    def nodes(self, label: str) -> set[str]:
        out: set[str] = set()
        for per_node in self.values.get(label, {}).values():
            out.update(per_node)
        return out


@dataclass(frozen=True)
class PeriodCovariates:
    """Everything model terms may read for one period, aligned to its roster.

    ``attributes`` holds encoded columns (see ``AttributeSpec.encode``),
    ``dyad`` holds n x n real matrices, ``lags[k-1]`` is the adjacency of the
    period k steps back re-indexed to this roster (absent nodes have no ties).
    """

    attributes: Mapping[str, np.ndarray] = field(default_factory=dict)
    specs: Mapping[str, AttributeSpec] = field(default_factory=dict)
    dyad: Mapping[str, np.ndarray] = field(default_factory=dict)
    period_index: int = 1
    period_label: str = "1"
    lags: tuple[np.ndarray, ...] = ()

    @classmethod
    def from_values(cls, specs: Iterable[AttributeSpec], values: Mapping[str, Sequence[Any]],
                    dyad: Mapping[str, np.ndarray] | None = None, **kw) -> "PeriodCovariates":
        """Build from raw per-node value lists (strings for categorical levels)."""
        specs = {s.name: s for s in specs}
        encoded = {name: _readonly(specs[name].encode(list(v))) for name, v in values.items()}
        dyad = {k: _readonly(np.asarray(v, dtype=float)) for k, v in (dyad or {}).items()}
        return cls(encoded, specs, dyad, **kw)

    def permuted(self, order: Sequence[int]) -> "PeriodCovariates":
        order = np.asarray(order)
        ix = np.ix_(order, order)
        return PeriodCovariates(
            {k: v[order] for k, v in self.attributes.items()}, self.specs,
            {k: v[ix] for k, v in self.dyad.items()}, self.period_index, self.period_label,
            tuple(a[ix] for a in self.lags))


# ---------------------------------------------------------------------------
# panels


def period_sort_key(label: str):
    try:
        return (0, float(label), "")
    except ValueError:
        return (1, 0.0, label)


@dataclass(frozen=True, eq=False)
class Period:
    label: str
    graph: DirectedGraph
    weighted: WeightedGraph | None = None
    dyad_covariates: Mapping[str, np.ndarray] = field(default_factory=dict)

    @property
    def roster(self) -> tuple[str, ...]:
        return self.graph.node_ids


@dataclass(frozen=True, eq=False)
class PanelNetwork:
    """Ordered sequence of observed networks plus node and dyad covariates."""

    periods: tuple[Period, ...]
    attributes: AttributeTable = field(default_factory=AttributeTable)
    memory_order: int = 0

    def __post_init__(self):
        object.__setattr__(self, "periods", tuple(self.periods))
        if not self.periods:
            raise PanelError("panel has no periods")
        keys = [period_sort_key(p.label) for p in self.periods]
        if any(a >= b for a, b in zip(keys, keys[1:])):
            raise PanelError(f"period labels not strictly increasing: {self.labels}")
        if not 0 <= self.memory_order < len(self.periods):
            raise PanelError(f"memory order {self.memory_order} needs more than "
                             f"{len(self.periods)} periods")
        for p in self.periods:
            for name, m in p.dyad_covariates.items():
                if m.shape != (p.graph.n, p.graph.n):
                    raise PanelError(f"period {p.label}: dyad covariate {name!r} has shape "
                                     f"{m.shape}, roster has {p.graph.n} nodes")

    @property
    def labels(self) -> list[str]:
        return [p.label for p in self.periods]

    @property
    def rosters(self) -> dict[str, tuple[str, ...]]:
        return {p.label: p.roster for p in self.periods}

    @property
    def modeled_indices(self) -> range:
        return range(self.memory_order, len(self.periods))

    def __len__(self):
        return len(self.periods)

    def index(self, label: str) -> int:
        label = str(label)
        for k, p in enumerate(self.periods):
            if p.label == label:
                return k
        raise KeyError(f"no period labelled {label!r}; have {self.labels}")

    def covariates(self, t: int) -> PeriodCovariates:
        """Term inputs for period position ``t`` (0-based)."""
        p = self.periods[t]
        roster = p.roster
        attrs = {name: _readonly(self.attributes.column(p.label, name, roster))
                 for name in self.attributes.specs}
        lags = []
        for lag in range(1, self.memory_order + 1):
            if t - lag < 0:
                break
            lags.append(_readonly(_realign(self.periods[t - lag].graph, roster)))
        return PeriodCovariates(attrs, dict(self.attributes.specs), dict(p.dyad_covariates),
                                period_index=t + 1, period_label=p.label, lags=tuple(lags))

    def rethreshold(self, k: int) -> "PanelNetwork":
        """Re-derive every binary network from its stored weights."""
        periods = []
        for p in self.periods:
            if p.weighted is None:
                raise PanelError(f"period {p.label} has no weighted network to re-threshold")
            periods.append(Period(p.label, threshold(p.weighted, k), p.weighted, p.dyad_covariates))
        return PanelNetwork(tuple(periods), self.attributes, self.memory_order)

    def with_memory_order(self, k: int) -> "PanelNetwork":
        return PanelNetwork(self.periods, self.attributes, k)

    def subset(self, indices: Sequence[int]) -> "PanelNetwork":
        return PanelNetwork(tuple(self.periods[i] for i in indices), self.attributes, 0)

    def __eq__(self, other):
        if not isinstance(other, PanelNetwork) or self.memory_order != other.memory_order:
            return False
        if self.labels != other.labels:
            return False
        for a, b in zip(self.periods, other.periods):
            if a.graph != b.graph or set(a.dyad_covariates) != set(b.dyad_covariates):
                return False
            if any(not np.array_equal(a.dyad_covariates[k], b.dyad_covariates[k])
                   for k in a.dyad_covariates):
                return False
        if self.attributes.specs != other.attributes.specs:
            return False
        for p in self.periods:
            for name in self.attributes.specs:
                x = self.attributes.column(p.label, name, p.roster)
                y = other.attributes.column(p.label, name, p.roster)
                if not np.array_equal(x, y, equal_nan=not self.attributes.specs[name].is_categorical):
                    return False
        return True


def _realign(graph: DirectedGraph, roster: Sequence[str]) -> np.ndarray:
    pos = {node: k for k, node in enumerate(graph.node_ids)}
    idx = np.array([pos.get(node, -1) for node in roster])
    present = idx >= 0
    out = np.zeros((len(roster), len(roster)), dtype=np.int8)
    sub = np.flatnonzero(present)
    out[np.ix_(sub, sub)] = graph.adjacency[np.ix_(idx[sub], idx[sub])]
    return out


def align_panel(periods: Sequence[tuple[str, DirectedGraph | WeightedGraph]],
                rosters: Mapping[str, Sequence[str]] | None = None,
                attributes: AttributeTable | None = None,
                dyad_covariates: Mapping[str, Mapping[str, np.ndarray]] | None = None,
                memory_order: int = 0, k: int = 1) -> PanelNetwork:
    """Assemble a panel, re-indexing every graph to its period's roster.

    Weighted graphs are thresholded at ``k`` and kept alongside the binary
    network.  A graph whose node ids are a permutation of the roster is
    re-ordered; any other mismatch is rejected.  Dyad covariate matrices must
    already be indexed by the roster.
    """
    attributes = attributes or AttributeTable()
    dyad_covariates = dyad_covariates or {}
    out = []
    for label, g in periods:
        label = str(label)
        weighted = g if isinstance(g, WeightedGraph) else None
        graph = threshold(g, k) if weighted is not None else g
        roster = tuple(str(x) for x in (rosters or {}).get(label, graph.node_ids))
        if len(roster) != graph.n:
            raise PanelError(f"period {label}: graph has {graph.n} nodes, roster has {len(roster)}")
        if len(set(roster)) != len(roster):
            raise PanelError(f"period {label}: duplicate node id in roster")
        if roster != graph.node_ids:
            if graph.node_ids == tuple(str(i) for i in range(graph.n)) and rosters is not None \
                    and set(roster) != set(graph.node_ids):
                # anonymous graph: adopt roster ids positionally
                graph = DirectedGraph(graph.adjacency, roster)
                if weighted is not None:
                    weighted = WeightedGraph(weighted.weights, roster)
            elif set(roster) == set(graph.node_ids):
                pos = {node: i for i, node in enumerate(graph.node_ids)}
                order = [pos[node] for node in roster]
                graph = graph.permuted(order)
                if weighted is not None:
                    weighted = WeightedGraph(weighted.weights[np.ix_(order, order)], roster)
            else:
                raise PanelError(f"period {label}: graph node ids do not match roster")
        covs = {name: _readonly(np.asarray(m, dtype=float))
                for name, m in dyad_covariates.get(label, {}).items()}
        for name, m in covs.items():
            if m.shape != (graph.n, graph.n):
                raise PanelError(f"period {label}: dyad covariate {name!r} has shape {m.shape}, "
                                 f"roster has {graph.n} nodes")
        out.append(Period(label, graph, weighted, covs))
    return PanelNetwork(tuple(out), attributes, memory_order)
