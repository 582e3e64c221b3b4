"""Delimited-text ingestion and export of panels.

Edge list      period,sender,receiver,weight
Attributes     period,node,attribute,value   (empty attribute = roster entry only)
Dyad covariate period,sender,receiver,covariate,value   (unlisted dyads are 0)

All files are UTF-8 with a header row.  The ``*_label``/``*_id``/``*_name``
spellings of the column names are accepted as well.
"""
from __future__ import annotations

import csv
import logging
import warnings
from collections import defaultdict
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import pandas as pd

from .netcore import (AttributeSpec, AttributeTable, PanelError, PanelNetwork, Period, WeightedGraph,
                      period_sort_key, threshold as threshold_graph, _is_missing)

logger = logging.getLogger(__name__)

EDGE_COLUMNS = ("period", "sender", "receiver", "weight")
ATTRIBUTE_COLUMNS = ("period", "node", "attribute", "value")
DYAD_COLUMNS = ("period", "sender", "receiver", "covariate", "value")

_ALIASES = {
    "period_label": "period", "sender_id": "sender", "receiver_id": "receiver",
    "node_id": "node", "attr_name": "attribute", "cov_name": "covariate",
}


def _read(path, columns: Sequence[str], delimiter: str) -> pd.DataFrame:
    df = pd.read_csv(path, sep=delimiter, dtype=str, keep_default_na=False, encoding="utf-8")
    df.columns = [_ALIASES.get(c.strip(), c.strip()) for c in df.columns]
    missing = [c for c in columns if c not in df.columns]
    if missing:
        raise PanelError(f"{path}: missing columns {missing} (have {list(df.columns)})")
    return df[list(columns)].apply(lambda s: s.str.strip())


def _format(x) -> str:
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return repr(int(x)) if x.is_integer() and abs(x) < 1e15 else repr(x)
    return str(x)


def read_panel(edges, attributes=None, dyad_covariates=None, specs: Iterable[AttributeSpec] = (),
               threshold: int = 1, memory_order: int = 0, delimiter: str = ",") -> PanelNetwork:
    """Read the three delimited files into a thresholded panel.

    A period's roster is every node listed for it in the attribute file plus
    every endpoint in its edge list, in sorted id order.  Weighted networks
    are kept next to the binary ones so the panel can be re-thresholded.
    """
    specs = {s.name: s for s in specs}
    e = _read(edges, EDGE_COLUMNS, delimiter)
    try:
        w = e["weight"].astype(float)
    except ValueError as err:
        raise PanelError(f"{edges}: non-numeric weight ({err})") from None
    if (w < 0).any() or (w != np.round(w)).any():
        raise PanelError(f"{edges}: weights must be nonnegative integers")
    e = e.assign(weight=w.astype(np.int64))
    loops = e["sender"] == e["receiver"]
    if loops.any():
        warnings.warn(f"{edges}: {int(loops.sum())} self-ties ignored", stacklevel=2)
        e = e[~loops]
    dup = e.duplicated(["period", "sender", "receiver"])
    if dup.any():
        row = e[dup].iloc[0]
        raise PanelError(f"{edges}: duplicate edge {row['sender']}->{row['receiver']} in period {row['period']}")

    roster: dict[str, set[str]] = defaultdict(set)
    values: dict[str, dict[str, dict[str, str]]] = defaultdict(lambda: defaultdict(dict))
    if attributes is not None:
        a = _read(attributes, ATTRIBUTE_COLUMNS, delimiter)
        if a.duplicated(["period", "node", "attribute"]).any():
            row = a[a.duplicated(["period", "node", "attribute"])].iloc[0]
            raise PanelError(f"{attributes}: duplicate value of {row['attribute']!r} for node "
                             f"{row['node']} in period {row['period']}")
        skipped = set()
        for period, node, name, value in a.itertuples(index=False):
            roster[period].add(node)
            if not name:
                continue
            if name not in specs:
                skipped.add(name)
                continue
            if not _is_missing(value):
                values[period][name][node] = value
        if skipped:
            logger.info("ignoring undeclared attributes %s", sorted(skipped))
    for period, grp in e.groupby("period", sort=False):
        roster[period].update(grp["sender"])
        roster[period].update(grp["receiver"])

    labels = sorted(roster, key=period_sort_key)
    rosters = {p: tuple(sorted(roster[p])) for p in labels}
    index = {p: {node: k for k, node in enumerate(rosters[p])} for p in labels}

    dyad: dict[str, dict[str, np.ndarray]] = defaultdict(dict)
    if dyad_covariates is not None:
        d = _read(dyad_covariates, DYAD_COLUMNS, delimiter)
        if d.duplicated(["period", "sender", "receiver", "covariate"]).any():
            raise PanelError(f"{dyad_covariates}: duplicate dyad covariate entries")
        names = sorted(set(d["covariate"]))
        for p in labels:
            n = len(rosters[p])
            for name in names:
                dyad[p][name] = np.zeros((n, n))
        for period, s, r, name, value in d.itertuples(index=False):
            if period not in index:
                raise PanelError(f"{dyad_covariates}: unknown period {period!r}")
            try:
                i, j = index[period][s], index[period][r]
            except KeyError as err:
                raise PanelError(f"{dyad_covariates}: node {err.args[0]!r} not in roster of period {period}") from None
            dyad[period][name][i, j] = np.nan if _is_missing(value) else float(value)

    periods = []
    for p in labels:
        n = len(rosters[p])
        W = np.zeros((n, n), dtype=np.int64)
        grp = e[e["period"] == p]
        if len(grp):
            ii = grp["sender"].map(index[p]).to_numpy()
            jj = grp["receiver"].map(index[p]).to_numpy()
            W[ii, jj] = grp["weight"].to_numpy()
        wg = WeightedGraph(W, rosters[p])
        periods.append(Period(p, threshold_graph(wg, threshold), wg,
                              {k: _ro(v) for k, v in dyad[p].items()}))
    table = AttributeTable(specs, {p: {k: dict(v) for k, v in values[p].items()} for p in labels})
    return PanelNetwork(tuple(periods), table, memory_order)


def _ro(a):
    a.setflags(write=False)
    return a


def write_panel(panel: PanelNetwork, directory, delimiter: str = ",", tie_weight: int = 1) -> dict[str, Path]:
    """Write edges.csv, attributes.csv and (if any) dyad_covariates.csv.

    Periods without weighted data are written with weight ``tie_weight`` on
    every tie, so reading them back with any threshold below it restores the
    same binary networks.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = {"edges": directory / "edges.csv", "attributes": directory / "attributes.csv"}
    with open(paths["edges"], "w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        out.writerow(EDGE_COLUMNS)
        for p in panel.periods:
            W = p.weighted.weights if p.weighted is not None else p.graph.adjacency * int(tie_weight)
            for i, j in zip(*np.nonzero(W)):
                out.writerow((p.label, p.roster[i], p.roster[j], int(W[i, j])))
    with open(paths["attributes"], "w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        out.writerow(ATTRIBUTE_COLUMNS)
        specs = panel.attributes.specs
        for p in panel.periods:
            per_attr = panel.attributes.values.get(p.label, {})
            for node in p.roster:
                wrote = False
                for name in specs:
                    v = per_attr.get(name, {}).get(node)
                    if v is None or _is_missing(v):
                        continue
                    out.writerow((p.label, node, name, _format(v)))
                    wrote = True
                if not wrote:
                    out.writerow((p.label, node, "", ""))
    if any(p.dyad_covariates for p in panel.periods):
        paths["dyad_covariates"] = directory / "dyad_covariates.csv"
        with open(paths["dyad_covariates"], "w", newline="", encoding="utf-8") as fh:
            out = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
            out.writerow(DYAD_COLUMNS)
            for p in panel.periods:
                for name in sorted(p.dyad_covariates):
                    m = p.dyad_covariates[name]
                    for i, j in zip(*np.nonzero((m != 0) | np.isnan(m))):
                        v = m[i, j]
                        out.writerow((p.label, p.roster[i], p.roster[j], name,
                                      "NA" if np.isnan(v) else _format(v)))
    return paths


def write_table(path, header: Sequence[str], rows: Iterable[Sequence], delimiter: str = ",") -> Path:
    """Deterministic CSV writer: floats use their shortest round-trip repr."""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        out.writerow(header)
        for row in rows:
            out.writerow([_cell(x) for x in row])
    return path


def _cell(x):
    if isinstance(x, (float, np.floating)):
        return "NA" if np.isnan(x) else repr(float(x))
    if isinstance(x, (np.integer,)):
        return int(x)
    return x
