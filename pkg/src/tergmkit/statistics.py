"""Global statistics and stacked per-dyad change statistics for a model."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .netcore import DirectedGraph, PeriodCovariates
from .terms import ModelError, ModelSpec, Term, toggle_change

logger = logging.getLogger(__name__)


def _cov(covariates: PeriodCovariates | None) -> PeriodCovariates:
    return covariates if covariates is not None else PeriodCovariates()


def global_statistic(term: Term, graph: DirectedGraph, covariates: PeriodCovariates | None = None) -> float:
    return term.global_value(graph.adjacency, _cov(covariates))


def statistics_vector(model: ModelSpec, graph: DirectedGraph,
                      covariates: PeriodCovariates | None = None) -> np.ndarray:
    cov = _cov(covariates)
    return np.array([t.global_value(graph.adjacency, cov) for t in model.terms])


@dataclass(frozen=True, eq=False)
class ChangeStatMatrix:
    """Change statistics of one period.

    ``dyads`` are (sender, receiver) index pairs in row-major order with
    dropped rows removed; ``X[r, k]`` is the change in term k for dyad r and
    ``y[r]`` the observed tie.
    """

    dyads: np.ndarray
    X: np.ndarray
    y: np.ndarray
    term_names: tuple[str, ...]
    period_label: str = ""
    dropped: int = 0

    @property
    def n_rows(self) -> int:
        return self.X.shape[0]


def change_matrices(model: ModelSpec, graph: DirectedGraph,
                    covariates: PeriodCovariates | None = None, brute_force: bool = False) -> np.ndarray:
    """Stack of n x n change matrices, shape (terms, n, n)."""
    cov = _cov(covariates)
    Y = graph.adjacency
    out = np.empty((len(model.terms), graph.n, graph.n))
    for k, term in enumerate(model.terms):
        try:
            out[k] = toggle_change(term, Y, cov) if brute_force else term.change(Y, cov)
        except ModelError:
            raise
        except KeyError as e:
            raise ModelError(f"term {term.name!r}: missing input {e}") from None
    return out


def change_statistics(model: ModelSpec, graph: DirectedGraph,
                      covariates: PeriodCovariates | None = None,
                      brute_force: bool = False) -> ChangeStatMatrix:
    """Per-dyad change statistics; dyads with any missing value are dropped."""
    D = change_matrices(model, graph, covariates, brute_force)
    n = graph.n
    ii, jj = np.nonzero(~np.eye(n, dtype=bool))
    X = D[:, ii, jj].T
    y = graph.adjacency[ii, jj].astype(float)
    keep = ~np.isnan(X).any(axis=1)
    dropped = int((~keep).sum())
    label = covariates.period_label if covariates is not None else ""
    if dropped:
        logger.info("period %s: dropped %d dyads with missing covariates", label, dropped)
    return ChangeStatMatrix(np.column_stack([ii, jj])[keep], X[keep], y[keep],
                            tuple(model.names), label, dropped)
