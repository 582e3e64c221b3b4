"""Random instances shared by the term, estimation and acceptance tests."""
import numpy as np

from tergmkit.netcore import AttributeSpec, DirectedGraph, PeriodCovariates
from tergmkit.terms import (GWESP, AbsDiff, DelayedReciprocity, DyadCov, Edges, GWInDegree, GWOutDegree,
                            Interaction, LaggedEdge, Match, ModelSpec, NodeMix, PeriodCov, Reciprocity,
                            ReceiverAttr, SenderAttr, SHARED_PARTNER_RULES)

SPECS = (
    AttributeSpec("race", "categorical", ("W", "B", "L")),
    AttributeSpec("x", "numeric"),
    AttributeSpec("maj", "binary"),
)


def random_graph(rng, n, density=None) -> DirectedGraph:
    density = rng.uniform(0.05, 0.7) if density is None else density
    Y = (rng.random((n, n)) < density).astype(np.int8)
    np.fill_diagonal(Y, 0)
    return DirectedGraph(Y)


def random_covariates(rng, n, period_index=None, lags=2) -> PeriodCovariates:
    values = {
        "race": list(rng.choice(["W", "B", "L"], size=n)),
        "x": list(np.round(rng.normal(size=n), 3)),
        "maj": list(rng.integers(0, 2, size=n).astype(float)),
    }
    dyad = {"d": np.round(rng.normal(size=(n, n)), 3)}
    lag_mats = tuple((rng.random((n, n)) < 0.3).astype(np.int8) for _ in range(lags))
    for a in lag_mats:
        np.fill_diagonal(a, 0)
    t = int(rng.integers(1, 13)) if period_index is None else period_index
    return PeriodCovariates.from_values(SPECS, values, dyad, period_index=t, period_label=str(t),
                                        lags=lag_mats)


def all_terms(rng=None):
    """One instance of every term kind, with a few decay and rule variants."""
    decays = (0.0, 0.5, 1.3)
    terms = [Edges(), Reciprocity()]
    terms += [GWInDegree(d, label=f"gwid{d}") for d in decays]
    terms += [GWOutDegree(d, label=f"gwod{d}") for d in decays]
    terms += [GWESP(d, r, label=f"gwesp{d}{r}") for d in decays for r in SHARED_PARTNER_RULES]
    terms += [
        SenderAttr("x"), ReceiverAttr("x"), SenderAttr("race", "B"), ReceiverAttr("race", "L"),
        SenderAttr("maj", label="sender maj"), Match("race"), AbsDiff("x"),
        NodeMix("race", "B", "W"), NodeMix("race", "L", "L"), DyadCov("d"),
        PeriodCov(), PeriodCov(power=3, label="t3"),
        Interaction((Match("race"), PeriodCov()), label="match x t"),
        Interaction((SenderAttr("x"), ReceiverAttr("race", "W")), label="x x W"),
        LaggedEdge(1), DelayedReciprocity(1), LaggedEdge(2, label="lag2"),
    ]
    return terms


def all_terms_model() -> ModelSpec:
    return ModelSpec(tuple(all_terms()))


def batch_means_se(samples, batches=50) -> np.ndarray:
    """Standard error of the mean of a correlated chain by non-overlapping batch means."""
    x = np.asarray(samples, dtype=float)
    k = len(x) // batches
    means = x[: k * batches].reshape(batches, k, *x.shape[1:]).mean(axis=1)
    return means.std(axis=0, ddof=1) / np.sqrt(batches)
