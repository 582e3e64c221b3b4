import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from helpers import SPECS, all_terms, all_terms_model, random_covariates, random_graph
from tergmkit.netcore import AttributeSpec, DirectedGraph, PeriodCovariates
from tergmkit.statistics import change_matrices, change_statistics, global_statistic, statistics_vector
from tergmkit.terms import (GWESP, Edges, GWInDegree, GWOutDegree, Interaction, ModelError, ModelSpec,
                            NodeMix, PeriodCov, Reciprocity, SenderAttr, mixing_terms_from_attribute,
                            model_from_dicts, shared_partners, term_from_dict, toggle_change)

RACE = AttributeSpec("race", "categorical", ("White", "Black", "Latino"))
GENDER = AttributeSpec("gender", "categorical", ("Men", "Women"))


def g(n, edges):
    return DirectedGraph.from_edges(n, edges)


def test_reciprocity_hand_count():
    assert global_statistic(Reciprocity(), g(3, [(0, 1), (1, 0), (0, 2)])) == 1


def test_gwindegree_hand_value():
    val = global_statistic(GWInDegree(0.5), g(3, [(0, 1), (2, 1)]))
    assert val == pytest.approx(2 + math.exp(-1), abs=1e-12)
    assert round(val, 6) == 2.367879


@pytest.mark.parametrize("n", [1, 4, 9])
def test_gwdegree_empty_graph_is_n(n):
    empty = DirectedGraph(np.zeros((n, n), dtype=np.int8))
    assert global_statistic(GWInDegree(0.5), empty) == n
    assert global_statistic(GWOutDegree(1.7), empty) == n


@pytest.mark.parametrize("phi", [0.0, 0.5, 2.0])
def test_gwesp_single_shared_partner_is_one(phi):
    # 1->2 has one outgoing two-path partner (3): 1->3->2
    assert global_statistic(GWESP(phi, "OTP"), g(3, [(0, 1), (0, 2), (2, 1)])) == pytest.approx(1.0, abs=1e-14)


def test_gwesp_phi_zero_counts_edges_with_a_partner():
    rng = np.random.default_rng(5)
    for _ in range(20):
        G = random_graph(rng, 8)
        Y = G.adjacency.astype(int)
        for rule in ("OTP", "ITP", "OSP", "ISP"):
            sp = shared_partners(Y, rule)
            expected = int(((Y == 1) & (sp >= 1)).sum())
            assert global_statistic(GWESP(0.0, rule), G) == pytest.approx(expected, abs=1e-12)


def test_shared_partner_rules_by_hand():
    # i=0, j=1, k=2
    Y = np.zeros((3, 3), dtype=int)
    Y[0, 2] = Y[2, 1] = 1  # 0->2->1
    assert shared_partners(Y, "OTP")[0, 1] == 1
    Y = np.zeros((3, 3), dtype=int)
    Y[1, 2] = Y[2, 0] = 1  # 1->2->0
    assert shared_partners(Y, "ITP")[0, 1] == 1
    Y = np.zeros((3, 3), dtype=int)
    Y[0, 2] = Y[1, 2] = 1  # both send to 2
    assert shared_partners(Y, "OSP")[0, 1] == 1
    Y = np.zeros((3, 3), dtype=int)
    Y[2, 0] = Y[2, 1] = 1  # both receive from 2
    assert shared_partners(Y, "ISP")[0, 1] == 1


def test_edges_change_is_one():
    X = change_statistics(ModelSpec((Edges(),)), random_graph(np.random.default_rng(1), 6))
    assert X.X.shape == (30, 1) and np.all(X.X == 1)


def test_reciprocity_change_on_three_nodes():
    m = ModelSpec((Reciprocity(),))
    with_tie = change_matrices(m, g(3, [(0, 1)]))[0]
    without = change_matrices(m, g(3, []))[0]
    assert with_tie[1, 0] == 1 and without[1, 0] == 0
    assert np.array_equal(with_tie, toggle_change(Reciprocity(), g(3, [(0, 1)]).adjacency, PeriodCovariates()))


def test_nodemix_change_is_indicator():
    cov = PeriodCovariates.from_values([RACE], {"race": ["Black", "White", "Black", "Latino"]})
    D = change_matrices(ModelSpec((NodeMix("race", "Black", "Black"),)), g(4, []), cov)[0]
    expected = np.zeros((4, 4))
    expected[0, 2] = expected[2, 0] = 1
    assert np.array_equal(D, expected)


@pytest.mark.parametrize("seed", range(8))
def test_incremental_changes_match_brute_force(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 9))
    G, cov = random_graph(rng, n), random_covariates(rng, n)
    m = all_terms_model()
    fast = change_matrices(m, G, cov)
    slow = change_matrices(m, G, cov, brute_force=True)
    assert np.max(np.abs(fast - slow)) <= 1e-12


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), n=st.integers(2, 8))
def test_global_statistics_invariant_under_relabeling(seed, n):
    rng = np.random.default_rng(seed)
    G, cov = random_graph(rng, n), random_covariates(rng, n)
    order = rng.permutation(n)
    m = all_terms_model()
    a = statistics_vector(m, G, cov)
    b = statistics_vector(m, G.permuted(order), cov.permuted(order))
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), n=st.integers(2, 9))
def test_reciprocity_of_symmetric_graph_is_half_the_edges(seed, n):
    rng = np.random.default_rng(seed)
    U = np.triu(rng.random((n, n)) < 0.5, 1)
    G = DirectedGraph((U | U.T).astype(np.int8))
    assert global_statistic(Reciprocity(), G) * 2 == G.edge_count


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), n=st.integers(2, 9))
def test_full_mixing_set_sums_to_edge_count(seed, n):
    rng = np.random.default_rng(seed)
    G = random_graph(rng, n)
    cov = PeriodCovariates.from_values([RACE], {"race": list(rng.choice(RACE.levels, size=n))})
    cells = [NodeMix("race", s, r) for s in RACE.levels for r in RACE.levels]
    D = change_matrices(ModelSpec(tuple(cells)), G, cov)
    assert (D * G.adjacency).sum() == G.edge_count


@pytest.mark.parametrize("spec,ref,count", [(RACE, ("White", "White"), 8), (GENDER, ("Men", "Men"), 3),
                                            (AttributeSpec("one", "categorical", ("a",)), ("a", "a"), 0)])
def test_mixing_term_counts(spec, ref, count):
    terms = mixing_terms_from_attribute(spec, ref)
    assert len(terms) == count
    assert all((t.sender_level, t.receiver_level) != ref for t in terms)


def test_mixing_term_order_matches_table():
    names = [t.name for t in mixing_terms_from_attribute(RACE, ("White", "White"))]
    assert names == ["Black -> White", "Latino -> White", "White -> Black", "Black -> Black",
                     "Latino -> Black", "White -> Latino", "Black -> Latino", "Latino -> Latino"]
    names = [t.name for t in mixing_terms_from_attribute(GENDER, ("Men", "Men"))]
    assert names == ["Women -> Men", "Men -> Women", "Women -> Women"]


def test_mixing_reference_must_be_levels():
    with pytest.raises(ModelError):
        mixing_terms_from_attribute(RACE, ("White", "Asian"))


def test_unknown_attribute_or_level_rejected_by_name():
    with pytest.raises(ModelError, match="'mix'"):
        NodeMix("race", "Black", "Asian", label="mix").validate({"race": RACE})
    with pytest.raises(ModelError, match="unknown attribute"):
        SenderAttr("age").validate({"race": RACE})
    with pytest.raises(ModelError, match="unknown attribute"):
        global_statistic(SenderAttr("age"), g(2, [(0, 1)]))


def test_model_spec_invariants():
    with pytest.raises(ModelError):
        ModelSpec(())
    with pytest.raises(ModelError, match="duplicate"):
        ModelSpec((Edges(), Edges()))
    with pytest.raises(ModelError):
        ModelSpec((NodeMix("race", "White", "White"),), (("race", "White", "White"),))


def test_decay_must_be_nonnegative():
    with pytest.raises(ModelError):
        GWInDegree(-0.1)
    with pytest.raises(ModelError):
        GWESP(-1.0)


def test_interaction_multiplies_contributions():
    cov = PeriodCovariates.from_values([RACE, AttributeSpec("pct", "numeric")],
                                       {"race": ["White", "Black", "Black"], "pct": [0.1, 0.5, 0.9]})
    term = Interaction((SenderAttr("pct"), NodeMix("race", "Black", "Black")))
    D = change_matrices(ModelSpec((term,)), g(3, []), cov)[0]
    assert D[1, 2] == 0.5 and D[2, 1] == 0.9 and D[0, 1] == 0


def test_interaction_rejects_network_operands():
    with pytest.raises(ModelError):
        Interaction((Reciprocity(), Edges()))


def test_period_polynomials():
    cov = PeriodCovariates(period_index=3, period_label="99")
    assert PeriodCov(power=2).value(cov) == 9
    assert PeriodCov(source="label").value(cov) == 99
    assert PeriodCov(source={"99": 0.25}).value(cov) == 0.25


def test_missing_covariate_drops_dyads():
    x = AttributeSpec("x", "numeric")
    cov = PeriodCovariates.from_values([x], {"x": [1.0, None, 2.0]})
    X = change_statistics(ModelSpec((Edges(), SenderAttr("x"))), g(3, [(0, 2)]), cov)
    assert X.dropped == 2 and X.n_rows == 4
    assert not np.isnan(X.X).any()


def test_term_dicts_round_trip():
    entries = [
        {"kind": "edges"}, {"kind": "gwesp", "decay": 0.25, "rule": "itp", "name": "T"},
        {"kind": "interaction", "name": "I", "terms": [{"kind": "sender", "attr": "x"},
                                                         {"kind": "period", "power": 2}]},
        {"kind": "mixing", "attr": "race", "reference": ["W", "W"]},
    ]
    m = model_from_dicts(entries, {s.name: s for s in SPECS})
    assert len(m) == 3 + 8
    assert m.terms[1] == GWESP(0.25, "ITP", label="T")
    with pytest.raises(ModelError, match="unexpected"):
        term_from_dict({"kind": "edges", "attr": "x"})
    with pytest.raises(ModelError, match="unknown term kind"):
        term_from_dict({"kind": "triangles"})


def test_every_term_kind_is_exercised():
    kinds = {type(t).__name__ for t in all_terms()}
    from tergmkit.terms import TERM_KINDS
    assert {c.__name__ for c in TERM_KINDS.values()} <= kinds
