"""Acceptance criteria A1-A8.  Each test carries ``acceptance("Ak")``; the
conftest prints one pass/fail line per criterion at the end of the run."""
import json
import time
from importlib import resources

import numpy as np
import pytest
import yaml
from scipy.optimize import minimize
from scipy.special import expit

from helpers import all_terms_model, batch_means_se, random_covariates, random_graph
from tergmkit.analysis import DyadSelector, baseline_shares, dyad_probability_sample, panel_mixing
from tergmkit.cli import main
from tergmkit.config import load_config, validate
from tergmkit.estimation import (bootstrap_fit, build_design, fit_mple, log_pseudolikelihood,
                                 pseudolikelihood_gradient)
from tergmkit.io import read_panel
from tergmkit.netcore import AttributeSpec, AttributeTable, DirectedGraph, align_panel
from tergmkit.simulation import enumerate_exact, gibbs_sample, group_attribute_generator, simulate_panel
from tergmkit.statistics import change_matrices, change_statistics, statistics_vector
from tergmkit.terms import (GWESP, Edges, GWInDegree, Match, ModelSpec, NodeMix, Reciprocity,
                            SenderAttr)

from test_pipeline import TABLE1_NAMES

acceptance = pytest.mark.acceptance
CONFIGS = resources.files("tergmkit") / "configs"


# A1 ------------------------------------------------------------------------

@acceptance("A1")
def test_a1_incremental_change_statistics_equal_brute_force():
    t0 = time.perf_counter()
    model = all_terms_model()
    worst = 0.0
    for seed in range(200):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 11))
        G, cov = random_graph(rng, n), random_covariates(rng, n)
        fast = change_matrices(model, G, cov)
        slow = change_matrices(model, G, cov, brute_force=True)
        worst = max(worst, float(np.max(np.abs(fast - slow))))
    # equal up to floating-point summation order
    assert worst <= 1e-12
    assert time.perf_counter() - t0 < 60


# A2 ------------------------------------------------------------------------

def _small_panel(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(10, 16))
    ids = tuple(f"v{k}" for k in range(n))
    specs = {"race": AttributeSpec("race", "categorical", ("W", "B")), "x": AttributeSpec("x", "numeric")}
    vals = {"race": dict(zip(ids, rng.choice(["W", "B"], size=n))),
            "x": dict(zip(ids, np.round(rng.normal(size=n), 3)))}
    periods = [(str(t), DirectedGraph(random_graph(rng, n, rng.uniform(0.15, 0.4)).adjacency, ids))
               for t in (1, 2)]
    return align_panel(periods, attributes=AttributeTable(specs, {"1": vals, "2": vals}))


A2_MODEL = ModelSpec((Edges(), Reciprocity(), GWInDegree(0.5), GWESP(0.5), SenderAttr("x"), Match("race")))


@acceptance("A2")
def test_a2_edges_only_is_logit_density():
    rng = np.random.default_rng(0)
    graphs = [random_graph(rng, 15, 0.2) for _ in range(4)]
    panel = align_panel([(str(t), g) for t, g in enumerate(graphs)])
    ties = sum(g.edge_count for g in graphs)
    dyads = 4 * 15 * 14
    fit = fit_mple(build_design(panel, ModelSpec((Edges(),))))
    assert abs(fit.theta[0] - np.log(ties / (dyads - ties))) < 1e-8


@acceptance("A2")
@pytest.mark.parametrize("seed", range(20))
def test_a2_matches_independent_optimizer(seed):
    d = build_design(_small_panel(seed), A2_MODEL)
    fit = fit_mple(d)
    assert fit.converged and not fit.separated
    ref = minimize(lambda t: -log_pseudolikelihood(t, d.X, d.y), np.zeros(len(A2_MODEL)),
                   jac=lambda t: -(d.X.T @ (d.y - expit(d.X @ t))), method="BFGS",
                   options={"gtol": 1e-10, "maxiter": 10_000})
    np.testing.assert_allclose(fit.theta, ref.x, rtol=0, atol=1e-6)


@acceptance("A2")
@pytest.mark.parametrize("seed", range(5))
def test_a2_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    d = build_design(_small_panel(seed), A2_MODEL)
    theta = rng.normal(scale=0.3, size=len(A2_MODEL))
    g = pseudolikelihood_gradient(theta, d.X, d.y)
    h = 1e-5
    fd = np.array([(log_pseudolikelihood(theta + h * e, d.X, d.y) - log_pseudolikelihood(theta - h * e, d.X, d.y))
                   / (2 * h) for e in np.eye(len(theta))])
    assert np.all(np.abs(fd - g) <= 1e-6 * np.maximum(np.abs(g), 1.0))


# A3 ------------------------------------------------------------------------

A3_MODEL = ModelSpec((Edges(), Reciprocity(), NodeMix("group", "a", "a")))
A3_THETA = np.array([-2.0, 1.0, 0.8])


@acceptance("A3")
@pytest.mark.slow
def test_a3_parameter_recovery():
    t0 = time.perf_counter()
    gen = group_attribute_generator("group", ("a", "b"), (1, 1))
    covered = np.zeros(3, dtype=int)
    for rep in range(20):
        panel = simulate_panel(30, 10, A3_MODEL, A3_THETA, gen, seed=1000 + rep, burn_in=100)
        res = bootstrap_fit(panel, A3_MODEL, B=200, seed=2000 + rep)
        covered += (res.ci_lower <= A3_THETA) & (A3_THETA <= res.ci_upper)
    print(f"\nA3 coverage out of 20: {dict(zip(A3_MODEL.names, covered.tolist()))}")
    assert np.all(covered >= 17), covered
    assert time.perf_counter() - t0 < 600


# A4 ------------------------------------------------------------------------

@acceptance("A4")
@pytest.mark.parametrize("model,theta", [
    (ModelSpec((Edges(),)), [-0.4]),
    (ModelSpec((Edges(), Reciprocity())), [-0.8, 1.2]),
    (ModelSpec((Edges(), GWESP(0.5))), [-0.7, 0.6]),
], ids=["edges", "edges+reciprocity", "edges+gwesp"])
def test_a4_gibbs_matches_exact_enumeration(model, theta):
    t0 = time.perf_counter()
    exact = enumerate_exact(3, model, theta).expectation()
    graphs = gibbs_sample(3, model, theta, burn_in=100, count=10_000, seed=0)
    S = np.array([statistics_vector(model, g) for g in graphs])
    se = batch_means_se(S, batches=50)
    assert np.all(np.abs(S.mean(axis=0) - exact) <= 3 * se), (S.mean(axis=0), exact, se)
    assert time.perf_counter() - t0 < 60


# A5 ------------------------------------------------------------------------

RACES = ("White", "Black", "Latino")


@acceptance("A5")
def test_a5_race_and_gender_baselines():
    race = 100 * baseline_shares(["White"] * 377 + ["Black"] * 38 + ["Latino"] * 24, RACES)
    assert [round(x, 2) for x in race] == [85.88, 8.66, 5.47]
    assert round(race[0], 2) == 85.88
    assert abs(race[1] - 8.67) <= 0.1 and abs(race[2] - 5.55) <= 0.1
    gender = 100 * baseline_shares(["Men"] * 379 + ["Women"] * 60, ("Men", "Women"))
    assert [round(x, 2) for x in gender] == [86.33, 13.67]


@acceptance("A5")
def test_a5_fixture_mixing_rows():
    root = resources.files("tergmkit") / "data" / "house108_mixing"
    panel = read_panel(root / "edges.csv", root / "attributes.csv",
                       specs=[AttributeSpec("race", "categorical", RACES),
                              AttributeSpec("gender", "categorical", ("Men", "Women"))])
    rep = panel_mixing(panel, "108", "race")
    pct = rep.percent()
    assert [round(x, 2) for x in pct[0]] == [90.71, 5.96, 3.32]
    assert [round(x, 2) for x in pct[1]] == [72.18, 22.81, 5.02]


# A6 ------------------------------------------------------------------------

@acceptance("A6")
def test_a6_exhaustive_probabilities_are_direct():
    panel = _small_panel(3)
    fit = fit_mple(build_design(panel, A2_MODEL))
    sel = DyadSelector({"race": "B"}, {"race": "W"})
    s = dyad_probability_sample(fit, A2_MODEL, panel, None, sel)
    direct = []
    for t in range(len(panel)):
        cs = change_statistics(A2_MODEL, panel.periods[t].graph, panel.covariates(t))
        mask = sel.mask(panel.covariates(t), panel.periods[t].graph.n)
        direct.append(expit(cs.X[mask[cs.dyads[:, 0], cs.dyads[:, 1]]] @ fit.theta))
    direct = np.concatenate(direct)
    np.testing.assert_array_equal(np.sort(s.probabilities), np.sort(direct))
    assert s.median == np.median(direct)
    assert s.m == s.matches == len(direct)


@acceptance("A6")
def test_a6_zero_theta_gives_one_half():
    panel = _small_panel(4)
    zero = np.zeros(len(A2_MODEL))
    for m in (None, 25, 10_000):
        s = dyad_probability_sample(zero, A2_MODEL, panel, "all", DyadSelector(), m=m, seed=1)
        assert s.median == s.q25 == s.q75 == s.mean == 0.5


# A7 ------------------------------------------------------------------------

@acceptance("A7")
def test_a7_outputs_byte_identical_across_workers(tmp_path):
    config = str(CONFIGS / "recovery.yaml")
    outs = {}
    for w in (1, 2, 8):
        out = tmp_path / f"w{w}"
        assert main(["run", "-c", config, "-o", str(out), "--seed", "7", "-j", str(w)]) == 0
        outs[w] = out
    files = sorted(str(p.relative_to(outs[1])) for p in outs[1].rglob("*")
                   if p.is_file() and p.name != "manifest.json")
    assert {"coefficients.csv", "probabilities.csv", "mixing_group.csv"} <= set(files)
    manifests = {}
    for w, out in outs.items():
        for name in files:
            assert (out / name).read_bytes() == (outs[1] / name).read_bytes(), (w, name)
        m = json.loads((out / "manifest.json").read_text())
        for volatile in ("timings_seconds", "workers"):
            m.pop(volatile)
        manifests[w] = m
    assert manifests[1] == manifests[2] == manifests[8]


# A8 ------------------------------------------------------------------------

@acceptance("A8")
@pytest.mark.slow
def test_a8_table1_model_on_synthetic_panel(tmp_path, capsys):
    path = CONFIGS / "house_cosponsorship.yaml"
    cfg = load_config(path)
    assert list(cfg.model().names) == TABLE1_NAMES
    assert not [d for d in validate(cfg, check_data=False) if d.level == "error"]

    assert main(["simulate", "-c", str(path), "-o", str(tmp_path / "synth")]) == 0
    panel_dir = tmp_path / "synth" / "panel"
    assert main(["validate", "-c", str(path), "--data-dir", str(panel_dir)]) == 0

    # fewer bootstrap replicates than the bundled config, to keep the suite fast
    raw = yaml.safe_load(path.read_text())
    raw["fit"]["bootstrap"] = 20
    small = tmp_path / "house_b20.yaml"
    small.write_text(yaml.safe_dump(raw, sort_keys=False))
    assert main(["run", "-c", str(small), "--data-dir", str(panel_dir), "-o", str(tmp_path / "run")]) == 0
    lines = (tmp_path / "run" / "coefficients.csv").read_text().splitlines()
    assert lines[0] == "term,Estimate,2.5%,97.5%"
    assert len(lines) - 1 == 38
    assert [ln.split(",")[0].strip('"') for ln in lines[1:]] == TABLE1_NAMES
    summary = (tmp_path / "run" / "panel_summary.csv").read_text().splitlines()
    assert len(summary) - 1 == 12
