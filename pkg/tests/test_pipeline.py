import json
from importlib import resources

import pytest
import yaml

from tergmkit.cli import main
from tergmkit.config import ConfigError, load_config, parse_config, validate
from tergmkit.io import write_panel
from tergmkit.simulation import group_attribute_generator, simulate_panel
from tergmkit.terms import Edges, ModelSpec, NodeMix, Reciprocity

TABLE1_NAMES = [
    "Edges", "Reciprocity", "Sociality", "Popularity", "Transitivity", "Electoral Margin", "Seniority",
    "Ideology", "Majority Party", "Ideological Extremity", "Percent Black Population",
    "Percent Hispanic Population", "Bills Sponsored", "Race Bills Sponsored", "Latino * Race Bills",
    "Black * Race Bills", "Same Committee", "Ideological Distance", "Same Party", "Black -> White",
    "Latino -> White", "White -> Black", "Black -> Black", "Latino -> Black", "White -> Latino",
    "Black -> Latino", "Latino -> Latino", "Women -> Men", "Men -> Women", "Women -> Women",
    "Black District * White Sponsor", "Black District * Black Sponsor", "Latino District * White Sponsor",
    "Latino District * Latino Sponsor", "Congress", "Congress^2", "Congress^3", "Party Homophily",
]


def base_config(data_dir, out_dir, **extra):
    cfg = {
        "schema_version": 1,
        "output_dir": str(out_dir),
        "data": {"edges": str(data_dir / "edges.csv"), "attributes": str(data_dir / "attributes.csv"),
                 "threshold": 1},
        "attributes": [{"name": "group", "kind": "categorical", "levels": ["a", "b"]}],
        "model": {"terms": [{"kind": "edges", "name": "Edges"}, {"kind": "reciprocity", "name": "Reciprocity"},
                            {"kind": "nodemix", "attr": "group", "sender": "a", "receiver": "a",
                             "name": "a -> a"}]},
        "fit": {"bootstrap": 30, "seed": 5},
        "analysis": {"mixing": [{"attr": "group"}],
                     "probabilities": [{"name": "aa", "sender": {"group": "a"}, "receiver": {"group": "a"},
                                        "m": 40, "seed": 2, "per_period": True}]},
    }
    cfg.update(extra)
    return cfg


def dump(path, cfg):
    path.write_text(yaml.safe_dump(cfg, sort_keys=False), encoding="utf-8")
    return path


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("data")
    gen = group_attribute_generator("group", ("a", "b"), (1, 1))
    panel = simulate_panel(16, 4, ModelSpec((Edges(), Reciprocity(), NodeMix("group", "a", "a"))),
                           [-1.8, 1.0, 0.8], gen, seed=3, burn_in=30)
    write_panel(panel, d, tie_weight=2)
    return d


def diag_codes(diags, level):
    return {d.code for d in diags if d.level == level}


def test_valid_config_has_no_errors(data_dir, tmp_path):
    cfg = load_config(dump(tmp_path / "c.yaml", base_config(data_dir, tmp_path / "out")))
    assert not diag_codes(validate(cfg), "error")


def test_empty_model_is_an_error(data_dir, tmp_path):
    raw = base_config(data_dir, tmp_path / "out")
    raw["model"]["terms"] = []
    cfg, _ = parse_config(raw, tmp_path / "c.yaml")
    assert "empty-model" in diag_codes(validate(cfg), "error")


def test_undeclared_level_is_an_error(data_dir, tmp_path):
    raw = base_config(data_dir, tmp_path / "out")
    raw["model"]["terms"].append({"kind": "nodemix", "attr": "group", "sender": "a", "receiver": "z"})
    cfg, _ = parse_config(raw, tmp_path / "c.yaml")
    assert "undeclared-level" in diag_codes(validate(cfg), "error")


@pytest.mark.parametrize("mutate,code", [
    (lambda r: r["fit"].pop("seed"), "missing-fit"),
    (lambda r: r.pop("data"), "missing-input"),
    (lambda r: r["analysis"]["mixing"].append({"attr": "nope"}), "undeclared-attribute"),
    (lambda r: r["model"]["terms"].append({"kind": "sender", "attr": "age"}), "undeclared-attribute"),
    (lambda r: r["model"]["terms"].append({"kind": "memory", "lag": 2}), "lag-exceeds-memory"),
])
def test_config_errors(data_dir, tmp_path, mutate, code):
    raw = base_config(data_dir, tmp_path / "out")
    mutate(raw)
    cfg, _ = parse_config(raw, tmp_path / "c.yaml")
    assert code in diag_codes(validate(cfg), "error")


def test_three_tie_cell_warns(tmp_path):
    d = tmp_path / "d"
    d.mkdir()
    edges = ["period,sender,receiver,weight", "1,a1,a2,2", "1,a2,a1,2", "1,a1,b1,2",
             "1,b1,b2,2", "1,b2,b3,2", "1,b3,b1,2", "1,b1,a2,2"]
    (d / "edges.csv").write_text("\n".join(edges) + "\n")
    attrs = ["period,node,attribute,value"] + [f"1,{n},group,{n[0]}" for n in ("a1", "a2", "b1", "b2", "b3")]
    (d / "attributes.csv").write_text("\n".join(attrs) + "\n")
    raw = base_config(d, tmp_path / "out")
    raw["model"]["terms"].append({"kind": "nodemix", "attr": "group", "sender": "b", "receiver": "b",
                                  "name": "b -> b"})
    cfg, _ = parse_config(raw, tmp_path / "c.yaml")
    diags = validate(cfg)
    warn = [x for x in diags if x.code == "sparse-mixing-cell"]
    assert not diag_codes(diags, "error")
    assert len(warn) == 2 and any("'b -> b' has 3 observed ties" in x.message for x in warn)


def test_cli_validate_and_exit_codes(data_dir, tmp_path, capsys):
    good = dump(tmp_path / "good.yaml", base_config(data_dir, tmp_path / "out"))
    assert main(["validate", "-c", str(good)]) == 0
    assert json.loads(capsys.readouterr().out)["status"] == "ok"
    raw = base_config(data_dir, tmp_path / "out")
    raw["model"]["terms"] = []
    bad = dump(tmp_path / "bad.yaml", raw)
    assert main(["validate", "-c", str(bad)]) == 2
    assert main(["fit", "-c", str(bad)]) == 2
    report = json.loads(capsys.readouterr().err)
    assert report["status"] == "error" and report["errors"][0]["code"] == "empty-model"
    assert main(["fit", "-c", str(tmp_path / "missing.yaml")]) == 2


def test_run_writes_outputs_and_manifest(data_dir, tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["run", "-c", str(dump(tmp_path / "c.yaml", base_config(data_dir, out)))]) == 0
    names = {p.name for p in out.iterdir()}
    assert {"coefficients.csv", "fit.json", "bootstrap.csv", "mixing_group.csv", "probabilities.csv",
            "panel_summary.csv", "manifest.json"} <= names
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seed"]["fit"] == 5 and len(manifest["config_sha256"]) == 64
    assert manifest["artifacts"]["coefficients.csv"]
    header = (out / "coefficients.csv").read_text().splitlines()[0]
    assert header == "term,Estimate,2.5%,97.5%"
    # report reuses the stored fit
    assert main(["report", "-c", str(tmp_path / "c.yaml"), "-o", str(tmp_path / "rep"),
                 "--fit", str(out / "fit.json")]) == 0
    assert (tmp_path / "rep" / "probabilities.csv").read_bytes() == (out / "probabilities.csv").read_bytes()


def test_failed_run_leaves_no_partial_outputs(data_dir, tmp_path, capsys):
    raw = base_config(data_dir, tmp_path / "out")
    # passes validation, but an empty receiver level list matches no dyad at run time
    raw["analysis"]["probabilities"].append({"name": "empty", "sender": {"group": "a"},
                                             "receiver": {"group": []}, "periods": ["1"], "m": 5, "seed": 1})
    assert main(["run", "-c", str(dump(tmp_path / "c.yaml", raw))]) == 1
    err = json.loads(capsys.readouterr().err)
    assert err["kind"] == "run-failed" and "empty" in err["errors"][0]["message"]
    assert not (tmp_path / "out").exists()
    assert not list(tmp_path.glob(".out.staging-*"))


def test_outputs_identical_across_worker_counts(data_dir, tmp_path):
    cfg = dump(tmp_path / "c.yaml", base_config(data_dir, tmp_path / "x"))
    outs = []
    for w in (1, 2, 8):
        o = tmp_path / f"w{w}"
        assert main(["run", "-c", str(cfg), "-o", str(o), "-j", str(w)]) == 0
        outs.append(o)
    files = sorted(p.name for p in outs[0].iterdir() if p.name != "manifest.json")
    for o in outs[1:]:
        for name in files:
            assert (o / name).read_bytes() == (outs[0] / name).read_bytes(), name


def test_seed_override_changes_bootstrap(data_dir, tmp_path):
    cfg = dump(tmp_path / "c.yaml", base_config(data_dir, tmp_path / "x"))
    assert main(["fit", "-c", str(cfg), "-o", str(tmp_path / "a"), "--seed", "1"]) == 0
    assert main(["fit", "-c", str(cfg), "-o", str(tmp_path / "b"), "--seed", "2"]) == 0
    assert (tmp_path / "a" / "bootstrap.csv").read_bytes() != (tmp_path / "b" / "bootstrap.csv").read_bytes()


def test_workers_from_environment(data_dir, tmp_path, monkeypatch):
    from tergmkit.pipeline import resolve_workers
    cfg = load_config(dump(tmp_path / "c.yaml", base_config(data_dir, tmp_path / "x")))
    monkeypatch.setenv("TERGMKIT_WORKERS", "3")
    assert resolve_workers(cfg).workers == 3
    assert resolve_workers(cfg, 2).workers == 2
    monkeypatch.setenv("TERGMKIT_WORKERS", "many")
    with pytest.raises(ConfigError):
        resolve_workers(cfg)


def test_house_config_names_in_table_order():
    path = resources.files("tergmkit") / "configs" / "house_cosponsorship.yaml"
    cfg = load_config(path)
    assert list(cfg.model().names) == TABLE1_NAMES
    assert not diag_codes(validate(cfg, check_data=False), "error")
