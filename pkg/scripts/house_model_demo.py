"""Run the bundled Table-1 House model end to end on a synthetic panel.

Simulates a 12-period legislature with the covariates the model needs,
fits it by bootstrapped MPLE and writes the coefficient, mixing,
probability and decile tables.  The synthetic parameters are mild, so the
estimates say nothing about the real House; the point is the workflow.

    python3 scripts/house_model_demo.py --out demo --bootstrap 100
"""
from __future__ import annotations

import argparse
import csv
import tempfile
from importlib import resources
from pathlib import Path

import yaml

from tergmkit.cli import main as cli


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--out", type=Path, default=Path("demo"))
    ap.add_argument("--bootstrap", type=int, default=100, help="replicates (the bundled config uses 1000)")
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args(argv)

    raw = yaml.safe_load((resources.files("tergmkit") / "configs" / "house_cosponsorship.yaml").read_text())
    raw["fit"]["bootstrap"] = args.bootstrap
    with tempfile.TemporaryDirectory() as tmp:
        cfg = Path(tmp) / "house.yaml"
        cfg.write_text(yaml.safe_dump(raw, sort_keys=False))
        synth = args.out / "synthetic"
        if cli(["simulate", "-c", str(cfg), "-o", str(synth)]) != 0:
            raise SystemExit("simulation failed")
        code = cli(["run", "-c", str(cfg), "--data-dir", str(synth / "panel"), "-o", str(args.out / "run"),
                    "-j", str(args.workers)])
        if code != 0:
            raise SystemExit(code)

    with open(args.out / "run" / "coefficients.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    width = max(len(r[0]) for r in rows)
    for r in rows:
        cells = r[1:] if r is rows[0] else [f"{float(x):.3f}" for x in r[1:]]
        print(f"{r[0]:<{width}}  " + "  ".join(f"{c:>9}" for c in cells))


if __name__ == "__main__":
    main()
