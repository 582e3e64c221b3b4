"""Build the 108th-House-shaped mixing fixture.

The network has 377 white, 38 Black and 24 Latino members (379 men, 60
women), and its tie counts are chosen so that the race and gender mixing rows
round to the published percentages.  Writes edges.csv and attributes.csv into
src/tergmkit/data/house108_mixing/.

    python3 scripts/build_house108_fixture.py [--seed 108] [--out DIR]
"""
from __future__ import annotations

import argparse
import itertools
from pathlib import Path

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, milp

RACES = ("White", "Black", "Latino")
GENDERS = ("Men", "Women")
RACE_SIZES = (377, 38, 24)
# women per race; the race and gender totals are what the report checks
WOMEN_BY_RACE = (40, 13, 7)

RACE_ROWS = {  # percent of each sender group's ties to White, Black, Latino
    "White": (90.71, 5.96, 3.32),
    "Black": (72.18, 22.81, 5.02),
    "Latino": (78.00, 10.57, 11.43),
}
GENDER_ROWS = {"Men": (84.13, 15.87), "Women": (79.77, 20.23)}

DEFAULT_OUT = Path(__file__).resolve().parents[1] / "src" / "tergmkit" / "data" / "house108_mixing"


def rounds_to(counts, target) -> bool:
    total = sum(counts)
    return all(round(100 * c / total, 2) == t for c, t in zip(counts, target))


def row_counts(target, near: int, spread: int = 2000):
    """Integer counts closest in total to ``near`` whose shares round to ``target``."""
    for delta in range(spread):
        for total in (near + delta, near - delta):
            base = [int(round(t / 100 * total)) for t in target]
            base[0] += total - sum(base)
            # try small perturbations of the rounded allocation
            for tweak in itertools.product((-1, 0, 1), repeat=len(target) - 1):
                c = list(base)
                for k, d in enumerate(tweak, start=1):
                    c[k] += d
                c[0] = total - sum(c[1:])
                if min(c) > 0 and rounds_to(c, target):
                    return c
    raise ValueError(f"no counts near {near} round to {target}")


def joint_table(race_rows, gender_rows, sizes):
    """Tie counts for every (race, gender) -> (race, gender) cell matching both margins."""
    cells = [(r, g) for r in range(3) for g in range(2)]
    pairs = [(a, b) for a in cells for b in cells]
    cap = np.array([sizes[a] * sizes[b] - (sizes[a] if a == b else 0) for a, b in pairs], dtype=float)
    rows, rhs = [], []
    for rs, rr in itertools.product(range(3), range(3)):
        rows.append([1.0 if a[0] == rs and b[0] == rr else 0.0 for a, b in pairs])
        rhs.append(race_rows[rs][rr])
    for gs, gr in itertools.product(range(2), range(2)):
        rows.append([1.0 if a[1] == gs and b[1] == gr else 0.0 for a, b in pairs])
        rhs.append(gender_rows[gs][gr])
    A = np.array(rows)
    # stay close to ties spread in proportion to capacity: minimise sum |x - target|
    m = len(pairs)
    share = cap / cap.sum()
    target = share * sum(sum(r) for r in race_rows)
    c = np.concatenate([np.zeros(m), np.ones(m)])
    eq = LinearConstraint(np.hstack([A, np.zeros((len(A), m))]), rhs, rhs)
    dev = LinearConstraint(np.block([[np.eye(m), -np.eye(m)], [-np.eye(m), -np.eye(m)]]),
                           -np.inf, np.concatenate([target, -target]))
    res = milp(c, constraints=[eq, dev], integrality=np.concatenate([np.ones(m), np.zeros(m)]),
               bounds=Bounds(np.zeros(2 * m), np.concatenate([cap, np.full(m, np.inf)])))
    if res.status != 0:
        raise RuntimeError(f"no joint table: {res.message}")
    x = np.round(res.x[:m]).astype(int)
    return {pair: int(v) for pair, v in zip(pairs, x)}


def build(seed: int = 108, white_ties: int = 7000):
    rng = np.random.default_rng(seed)
    race_counts = {
        "White": row_counts(RACE_ROWS["White"], white_ties),
        "Black": row_counts(RACE_ROWS["Black"], white_ties // 9),
        "Latino": row_counts(RACE_ROWS["Latino"], white_ties // 14),
    }
    total = sum(sum(c) for c in race_counts.values())
    women_share = 0.15
    for delta in range(total):
        found = None
        for w in (int(total * women_share) + delta, int(total * women_share) - delta):
            try:
                women = row_counts(GENDER_ROWS["Women"], w, spread=1)
                men = row_counts(GENDER_ROWS["Men"], total - sum(women), spread=1)
                found = (men, women)
                break
            except ValueError:
                continue
        if found:
            break
    men, women = found
    sizes = {}
    for r, (n, nw) in enumerate(zip(RACE_SIZES, WOMEN_BY_RACE)):
        sizes[(r, 0)], sizes[(r, 1)] = n - nw, nw
    table = joint_table([race_counts[r] for r in RACES], [men, women], sizes)

    # node ids in (race, gender) blocks, then shuffled labels
    members = {}
    ids = [f"m{k:03d}" for k in rng.permutation(sum(RACE_SIZES)) + 1]
    pos = 0
    for cell, size in sizes.items():
        members[cell] = ids[pos:pos + size]
        pos += size
    edges = []
    for (a, b), count in sorted(table.items()):
        if count == 0:
            continue
        S, R = members[a], members[b]
        dyads = [(s, r) for s in S for r in R if s != r]
        for k in sorted(rng.choice(len(dyads), size=count, replace=False)):
            edges.append(dyads[k])
    attrs = [(node, RACES[c[0]], GENDERS[c[1]]) for c, nodes in members.items() for node in nodes]
    return sorted(edges), sorted(attrs)


def write(edges, attrs, out: Path, period: str = "108", weight: int = 2):
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "edges.csv", "w", encoding="utf-8") as fh:
        fh.write("period,sender,receiver,weight\n")
        for s, r in edges:
            fh.write(f"{period},{s},{r},{weight}\n")
    with open(out / "attributes.csv", "w", encoding="utf-8") as fh:
        fh.write("period,node,attribute,value\n")
        for node, race, gender in attrs:
            fh.write(f"{period},{node},race,{race}\n{period},{node},gender,{gender}\n")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--seed", type=int, default=108)
    ap.add_argument("--white-ties", type=int, default=7000)
    ap.add_argument("--out", type=Path, default=DEFAULT_OUT)
    args = ap.parse_args(argv)
    edges, attrs = build(args.seed, args.white_ties)
    write(edges, attrs, args.out)
    print(f"wrote {len(edges)} ties among {len(attrs)} members to {args.out}")


if __name__ == "__main__":
    main()
