"""Exact enumeration and Gibbs sampling from ERGM distributions.

The Gibbs sampler updates one dyad at a time from its full conditional
``logistic(theta . delta_ij)``, the same expression the pseudolikelihood is
built from.  Dyad-independent terms enter through a fixed logit offset
matrix; reciprocity, geometrically weighted degree and GWESP terms are
updated incrementally inside a compiled kernel.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numba
import numpy as np
from scipy.special import logsumexp

from .netcore import (AttributeSpec, AttributeTable, DirectedGraph, PanelNetwork, PeriodCovariates,
                      align_panel, CATEGORICAL, NUMERIC, BINARY)
from .statistics import statistics_vector
from .terms import (GWESP, GWInDegree, ModelError, ModelSpec, Reciprocity, SHARED_PARTNER_RULES,
                    shared_partners)

MAX_EXACT_NODES = 4

_RECIP, _GWIN, _GWOUT, _GWESP, _OTHER = 0, 1, 2, 3, 4


@dataclass(frozen=True, eq=False)
class ExactDistribution:
    """All 2^(n(n-1)) directed graphs on n nodes with their probabilities.

    Graph ``g`` has tie ``cells[k]`` iff bit k of g is set; cells run over
    off-diagonal positions in row-major order.
    """

    n: int
    cells: np.ndarray
    stats: np.ndarray
    log_weights: np.ndarray
    probabilities: np.ndarray

    def graph(self, g: int) -> DirectedGraph:
        a = np.zeros((self.n, self.n), dtype=np.int8)
        for k, (i, j) in enumerate(self.cells):
            if (g >> k) & 1:
                a[i, j] = 1
        return DirectedGraph(a)

    def expectation(self, values: np.ndarray | None = None) -> np.ndarray:
        """Expected model statistics, or expectation of ``values`` per graph."""
        v = self.stats if values is None else np.asarray(values)
        return self.probabilities @ v

    def tie_probabilities(self) -> np.ndarray:
        out = np.zeros((self.n, self.n))
        codes = np.arange(len(self.probabilities))
        for k, (i, j) in enumerate(self.cells):
            out[i, j] = self.probabilities[(codes >> k) & 1 == 1].sum()
        return out


def _cells(n: int) -> np.ndarray:
    return np.array([(i, j) for i in range(n) for j in range(n) if i != j], dtype=np.int64).reshape(-1, 2)


def enumerate_exact(n: int, model: ModelSpec, theta, covariates: PeriodCovariates | None = None
                    ) -> ExactDistribution:
    if n > MAX_EXACT_NODES:
        raise ValueError(f"exact enumeration is limited to n <= {MAX_EXACT_NODES}, got {n}")
    if n < 1:
        raise ValueError("n must be positive")
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (len(model),):
        raise ValueError(f"theta has shape {theta.shape}, model has {len(model)} terms")
    cells = _cells(n)
    m = len(cells)
    stats = np.empty((2 ** m, len(model)))
    a = np.zeros((n, n), dtype=np.int8)
    for g in range(2 ** m):
        a[:] = 0
        for k in range(m):
            if (g >> k) & 1:
                a[cells[k, 0], cells[k, 1]] = 1
        stats[g] = statistics_vector(model, DirectedGraph(a), covariates)
    logw = stats @ theta
    probs = np.exp(logw - logsumexp(logw))
    return ExactDistribution(n, cells, stats, logw, probs)


# ---------------------------------------------------------------------------
# Gibbs sampling


@numba.njit(cache=True)
def _gibbs_sweep(Y, offset, codes, thetas, decays, slots, rules, sp, ws, incs, indeg, outdeg,
                 I, J, U, extra):
    n = Y.shape[0]
    for step in range(I.shape[0]):
        i = I[step]
        j = J[step]
        y0 = Y[i, j]
        eta = offset[i, j] + extra[step]
        for k in range(codes.shape[0]):
            c = codes[k]
            d = 0.0
            if c == 0:
                d = float(Y[j, i])
            elif c == 1 or c == 2:
                deg = indeg[j] - y0 if c == 1 else outdeg[i] - y0
                d = np.exp(-decays[k] * (deg + 1)) - np.exp(-decays[k] * deg)
            elif c == 3:
                S = sp[slots[k]]
                inc = incs[slots[k]]
                r = rules[k]
                d = ws[slots[k], S[i, j]]
                for x in range(n):
                    if r == 0:  # OTP
                        if Y[i, x] and Y[j, x]:
                            d += inc[S[i, x] - y0]
                        if Y[x, j] and Y[x, i]:
                            d += inc[S[x, j] - y0]
                    elif r == 1:  # ITP
                        if Y[j, x] and Y[x, i]:
                            d += inc[S[x, i] - y0] + inc[S[j, x] - y0]
                    elif r == 3:  # ISP: k->i and k->j
                        if Y[i, x] and Y[j, x]:
                            d += inc[S[j, x] - y0]
                        if Y[i, x] and Y[x, j]:
                            d += inc[S[x, j] - y0]
                    else:  # OSP: i->k and j->k
                        if Y[i, x] and Y[x, j]:
                            d += inc[S[i, x] - y0]
                        if Y[x, i] and Y[x, j]:
                            d += inc[S[x, i] - y0]
            eta += thetas[k] * d
        y1 = 1 if U[step] < 1.0 / (1.0 + np.exp(-eta)) else 0
        if y1 == y0:
            continue
        sgn = 1 if y1 == 1 else -1
        Y[i, j] = y1
        indeg[j] += sgn
        outdeg[i] += sgn
        for k in range(codes.shape[0]):
            if codes[k] != 3:
                continue
            S = sp[slots[k]]
            r = rules[k]
            # diagonal entries of S are not maintained
            for x in range(n):
                if r == 0:
                    S[i, x] += sgn * Y[j, x]
                    S[x, j] += sgn * Y[x, i]
                elif r == 1:
                    S[x, i] += sgn * Y[j, x]
                    S[j, x] += sgn * Y[x, i]
                elif r == 3:
                    S[j, x] += sgn * Y[i, x]
                    S[x, j] += sgn * Y[i, x]
                else:
                    S[i, x] += sgn * Y[x, j]
                    S[x, i] += sgn * Y[x, j]


class _Chain:
    """Mutable Gibbs state for one network."""

    def __init__(self, n, model: ModelSpec, theta, covariates, initial=None):
        self.n = n
        self.model = model
        self.theta = np.asarray(theta, dtype=float)
        self.cov = covariates if covariates is not None else PeriodCovariates()
        self.Y = np.zeros((n, n), dtype=np.int8) if initial is None else np.array(initial, dtype=np.int8)
        offset = np.zeros((n, n))
        codes, thetas, decays, slots, rules = [], [], [], [], []
        gwesp_terms = []
        self.other = []
        for th, term in zip(self.theta, model.terms):
            if term.dyad_independent:
                C = term.contribution(self.cov, n)
                if np.isnan(C).any():
                    raise ModelError(f"term {term.name!r}: missing covariate values")
                offset += th * C
                continue
            code, slot, rule, decay = _OTHER, -1, 0, 0.0
            if isinstance(term, Reciprocity):
                code = _RECIP
            elif isinstance(term, GWInDegree):
                code = _GWIN if term.incoming else _GWOUT
                decay = term.decay
            elif isinstance(term, GWESP):
                code, decay = _GWESP, term.decay
                rule = SHARED_PARTNER_RULES.index(term.rule)
                slot = len(gwesp_terms)
                gwesp_terms.append(term)
            else:
                self.other.append((th, term))
            codes.append(code)
            thetas.append(th)
            decays.append(decay)
            slots.append(slot)
            rules.append(rule)
        np.fill_diagonal(offset, 0.0)
        self.offset = offset
        self.codes = np.array(codes, dtype=np.int64)
        self.thetas = np.array(thetas, dtype=float)
        self.decays = np.array(decays, dtype=float)
        self.slots = np.array(slots, dtype=np.int64)
        self.rules = np.array(rules, dtype=np.int64)
        self.gwesp_terms = gwesp_terms
        self.ws = np.zeros((max(len(gwesp_terms), 1), n + 2))
        self.incs = np.zeros((max(len(gwesp_terms), 1), n + 2))
        for s, term in enumerate(gwesp_terms):
            w = term.weights(n + 2)
            self.ws[s] = w[:-1]
            self.incs[s] = w[1:] - w[:-1]
        self.cells = _cells(n)
        self._reset_counts()

    def _reset_counts(self):
        n = self.n
        self.sp = np.zeros((max(len(self.gwesp_terms), 1), n, n), dtype=np.int64)
        for s, term in enumerate(self.gwesp_terms):
            self.sp[s] = shared_partners(self.Y, term.rule)
        self.indeg = self.Y.sum(axis=0, dtype=np.int64)
        self.outdeg = self.Y.sum(axis=1, dtype=np.int64)

    def sweep(self, rng: np.random.Generator):
        U = rng.random(len(self.cells))
        I, J = self.cells[:, 0], self.cells[:, 1]
        args = (self.Y, self.offset, self.codes, self.thetas, self.decays, self.slots, self.rules,
                self.sp, self.ws, self.incs, self.indeg, self.outdeg)
        if not self.other:
            _gibbs_sweep(*args, I, J, U, np.zeros(len(I)))
            return
        # terms without a compiled update: toggle in Python, one dyad per kernel call
        for step in range(len(I)):
            i, j = I[step], J[step]
            extra = sum(th * _single_toggle(term, self.Y, self.cov, i, j) for th, term in self.other)
            _gibbs_sweep(*args, I[step:step + 1], J[step:step + 1], U[step:step + 1],
                         np.array([extra], dtype=float))

    def graph(self, node_ids=()) -> DirectedGraph:
        return DirectedGraph(self.Y.copy(), tuple(node_ids))


def _single_toggle(term, Y, cov, i, j) -> float:
    old = Y[i, j]
    Y[i, j] = 1
    on = term.global_value(Y, cov)
    Y[i, j] = 0
    off = term.global_value(Y, cov)
    Y[i, j] = old
    return on - off


def gibbs_sample(n: int, model: ModelSpec, theta, burn_in: int = 100, thinning: int = 1,
                 count: int = 1, seed: int | np.random.SeedSequence = 0,
                 covariates: PeriodCovariates | None = None, initial=None,
                 node_ids: Sequence[str] = ()) -> list[DirectedGraph]:
    """Draw ``count`` graphs by systematic-scan single-dyad Gibbs updates.

    ``burn_in`` and ``thinning`` are in sweeps (one sweep visits every
    ordered dyad once, row-major); a thinning of 0 is read as 1.  The chain
    starts from the empty graph unless ``initial`` is given.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    if burn_in < 0 or thinning < 0 or count < 0:
        raise ValueError("burn_in, thinning and count must be >= 0")
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (len(model),):
        raise ValueError(f"theta has shape {theta.shape}, model has {len(model)} terms")
    rng = np.random.default_rng(seed)
    chain = _Chain(n, model, theta, covariates, initial)
    for _ in range(burn_in):
        chain.sweep(rng)
    out = []
    for _ in range(count):
        for _ in range(max(thinning, 1)):
            chain.sweep(rng)
        out.append(chain.graph(node_ids))
    return out


# ---------------------------------------------------------------------------
# synthetic panels

AttributeGenerator = Callable[[int, np.random.Generator], tuple[Sequence[AttributeSpec], Mapping[str, Sequence]]]
DyadGenerator = Callable[[int, np.random.Generator], Mapping[str, np.ndarray]]


def simulate_panel(n: int, T: int, model: ModelSpec, theta,
                   attribute_generator: AttributeGenerator | None = None, seed: int = 0,
                   burn_in: int = 100, dyad_generator: DyadGenerator | None = None,
                   labels: Sequence[str] | None = None) -> PanelNetwork:
    """T independently simulated networks sharing one roster and covariate set.

    Streams: substream 0 draws covariates, substream t+1 drives the chain of
    period t.
    """
    streams = np.random.SeedSequence(seed).spawn(T + 1)
    cov_rng = np.random.default_rng(streams[0])
    specs, values = attribute_generator(n, cov_rng) if attribute_generator else ((), {})
    dyad = dict(dyad_generator(n, cov_rng)) if dyad_generator else {}
    node_ids = tuple(f"v{k:03d}" for k in range(n))
    labels = [str(x) for x in (labels or range(1, T + 1))]
    if len(labels) != T:
        raise ValueError("need one label per period")
    spec_map = {s.name: s for s in specs}
    periods, attr_values, dyad_covs = [], {}, {}
    for t, label in enumerate(labels):
        cov = PeriodCovariates.from_values(specs, values, dyad, period_index=t + 1, period_label=label)
        g = gibbs_sample(n, model, theta, burn_in=burn_in, count=1, seed=streams[t + 1],
                         covariates=cov, node_ids=node_ids)[0]
        periods.append((label, g))
        attr_values[label] = {name: dict(zip(node_ids, vals)) for name, vals in values.items()}
        dyad_covs[label] = dyad
    return align_panel(periods, attributes=AttributeTable(spec_map, attr_values),
                       dyad_covariates=dyad_covs)


def group_attribute_generator(name: str, levels: Sequence[str], shares: Sequence[float]) -> AttributeGenerator:
    """Categorical labels with group sizes as close as possible to ``shares``."""
    levels = tuple(levels)
    shares = np.asarray(shares, dtype=float) / np.sum(shares)

    def gen(n, rng):
        sizes = np.floor(shares * n).astype(int)
        for k in np.argsort(-(shares * n - sizes), kind="stable")[: n - sizes.sum()]:
            sizes[k] += 1
        vals = np.repeat(np.array(levels, dtype=object), sizes)
        rng.shuffle(vals)
        return (AttributeSpec(name, CATEGORICAL, levels),), {name: list(vals)}

    return gen


HOUSE_RACE_SHARES = (377, 38, 24)
HOUSE_GENDER_SHARES = (379, 60)


def house_attribute_generator(race_shares=HOUSE_RACE_SHARES, gender_shares=HOUSE_GENDER_SHARES
                              ) -> AttributeGenerator:
    """Legislator-like covariates covering every attribute the House model uses."""
    race_gen = group_attribute_generator("race", ("White", "Black", "Latino"), race_shares)
    gender_gen = group_attribute_generator("gender", ("Men", "Women"), gender_shares)

    def gen(n, rng):
        specs, values = [], {}
        for g in (race_gen, gender_gen):
            s, v = g(n, rng)
            specs += list(s)
            values.update(v)
        race = np.array(values["race"])
        party = rng.choice(["D", "R"], size=n)
        nominate = np.where(party == "D", rng.normal(-0.4, 0.15, n), rng.normal(0.45, 0.15, n))
        pct_black = np.clip(rng.gamma(1.2, 8.0, n) + 40 * (race == "Black"), 0, 95)
        pct_hisp = np.clip(rng.gamma(1.1, 8.0, n) + 40 * (race == "Latino"), 0, 95)
        bills = rng.poisson(15, n).astype(float)
        numeric = {
            "vote_share": np.clip(rng.normal(66, 10, n), 50, 100),
            "seniority": rng.integers(1, 15, n).astype(float),
            "nominate1": nominate,
            "extremity": np.abs(nominate - np.median(nominate)),
            "pct_black": pct_black / 100.0,
            "pct_hispanic": pct_hisp / 100.0,
            "bills": bills,
            "race_bills": rng.binomial(bills.astype(int), 0.05).astype(float),
        }
        for name, v in numeric.items():
            specs.append(AttributeSpec(name, NUMERIC))
            values[name] = list(v)
        maj = "D" if (party == "D").sum() >= (party == "R").sum() else "R"
        specs.append(AttributeSpec("majority", BINARY))
        values["majority"] = list((party == maj).astype(float))
        specs.append(AttributeSpec("party", CATEGORICAL, ("D", "R")))
        values["party"] = list(party)
        return tuple(specs), values

    return gen


def committee_generator(n_committees: int = 20, per_member: int = 2) -> DyadGenerator:
    """``same_committee`` dyad covariate from random committee assignments."""
    def gen(n, rng):
        member = np.zeros((n, n_committees), dtype=bool)
        for i in range(n):
            member[i, rng.choice(n_committees, size=per_member, replace=False)] = True
        same = (member.astype(int) @ member.T.astype(int) > 0).astype(float)
        np.fill_diagonal(same, 0.0)
        return {"same_committee": same}

    return gen


def combine_generators(*gens: AttributeGenerator) -> AttributeGenerator:
    def gen(n, rng):
        specs, values = [], {}
        for g in gens:
            s, v = g(n, rng)
            specs += list(s)
            values.update(v)
        return tuple(specs), values

    return gen


def make_attribute_generator(d: Mapping | None) -> AttributeGenerator | None:
    """Generator from a config entry.

    ``{generator: groups, groups: [{name, levels, shares}, ...]}`` or
    ``{generator: house, race_shares: [...], gender_shares: [...]}``.
    """
    if not d:
        return None
    kind = str(d.get("generator", "groups")).lower()
    if kind == "house":
        return house_attribute_generator(tuple(d.get("race_shares", HOUSE_RACE_SHARES)),
                                         tuple(d.get("gender_shares", HOUSE_GENDER_SHARES)))
    if kind == "groups":
        groups = d.get("groups") or []
        if not groups:
            raise ValueError("groups generator needs at least one group entry")
        return combine_generators(*(group_attribute_generator(
            str(g["name"]), [str(x) for x in g["levels"]],
            g.get("shares") or [1] * len(g["levels"])) for g in groups))
    raise ValueError(f"unknown attribute generator {kind!r} (known: groups, house)")


def make_dyad_generator(d: Mapping | None) -> DyadGenerator | None:
    """``{generator: committees, n_committees, per_member}``."""
    if not d:
        return None
    kind = str(d.get("generator", "committees")).lower()
    if kind != "committees":
        raise ValueError(f"unknown dyad generator {kind!r} (known: committees)")
    return committee_generator(int(d.get("n_committees", 20)), int(d.get("per_member", 2)))
