"""Model terms: global network statistics and their per-dyad change matrices.

Every term maps a binary adjacency matrix ``Y`` (plus the period's
covariates) to a real number, and to an n x n matrix ``D`` whose entry
``D[i, j]`` is the statistic with tie i->j present minus the statistic with
it absent, all other ties held at their observed values.  Terms that do not
depend on other ties ("dyad independent") are described by a contribution
matrix ``C``; their statistic is ``sum(Y * C)`` and their change matrix is
``C`` itself.

Missing covariate values propagate as NaN through contributions; the design
builder drops those dyads.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np

from .netcore import AttributeSpec, PeriodCovariates

SHARED_PARTNER_RULES = ("OTP", "ITP", "OSP", "ISP")


class ModelError(ValueError):
    """A term cannot be evaluated with the covariates at hand.

    ``code`` classifies the problem for validation reports.
    """

    def __init__(self, message: str, code: str = "invalid-term"):
        super().__init__(message)
        self.code = code


def _offdiag(m: np.ndarray) -> np.ndarray:
    m = np.array(m, dtype=float)
    np.fill_diagonal(m, 0.0)
    return m


@dataclass(frozen=True)
class Term:
    """Base class.  Subclasses override ``global_value`` and ``change``."""

    dyad_independent = False

    @property
    def name(self) -> str:
        return getattr(self, "label", None) or self.default_name()

    def default_name(self) -> str:
        return type(self).__name__.lower()

    # what the term reads
    def attributes_used(self) -> set[str]:
        return set()

    def dyad_covariates_used(self) -> set[str]:
        return set()

    def lags_used(self) -> int:
        return 0

    def validate(self, specs: Mapping[str, AttributeSpec], dyad_names=None, memory_order=None):
        for a in self.attributes_used():
            if a not in specs:
                raise ModelError(f"term {self.name!r}: unknown attribute {a!r}", "undeclared-attribute")
        if dyad_names is not None:
            for d in self.dyad_covariates_used():
                if d not in dyad_names:
                    raise ModelError(f"term {self.name!r}: unknown dyad covariate {d!r}", "undeclared-covariate")
        if memory_order is not None and self.lags_used() > memory_order:
            raise ModelError(f"term {self.name!r}: needs lag {self.lags_used()} but memory "
                             f"order is {memory_order}", "lag-exceeds-memory")

    def global_value(self, Y: np.ndarray, cov: PeriodCovariates) -> float:
        raise NotImplementedError

    def change(self, Y: np.ndarray, cov: PeriodCovariates) -> np.ndarray:
        """Change matrix by toggling each dyad and re-evaluating (slow fallback)."""
        return toggle_change(self, Y, cov)


def toggle_change(term: Term, Y: np.ndarray, cov: PeriodCovariates) -> np.ndarray:
    """Brute-force change matrix: two full evaluations per dyad."""
    Y = np.array(Y, dtype=np.int8)
    n = Y.shape[0]
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            old = Y[i, j]
            Y[i, j] = 1
            on = term.global_value(Y, cov)
            Y[i, j] = 0
            off = term.global_value(Y, cov)
            Y[i, j] = old
            out[i, j] = on - off
    return out


class DyadIndependentTerm(Term):
    dyad_independent = True

    def contribution(self, cov: PeriodCovariates, n: int) -> np.ndarray:
        raise NotImplementedError

    def global_value(self, Y, cov):
        C = self.contribution(cov, Y.shape[0])
        mask = Y.astype(bool)
        vals = C[mask]
        if np.any(np.isnan(vals)):
            raise ModelError(f"term {self.name!r}: missing covariate values on observed ties")
        return float(vals.sum())

    def change(self, Y, cov):
        return self.contribution(cov, Y.shape[0])


# ---------------------------------------------------------------------------
# structural terms


@dataclass(frozen=True)
class Edges(DyadIndependentTerm):
    label: str | None = field(default=None, kw_only=True)

    def default_name(self):
        return "edges"

    def contribution(self, cov, n):
        return _offdiag(np.ones((n, n)))

    def global_value(self, Y, cov):
        return float(Y.sum(dtype=np.int64))


@dataclass(frozen=True)
class Reciprocity(Term):
    label: str | None = field(default=None, kw_only=True)

    def default_name(self):
        return "mutual"

    def global_value(self, Y, cov):
        Y = Y.astype(np.int64)
        return float((Y * Y.T).sum() // 2)

    def change(self, Y, cov):
        return _offdiag(Y.T)


def _check_decay(term, value):
    if not value >= 0:
        raise ModelError(f"term {term.name!r}: decay must be >= 0, got {value}")


@dataclass(frozen=True)
class GWInDegree(Term):
    """Sum over nodes of exp(-decay * in-degree)."""

    decay: float = 0.5
    label: str | None = field(default=None, kw_only=True)

    def __post_init__(self):
        _check_decay(self, self.decay)

    def default_name(self):
        return f"gwidegree.{self.decay:g}"

    incoming = True

    def _degrees(self, Y):
        return Y.sum(axis=0 if self.incoming else 1, dtype=np.int64)

    def global_value(self, Y, cov):
        return float(np.exp(-self.decay * self._degrees(Y)).sum())

    def change(self, Y, cov):
        d = self._degrees(Y)
        # degree of the affected endpoint with tie i->j removed
        base = (d[None, :] if self.incoming else d[:, None]) - Y
        return _offdiag(np.exp(-self.decay * (base + 1)) - np.exp(-self.decay * base))


@dataclass(frozen=True)
class GWOutDegree(GWInDegree):
    """Sum over nodes of exp(-decay * out-degree)."""

    incoming = False

    def default_name(self):
        return f"gwodegree.{self.decay:g}"


def shared_partners(Y: np.ndarray, rule: str = "OTP") -> np.ndarray:
    """Matrix of shared-partner counts for each ordered pair under ``rule``.

    OTP: i->k->j, ITP: j->k->i, OSP: i->k and j->k, ISP: k->i and k->j.
    """
    Y = Y.astype(np.int64)
    if rule == "OTP":
        return Y @ Y
    if rule == "ITP":
        return (Y @ Y).T
    if rule == "OSP":
        return Y @ Y.T
    if rule == "ISP":
        return Y.T @ Y
    raise ModelError(f"unknown shared-partner rule {rule!r}")


@dataclass(frozen=True)
class GWESP(Term):
    """Geometrically weighted edgewise shared partners.

    Value is ``exp(decay) * sum_s (1 - (1 - exp(-decay))**s) * EP_s`` where
    ``EP_s`` counts ties whose endpoints have exactly ``s`` shared partners.
    """

    decay: float = 0.5
    rule: str = "OTP"
    label: str | None = field(default=None, kw_only=True)

    def __post_init__(self):
        _check_decay(self, self.decay)
        if self.rule not in SHARED_PARTNER_RULES:
            raise ModelError(f"term {self.name!r}: rule must be one of {SHARED_PARTNER_RULES}")

    def default_name(self):
        return f"gwesp.{self.rule}.{self.decay:g}"

    def weights(self, n: int) -> np.ndarray:
        """Weight of a tie with s shared partners, for s = 0..n."""
        s = np.arange(n + 1)
        r = 1.0 - np.exp(-self.decay)
        return np.exp(self.decay) * (1.0 - r ** s)

    def global_value(self, Y, cov):
        sp = shared_partners(Y, self.rule)
        w = self.weights(Y.shape[0])
        return float(w[sp[Y.astype(bool)]].sum())

    def change(self, Y, cov):
        n = Y.shape[0]
        Yf = Y.astype(float)
        sp = shared_partners(Y, self.rule)
        w = self.weights(n + 1)
        inc = w[1:] - w[:-1]  # inc[s] = w(s+1) - w(s)
        own = w[sp]
        legs = []
        for v in (0, 1):
            s = sp - v
            YD = np.where((Y == 1) & (s >= 0), inc[np.clip(s, 0, None)], 0.0)
            if self.rule == "OTP":
                legs.append(YD @ Yf.T + Yf.T @ YD)
            elif self.rule == "ITP":
                legs.append((Yf @ YD).T + (YD @ Yf).T)
            elif self.rule == "OSP":
                legs.append(YD @ Yf + YD.T @ Yf)
            else:
                legs.append(Yf @ YD.T + Yf @ YD)
        return _offdiag(own + np.where(Y == 1, legs[1], legs[0]))


@dataclass(frozen=True)
class LaggedEdge(DyadIndependentTerm):
    """Tie i->j observed ``lag`` periods earlier."""

    lag: int = 1
    label: str | None = field(default=None, kw_only=True)

    def default_name(self):
        return f"memory.{self.lag}"

    def lags_used(self):
        return self.lag

    def _lagged(self, cov):
        if len(cov.lags) < self.lag:
            raise ModelError(f"term {self.name!r}: period {cov.period_label} has no lag-{self.lag} network")
        return cov.lags[self.lag - 1]

    def contribution(self, cov, n):
        return _offdiag(self._lagged(cov))


@dataclass(frozen=True)
class DelayedReciprocity(LaggedEdge):
    """Tie j->i observed ``lag`` periods earlier."""

    def default_name(self):
        return f"delrecip.{self.lag}"

    def contribution(self, cov, n):
        return _offdiag(self._lagged(cov).T)


# ---------------------------------------------------------------------------
# covariate terms


def _spec(term, cov: PeriodCovariates, attr: str) -> AttributeSpec:
    if attr not in cov.attributes or attr not in cov.specs:
        raise ModelError(f"term {term.name!r}: unknown attribute {attr!r}", "undeclared-attribute")
    return cov.specs[attr]


def _node_values(term, cov, attr, level=None) -> np.ndarray:
    """Per-node numeric values; an indicator when ``level`` is given."""
    spec = _spec(term, cov, attr)
    x = cov.attributes[attr]
    if spec.is_categorical:
        if level is None:
            raise ModelError(f"term {term.name!r}: categorical attribute {attr!r} needs a level")
        if level not in spec.levels:
            raise ModelError(f"term {term.name!r}: level {level!r} not in {list(spec.levels)}", "undeclared-level")
        code = spec.levels.index(level)
        return np.where(x < 0, np.nan, (x == code).astype(float))
    if level is not None:
        return np.where(np.isnan(x), np.nan, (x == float(level)).astype(float))
    return x.astype(float)


@dataclass(frozen=True)
class SenderAttr(DyadIndependentTerm):
    """Sender's attribute value (out-degree covariate)."""

    attr: str = ""
    level: str | None = None
    label: str | None = field(default=None, kw_only=True)

    def default_name(self):
        return f"nodeocov.{self.attr}" + (f".{self.level}" if self.level is not None else "")

    def attributes_used(self):
        return {self.attr}

    def validate(self, specs, dyad_names=None, memory_order=None):
        super().validate(specs, dyad_names, memory_order)
        spec = specs[self.attr]
        if spec.is_categorical and self.level not in spec.levels:
            raise ModelError(f"term {self.name!r}: level {self.level!r} not in {list(spec.levels)}", "undeclared-level")

    def contribution(self, cov, n):
        x = _node_values(self, cov, self.attr, self.level)
        return _offdiag(np.repeat(x[:, None], n, axis=1))


@dataclass(frozen=True)
class ReceiverAttr(SenderAttr):
    """Receiver's attribute value (in-degree covariate)."""

    def default_name(self):
        return f"nodeicov.{self.attr}" + (f".{self.level}" if self.level is not None else "")

    def contribution(self, cov, n):
        x = _node_values(self, cov, self.attr, self.level)
        return _offdiag(np.repeat(x[None, :], n, axis=0))


@dataclass(frozen=True)
class Match(DyadIndependentTerm):
    attr: str = ""
    label: str | None = field(default=None, kw_only=True)

    def default_name(self):
        return f"nodematch.{self.attr}"

    def attributes_used(self):
        return {self.attr}

    def contribution(self, cov, n):
        spec = _spec(self, cov, self.attr)
        x = cov.attributes[self.attr]
        if spec.is_categorical:
            miss = x < 0
            same = (x[:, None] == x[None, :]).astype(float)
        else:
            miss = np.isnan(x)
            same = (x[:, None] == x[None, :]).astype(float)
        same[miss, :] = np.nan
        same[:, miss] = np.nan
        return _offdiag(same)


@dataclass(frozen=True)
class AbsDiff(DyadIndependentTerm):
    attr: str = ""
    label: str | None = field(default=None, kw_only=True)

    def default_name(self):
        return f"absdiff.{self.attr}"

    def attributes_used(self):
        return {self.attr}

    def validate(self, specs, dyad_names=None, memory_order=None):
        super().validate(specs, dyad_names, memory_order)
        if specs[self.attr].is_categorical:
            raise ModelError(f"term {self.name!r}: absdiff needs a numeric attribute")

    def contribution(self, cov, n):
        x = _node_values(self, cov, self.attr)
        return _offdiag(np.abs(x[:, None] - x[None, :]))


@dataclass(frozen=True)
class NodeMix(DyadIndependentTerm):
    """Indicator that the sender has ``sender_level`` and the receiver ``receiver_level``."""

    attr: str = ""
    sender_level: str = ""
    receiver_level: str = ""
    label: str | None = field(default=None, kw_only=True)

    def default_name(self):
        return f"mix.{self.attr}.{self.sender_level}->{self.receiver_level}"

    def attributes_used(self):
        return {self.attr}

    def validate(self, specs, dyad_names=None, memory_order=None):
        super().validate(specs, dyad_names, memory_order)
        spec = specs[self.attr]
        if not spec.is_categorical:
            raise ModelError(f"term {self.name!r}: attribute {self.attr!r} is not categorical")
        for lvl in (self.sender_level, self.receiver_level):
            if lvl not in spec.levels:
                raise ModelError(f"term {self.name!r}: level {lvl!r} not in {list(spec.levels)}", "undeclared-level")

    def contribution(self, cov, n):
        s = _node_values(self, cov, self.attr, self.sender_level)
        r = _node_values(self, cov, self.attr, self.receiver_level)
        return _offdiag(s[:, None] * r[None, :])


@dataclass(frozen=True)
class DyadCov(DyadIndependentTerm):
    """Entry (i, j) of a named dyadic covariate matrix."""

    cov_name: str = ""
    label: str | None = field(default=None, kw_only=True)

    def default_name(self):
        return f"edgecov.{self.cov_name}"

    def dyad_covariates_used(self):
        return {self.cov_name}

    def contribution(self, cov, n):
        if self.cov_name not in cov.dyad:
            raise ModelError(f"term {self.name!r}: period {cov.period_label} has no dyad "
                             f"covariate {self.cov_name!r}")
        return _offdiag(cov.dyad[self.cov_name])


@dataclass(frozen=True)
class PeriodCov(DyadIndependentTerm):
    """A per-period scalar added to every dyad: ``f(t) ** power``.

    ``source`` is ``"index"`` (1-based position in the panel), ``"label"``
    (the numeric period label) or an explicit ``{label: value}`` mapping.
    """

    source: Any = "index"
    power: int = 1
    label: str | None = field(default=None, kw_only=True)

    def __post_init__(self):
        if isinstance(self.source, Mapping):
            object.__setattr__(self, "source", tuple(sorted((str(k), float(v)) for k, v in self.source.items())))
        elif self.source not in ("index", "label") and not isinstance(self.source, tuple):
            raise ModelError(f"period term: source must be 'index', 'label' or a mapping, got {self.source!r}")

    def default_name(self):
        src = self.source if isinstance(self.source, str) else "values"
        return f"period.{src}" + (f"^{self.power}" if self.power != 1 else "")

    def value(self, cov: PeriodCovariates) -> float:
        if self.source == "index":
            base = float(cov.period_index)
        elif self.source == "label":
            try:
                base = float(cov.period_label)
            except ValueError:
                raise ModelError(f"term {self.name!r}: period label {cov.period_label!r} is not numeric")
        else:
            table = dict(self.source)
            if cov.period_label not in table:
                raise ModelError(f"term {self.name!r}: no value for period {cov.period_label!r}")
            base = table[cov.period_label]
        return base ** self.power

    def contribution(self, cov, n):
        return _offdiag(np.full((n, n), self.value(cov)))


@dataclass(frozen=True)
class Interaction(DyadIndependentTerm):
    """Product of the per-dyad contributions of dyad-independent operands."""

    operands: tuple = ()
    label: str | None = field(default=None, kw_only=True)

    def __post_init__(self):
        object.__setattr__(self, "operands", tuple(self.operands))
        if len(self.operands) < 2:
            raise ModelError("interaction needs at least two operands")
        for op in self.operands:
            if not getattr(op, "dyad_independent", False):
                raise ModelError(f"interaction operand {op.name!r} depends on other ties; "
                                 "only covariate-type operands can be multiplied")

    def default_name(self):
        return "*".join(op.name for op in self.operands)

    def attributes_used(self):
        return set().union(*(op.attributes_used() for op in self.operands))

    def dyad_covariates_used(self):
        return set().union(*(op.dyad_covariates_used() for op in self.operands))

    def lags_used(self):
        return max(op.lags_used() for op in self.operands)

    def validate(self, specs, dyad_names=None, memory_order=None):
        for op in self.operands:
            try:
                op.validate(specs, dyad_names, memory_order)
            except ModelError as e:
                raise ModelError(f"term {self.name!r}: {e}", e.code) from None

    def contribution(self, cov, n):
        out = np.ones((n, n))
        for op in self.operands:
            out = out * op.contribution(cov, n)
        return _offdiag(out)


# ---------------------------------------------------------------------------
# model specification


@dataclass(frozen=True)
class ModelSpec:
    terms: tuple[Term, ...]
    reference_exclusions: tuple[tuple[str, str, str], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        if not self.terms:
            raise ModelError("model has no terms", "empty-model")
        names = [t.name for t in self.terms]
        dup = sorted({x for x in names if names.count(x) > 1})
        if dup:
            raise ModelError(f"duplicate term names: {dup}")
        for attr, s, r in self.reference_exclusions:
            if any(isinstance(t, NodeMix) and (t.attr, t.sender_level, t.receiver_level) == (attr, s, r)
                   for t in self.terms):
                raise ModelError(f"reference category {attr}:{s}->{r} is also a model term")

    @property
    def names(self) -> list[str]:
        return [t.name for t in self.terms]

    def __len__(self):
        return len(self.terms)

    def validate(self, specs, dyad_names=None, memory_order=None):
        for t in self.terms:
            t.validate(specs, dyad_names, memory_order)

    @property
    def dyad_independent(self) -> bool:
        return all(t.dyad_independent for t in self.terms)


def mixing_terms_from_attribute(spec: AttributeSpec, reference: tuple[str, str],
                                name_format: str = "{sender} -> {receiver}") -> list[NodeMix]:
    """One NodeMix term per (sender, receiver) level pair, minus the reference.

    Order is receiver-major, then sender, both in declared level order.
    """
    if not spec.is_categorical:
        raise ModelError(f"attribute {spec.name!r} is not categorical")
    ref = tuple(str(x) for x in reference)
    if len(ref) != 2 or ref[0] not in spec.levels or ref[1] not in spec.levels:
        raise ModelError(f"reference pair {reference!r} not in levels of {spec.name!r}: {list(spec.levels)}",
                         "undeclared-level")
    out = []
    for r in spec.levels:
        for s in spec.levels:
            if (s, r) == ref:
                continue
            out.append(NodeMix(spec.name, s, r, label=name_format.format(sender=s, receiver=r, attr=spec.name)))
    return out


# ---------------------------------------------------------------------------
# declarative schema


TERM_KINDS = {
    "edges": Edges, "reciprocity": Reciprocity, "mutual": Reciprocity,
    "gwidegree": GWInDegree, "gwodegree": GWOutDegree, "gwesp": GWESP,
    "sender": SenderAttr, "receiver": ReceiverAttr, "match": Match, "absdiff": AbsDiff,
    "nodemix": NodeMix, "dyadcov": DyadCov, "period": PeriodCov, "interaction": Interaction,
    "memory": LaggedEdge, "delrecip": DelayedReciprocity,
}


def term_from_dict(d: Mapping[str, Any]) -> Term:
    """Build a term from one entry of a model specification.

    Keys: ``kind`` plus ``name`` (optional label) and kind-specific
    parameters: ``decay``, ``rule``, ``attr``, ``level``, ``sender``/
    ``receiver`` (NodeMix levels), ``cov`` (dyad covariate), ``source``/
    ``power`` (period terms), ``terms`` (interaction operands), ``lag``.
    """
    d = dict(d)
    kind = str(d.pop("kind", "")).lower()
    label = d.pop("name", None)
    if kind not in TERM_KINDS:
        raise ModelError(f"unknown term kind {kind!r} (known: {sorted(TERM_KINDS)})")
    cls = TERM_KINDS[kind]
    kw: dict[str, Any] = {"label": label}
    try:
        if cls in (GWInDegree, GWOutDegree):
            kw["decay"] = float(d.pop("decay", 0.5))
        elif cls is GWESP:
            kw["decay"] = float(d.pop("decay", 0.5))
            kw["rule"] = str(d.pop("rule", "OTP")).upper()
        elif cls in (SenderAttr, ReceiverAttr):
            kw["attr"] = str(d.pop("attr"))
            lvl = d.pop("level", None)
            kw["level"] = None if lvl is None else str(lvl)
        elif cls in (Match, AbsDiff):
            kw["attr"] = str(d.pop("attr"))
        elif cls is NodeMix:
            kw.update(attr=str(d.pop("attr")), sender_level=str(d.pop("sender")),
                      receiver_level=str(d.pop("receiver")))
        elif cls is DyadCov:
            kw["cov_name"] = str(d.pop("cov"))
        elif cls is PeriodCov:
            kw["source"] = d.pop("source", "index")
            kw["power"] = int(d.pop("power", 1))
        elif cls is Interaction:
            kw["operands"] = tuple(term_from_dict(x) for x in d.pop("terms"))
        elif cls in (LaggedEdge, DelayedReciprocity):
            kw["lag"] = int(d.pop("lag", 1))
    except KeyError as e:
        raise ModelError(f"term {label or kind!r}: missing key {e.args[0]!r}") from None
    if d:
        raise ModelError(f"term {label or kind!r}: unexpected keys {sorted(d)}")
    return cls(**kw)


def model_from_dicts(entries: Sequence[Mapping[str, Any]],
                     specs: Mapping[str, AttributeSpec] | None = None) -> ModelSpec:
    """Parse a term list; ``kind: mixing`` expands to all NodeMix terms but the reference."""
    terms: list[Term] = []
    refs = []
    for e in entries:
        if str(e.get("kind", "")).lower() == "mixing":
            attr = e.get("attr")
            if specs is None or attr not in specs:
                raise ModelError(f"mixing entry: unknown attribute {attr!r}", "undeclared-attribute")
            ref = tuple(e.get("reference", ()))
            terms.extend(mixing_terms_from_attribute(specs[attr], ref,
                                                     e.get("name_format", "{sender} -> {receiver}")))
            refs.append((attr, str(ref[0]), str(ref[1])))
        else:
            terms.append(term_from_dict(e))
    return ModelSpec(tuple(terms), tuple(refs))
