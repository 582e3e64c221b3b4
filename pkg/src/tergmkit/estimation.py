"""Pooled maximum pseudolikelihood and period-bootstrap confidence intervals."""
from __future__ import annotations

import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy.optimize import linprog
from scipy.special import expit

from .netcore import PanelNetwork
from .statistics import ChangeStatMatrix, change_statistics
from .terms import ModelError, ModelSpec

logger = logging.getLogger(__name__)

RIDGE_FALLBACK = 1e-4
ETA_SUSPICIOUS = 25.0
FAILURE_WARNING_SHARE = 0.10


class EstimationError(ValueError):
    pass


class SingularDesignError(EstimationError):
    def __init__(self, columns: Sequence[str]):
        self.columns = list(columns)
        super().__init__(f"singular Hessian: collinear columns {self.columns}")


@dataclass(frozen=True, eq=False)
class DesignMatrix:
    """Change statistics of every modeled period stacked row-wise."""

    X: np.ndarray
    y: np.ndarray
    period: np.ndarray  # block index of each row
    term_names: tuple[str, ...]
    period_labels: tuple[str, ...]
    dropped: int = 0

    @classmethod
    def from_blocks(cls, blocks: Sequence[ChangeStatMatrix], term_names) -> "DesignMatrix":
        p = len(term_names)
        X = np.vstack([b.X for b in blocks]) if blocks else np.empty((0, p))
        y = np.concatenate([b.y for b in blocks]) if blocks else np.empty(0)
        period = np.concatenate([np.full(b.n_rows, k) for k, b in enumerate(blocks)]) if blocks \
            else np.empty(0, dtype=int)
        return cls(X, y, period, tuple(term_names), tuple(b.period_label for b in blocks),
                   sum(b.dropped for b in blocks))

    @property
    def n_rows(self) -> int:
        return self.X.shape[0]

    @property
    def n_periods(self) -> int:
        return len(self.period_labels)


def period_blocks(panel: PanelNetwork, model: ModelSpec, workers: int = 1) -> list[ChangeStatMatrix]:
    """Change statistics for each modeled period, in panel order."""
    def one(t):
        cov = panel.covariates(t)
        try:
            return change_statistics(model, panel.periods[t].graph, cov)
        except ModelError as e:
            raise ModelError(f"period {panel.periods[t].label}: {e}", e.code) from None

    idx = list(panel.modeled_indices)
    if workers > 1 and len(idx) > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(one, idx))
    return [one(t) for t in idx]


def build_design(panel: PanelNetwork, model: ModelSpec, workers: int = 1) -> DesignMatrix:
    blocks = period_blocks(panel, model, workers)
    design = DesignMatrix.from_blocks(blocks, model.names)
    if design.dropped:
        logger.info("dropped %d dyads with missing covariate values", design.dropped)
    return design


# ---------------------------------------------------------------------------
# pseudolikelihood


def log_pseudolikelihood(theta, X, y, weights=None) -> float:
    eta = X @ np.asarray(theta, dtype=float)
    terms = y * eta - np.logaddexp(0.0, eta)
    return float(terms.sum() if weights is None else weights @ terms)


def pseudolikelihood_gradient(theta, X, y, weights=None) -> np.ndarray:
    r = y - expit(X @ np.asarray(theta, dtype=float))
    if weights is not None:
        r = weights * r
    return X.T @ r


def pseudolikelihood_hessian(theta, X, weights=None) -> np.ndarray:
    """Negative Hessian (the information matrix) of the log-pseudolikelihood."""
    p = expit(X @ np.asarray(theta, dtype=float))
    v = p * (1.0 - p)
    if weights is not None:
        v = weights * v
    return X.T @ (X * v[:, None])


def collinear_columns(X: np.ndarray, names: Sequence[str], rtol: float = 1e-10) -> list[str]:
    """Names of columns involved in an exact linear dependence (empty if full rank)."""
    norms = np.sqrt((X ** 2).sum(axis=0))
    bad = [names[k] for k in np.flatnonzero(norms == 0)]
    if bad:
        return bad
    Xs = X / norms
    evals, evecs = np.linalg.eigh(Xs.T @ Xs)
    null = evals < rtol * max(evals.max(), 1.0)
    if not null.any():
        return []
    support = (np.abs(evecs[:, null]) > 1e-6).any(axis=1)
    return [names[k] for k in np.flatnonzero(support)]


def detect_separation(X: np.ndarray, y: np.ndarray, weights=None, tol: float = 1e-7) -> bool:
    """True when some direction b has sign(x.b) agreeing with every response.

    Solves ``max sum_r s_r x_r.b`` subject to ``s_r x_r.b >= 0`` and
    ``|b| <= 1`` with ``s = 2y - 1``; a positive optimum means the
    likelihood can be increased without bound along b.
    """
    if weights is not None:
        keep = weights > 0
        X, y = X[keep], y[keep]
    if len(y) == 0:
        return False
    if np.all(y == y[0]):
        return True
    scale = np.abs(X).max(axis=0)
    scale[scale == 0] = 1.0
    Z = np.unique(np.column_stack([X / scale, y]), axis=0)
    A = (2.0 * Z[:, -1] - 1.0)[:, None] * Z[:, :-1]
    res = linprog(-A.sum(axis=0), A_ub=-A, b_ub=np.zeros(len(A)),
                  bounds=[(-1.0, 1.0)] * A.shape[1], method="highs")
    return bool(res.status == 0 and -res.fun > tol)


@dataclass(frozen=True, eq=False)
class MPLEFit:
    theta: np.ndarray
    iterations: int
    converged: bool
    gradient_norm: float
    log_pseudolikelihood: float
    separated: bool = False
    ridge: float = 0.0


def _newton(X, y, w, ridge, tolerance, max_iterations, theta0=None):
    p = X.shape[1]
    theta = np.zeros(p) if theta0 is None else np.array(theta0, dtype=float)

    def objective(th):
        return log_pseudolikelihood(th, X, y, w) - 0.5 * ridge * (th @ th)

    ll = objective(theta)
    it = 0
    gnorm = np.inf
    while True:
        g = pseudolikelihood_gradient(theta, X, y, w) - ridge * theta
        gnorm = float(np.abs(g).max())
        if gnorm < tolerance or it >= max_iterations:
            break
        H = pseudolikelihood_hessian(theta, X, w) + ridge * np.eye(p)
        try:
            step = np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            break
        # near the optimum the objective is flat to rounding; a step that
        # keeps it within that noise and shrinks the gradient is accepted
        slack = 64 * np.finfo(float).eps * max(1.0, abs(ll))
        t = 1.0
        for _ in range(60):
            cand = theta + t * step
            ll_new = objective(cand)
            if ll_new >= ll:
                break
            if ll_new >= ll - slack:
                g_new = pseudolikelihood_gradient(cand, X, y, w) - ridge * cand
                if np.abs(g_new).max() < gnorm:
                    break
            t *= 0.5
        else:
            break  # no ascent at machine precision
        it += 1
        if np.array_equal(cand, theta):
            break
        theta, ll = cand, ll_new
    return theta, it, gnorm < tolerance, gnorm, ll


def fit_mple(design: DesignMatrix | tuple, tolerance: float = 1e-8, max_iterations: int = 100,
             weights=None, ridge: float = 0.0, check_rank: bool = True, theta0=None) -> MPLEFit:
    """Maximise the log-pseudolikelihood by Newton-Raphson with step halving.

    ``design`` is a DesignMatrix or an ``(X, y[, names])`` tuple.  Rows with
    zero weight are ignored.  Newton starts from ``theta0`` (default zero).
    When the data are separated (the maximiser diverges) the returned fit is
    flagged ``separated`` and carries a ridge estimate of strength
    ``RIDGE_FALLBACK`` instead.
    """
    if isinstance(design, DesignMatrix):
        X, y, names = design.X, design.y, design.term_names
    else:
        X, y = design[0], design[1]
        names = design[2] if len(design) > 2 else tuple(f"x{k}" for k in range(X.shape[1]))
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    w = None if weights is None else np.asarray(weights, dtype=float)
    if w is not None:
        keep = w > 0
        X, y, w = X[keep], y[keep], w[keep]
        if np.all(w == 1):
            w = None
    if X.shape[0] == 0:
        raise EstimationError("empty design")
    if check_rank:
        bad = collinear_columns(X, list(names))
        if bad:
            raise SingularDesignError(bad)

    theta, it, conv, gnorm, ll = _newton(X, y, w, ridge, tolerance, max_iterations, theta0)
    suspicious = (not conv) or np.all(y == y[0]) or \
        float(np.abs(X @ theta).max()) > ETA_SUSPICIOUS
    if ridge == 0.0 and suspicious and detect_separation(X, y, w):
        logger.warning("separation detected; refitting with ridge %g", RIDGE_FALLBACK)
        theta, it2, conv, gnorm, ll = _newton(X, y, w, RIDGE_FALLBACK, tolerance, max_iterations)
        return MPLEFit(theta, it + it2, conv, gnorm, ll, separated=True, ridge=RIDGE_FALLBACK)
    return MPLEFit(theta, it, conv, gnorm, ll, separated=False, ridge=ridge)


# ---------------------------------------------------------------------------
# bootstrap


def percentile_interval(replicates: np.ndarray, level: float = 0.95) -> tuple[np.ndarray, np.ndarray]:
    """Order-statistic percentile bounds of each column.

    With B rows, the lower bound is the ``floor(B*a)``-th smallest value and
    the upper bound the ``ceil(B*(1-a))``-th smallest, ``a = (1-level)/2``,
    so exactly ``floor(B*a)`` replicates fall strictly below the lower bound
    when values are distinct.
    """
    R = np.sort(np.asarray(replicates, dtype=float), axis=0)
    B = R.shape[0]
    if B == 0:
        nan = np.full(R.shape[1], np.nan)
        return nan, nan.copy()
    a = (1 - Fraction(str(level))) / 2
    lo = min(math.floor(B * a), B - 1)
    hi = max(math.ceil(B * (1 - a)) - 1, 0)
    return R[lo].copy(), R[hi].copy()


@dataclass(frozen=True, eq=False)
class FitResult:
    term_names: tuple[str, ...]
    theta: np.ndarray
    replicates: np.ndarray  # B x terms, NaN rows for failed replicates
    failed: np.ndarray
    ci_lower: np.ndarray
    ci_upper: np.ndarray
    seed: int | None
    iterations: int
    converged: bool
    gradient_norm: float
    log_pseudolikelihood: float
    separated: bool = False
    ridge: float = 0.0
    level: float = 0.95
    n_rows: int = 0
    dropped: int = 0
    period_labels: tuple[str, ...] = ()
    replicate_separated: int = 0
    warnings: tuple[str, ...] = field(default=())

    @property
    def B(self) -> int:
        return self.replicates.shape[0]

    @property
    def failure_count(self) -> int:
        return int(self.failed.sum())

    @property
    def failure_warning(self) -> bool:
        return self.B > 0 and self.failure_count > FAILURE_WARNING_SHARE * self.B

    def coefficient(self, name: str) -> float:
        return float(self.theta[self.term_names.index(name)])

    def to_dict(self) -> dict:
        return {
            "terms": list(self.term_names),
            "estimate": [float(x) for x in self.theta],
            "ci_lower": [float(x) for x in self.ci_lower],
            "ci_upper": [float(x) for x in self.ci_upper],
            "level": self.level,
            "bootstrap_replicates": self.B,
            "failed_replicates": self.failure_count,
            "separated_replicates": self.replicate_separated,
            "failure_warning": self.failure_warning,
            "seed": self.seed,
            "iterations": self.iterations,
            "converged": self.converged,
            "gradient_norm": self.gradient_norm,
            "log_pseudolikelihood": self.log_pseudolikelihood,
            "separated": self.separated,
            "ridge": self.ridge,
            "rows": self.n_rows,
            "dropped_dyads": self.dropped,
            "periods": list(self.period_labels),
            "warnings": list(self.warnings),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FitResult":
        """Point estimates and intervals only; replicate draws are not stored."""
        p = len(d["terms"])
        return cls(tuple(d["terms"]), np.array(d["estimate"], dtype=float),
                   np.empty((0, p)), np.zeros(0, dtype=bool),
                   np.array(d["ci_lower"], dtype=float), np.array(d["ci_upper"], dtype=float),
                   d.get("seed"), d.get("iterations", 0), d.get("converged", True),
                   d.get("gradient_norm", 0.0), d.get("log_pseudolikelihood", float("nan")),
                   d.get("separated", False), d.get("ridge", 0.0), d.get("level", 0.95),
                   d.get("rows", 0), d.get("dropped_dyads", 0), tuple(d.get("periods", ())))


def bootstrap_fit(panel: PanelNetwork, model: ModelSpec, B: int = 1000, seed: int = 0,
                  workers: int = 1, tolerance: float = 1e-8, max_iterations: int = 100,
                  level: float = 0.95, blocks: Sequence[ChangeStatMatrix] | None = None) -> FitResult:
    """Point MPLE on the full panel plus B refits on resampled periods.

    Each replicate draws the modeled periods with replacement and refits on
    the stacked design of the draw; a period drawn c times enters with row
    weight c, which is the same objective as stacking it c times.  All draws
    come from one generator seeded with ``seed`` before any fitting, so the
    result does not depend on ``workers``.
    """
    if B < 1:
        raise ValueError("B must be >= 1")
    if blocks is None:
        blocks = period_blocks(panel, model, workers)
    design = DesignMatrix.from_blocks(blocks, model.names)
    point = fit_mple(design, tolerance, max_iterations)

    # replicates start from the point estimate unless that diverged
    start = None if point.separated or not point.converged else point.theta
    T = design.n_periods
    draws = np.random.default_rng(seed).integers(0, T, size=(B, T))
    p = len(model.names)

    def replicate(b):
        counts = np.bincount(draws[b], minlength=T).astype(float)
        try:
            f = fit_mple(design, tolerance, max_iterations, weights=counts[design.period], theta0=start)
        except (EstimationError, np.linalg.LinAlgError) as e:
            logger.debug("replicate %d failed: %s", b, e)
            return None
        return f

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            fits = list(ex.map(replicate, range(B)))
    else:
        fits = [replicate(b) for b in range(B)]

    reps = np.full((B, p), np.nan)
    failed = np.zeros(B, dtype=bool)
    n_sep = 0
    for b, f in enumerate(fits):
        if f is None:
            failed[b] = True
        else:
            reps[b] = f.theta
            n_sep += f.separated
    lo, hi = percentile_interval(reps[~failed], level)
    notes = []
    if point.separated:
        notes.append(f"point estimate separated; ridge {point.ridge:g} fallback")
    if not point.converged:
        notes.append(f"point estimate did not converge (gradient {point.gradient_norm:.3g})")
    if failed.sum() > FAILURE_WARNING_SHARE * B:
        msg = f"{int(failed.sum())} of {B} bootstrap replicates failed"
        notes.append(msg)
        warnings.warn(msg, stacklevel=2)
    return FitResult(tuple(model.names), point.theta, reps, failed, lo, hi, seed,
                     point.iterations, point.converged, point.gradient_norm,
                     point.log_pseudolikelihood, point.separated, point.ridge, level,
                     design.n_rows, design.dropped, design.period_labels, n_sep, tuple(notes))


def predict_tie_probability(fit: FitResult | np.ndarray, delta) -> float | np.ndarray:
    """Inverse logit of theta . delta (vectorised over leading axes of delta)."""
    theta = fit.theta if isinstance(fit, (FitResult, MPLEFit)) else np.asarray(fit, dtype=float)
    delta = np.asarray(delta, dtype=float)
    if delta.shape[-1] != theta.shape[0]:
        raise ValueError(f"delta has {delta.shape[-1]} entries, model has {theta.shape[0]} terms")
    return expit(delta @ theta)
