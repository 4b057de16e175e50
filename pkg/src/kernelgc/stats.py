"""Nested-model tests, multiple-comparison corrections and graph scoring."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import special

from .graph import BACKWARD, FORWARD, CausalGraph


class StatsError(ValueError):
    pass


@dataclass(frozen=True)
class TestOutcome:
    """Result of a single hypothesis test.

    ``reject`` is ``p_value < corrected_alpha``.  ``extra`` carries
    method-specific diagnostics (ranks, number of components, ...).
    """

    statistic: float
    df: tuple
    p_value: float
    reject: bool
    corrected_alpha: float
    extra: dict | None = None

    __test__ = False  # keep pytest from collecting this as a test class


def _outcome(stat, df, p, alpha, extra=None) -> TestOutcome:
    p = float(min(max(p, 0.0), 1.0))
    return TestOutcome(float(stat), tuple(df), p, bool(p < alpha), float(alpha), extra)


def f_sf(f: float, d1: float, d2: float) -> float:
    """Upper tail ``P(F > f)`` of the F(d1, d2) distribution."""
    if f <= 0:
        return 1.0
    if math.isinf(f):
        return 0.0
    return float(special.betainc(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * f)))


def t_sf_two_sided(t: float, df: float) -> float:
    """``P(|T| > |t|)`` for Student's t with ``df`` degrees of freedom."""
    if math.isinf(t):
        return 0.0
    return float(special.betainc(df / 2.0, 0.5, df / (df + t * t)))


def chi2_sf(x: float, df: float) -> float:
    if x <= 0:
        return 1.0
    return float(special.gammaincc(df / 2.0, x / 2.0))


def f_test(
    ssr_r: float, ssr_u: float, p_r: int, p_u: int, n: int, alpha: float = 0.05
) -> TestOutcome:
    """F-test of a restricted model with ``p_r`` parameters inside one with ``p_u``.

    The statistic is clamped to 0 when rounding makes ``ssr_r < ssr_u``.
    With ``ssr_u == 0`` the statistic is infinite (or 0 if ``ssr_r`` is also 0).
    """
    if p_u <= p_r:
        raise StatsError(f"models not nested: p_u={p_u} <= p_r={p_r}")
    if n <= p_u:
        raise StatsError(f"insufficient residual df: n={n} <= p_u={p_u}")
    if ssr_r < 0 or ssr_u < 0:
        raise StatsError("sums of squares must be non-negative")
    d1, d2 = p_u - p_r, n - p_u
    num = max(ssr_r - ssr_u, 0.0) / d1
    if ssr_u == 0:
        stat = math.inf if num > 0 else 0.0
    else:
        stat = num / (ssr_u / d2)
    return _outcome(stat, (d1, d2), f_sf(stat, d1, d2), alpha)


def correlation_t_test(r: float, n: int, alpha: float = 0.05) -> TestOutcome:
    """Two-sided test of zero Pearson correlation from ``n`` pairs."""
    if n < 3:
        raise StatsError("correlation test needs n >= 3")
    if not abs(r) <= 1:
        raise StatsError("correlation must lie in [-1, 1]")
    df = n - 2
    if abs(r) == 1:
        t = math.copysign(math.inf, r)
    else:
        t = r * math.sqrt(df / (1.0 - r * r))
    return _outcome(t, (df,), t_sf_two_sided(t, df), alpha)


def chi2_test(stat: float, df: int, alpha: float = 0.05) -> TestOutcome:
    stat = max(float(stat), 0.0)
    return _outcome(stat, (df,), chi2_sf(stat, df), alpha)


def bonferroni(alpha: float, k: int) -> float:
    if not 0 < alpha < 1:
        raise StatsError("alpha must lie in (0, 1)")
    if k < 1:
        raise StatsError("Bonferroni correction needs k >= 1 tests")
    return alpha / k


def bh_fdr(p_values: Sequence[float], alpha: float = 0.05) -> np.ndarray:
    """Benjamini-Hochberg step-up rejection mask, in input order."""
    p = np.asarray(p_values, dtype=float)
    if p.size == 0:
        return np.zeros(0, dtype=bool)
    if np.any((p < 0) | (p > 1)) or np.any(np.isnan(p)):
        raise StatsError("p-values must lie in [0, 1]")
    K = p.size
    order = np.argsort(p, kind="stable")
    below = p[order] <= alpha * np.arange(1, K + 1) / K
    mask = np.zeros(K, dtype=bool)
    if below.any():
        k = np.nonzero(below)[0].max()
        mask[order[: k + 1]] = True
    return mask


@dataclass(frozen=True)
class GraphMetrics:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def precision(self) -> float:
        d = self.tp + self.fp
        return self.tp / d if d else 0.0

    @property
    def recall(self) -> float:
        d = self.tp + self.fn
        return self.tp / d if d else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r > 0 else 0.0

    @property
    def fpr(self) -> float:
        d = self.fp + self.tn
        return self.fp / d if d else 0.0

    def as_dict(self) -> dict:
        return {
            "tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn,
            "precision": self.precision, "recall": self.recall,
            "f1": self.f1, "fpr": self.fpr,
        }


def _counts(est: set, true: set, total: int) -> GraphMetrics:
    tp = len(est & true)
    fp = len(est - true)
    fn = len(true - est)
    return GraphMetrics(tp, fp, fn, max(total - tp - fp - fn, 0))


def _check_nodes(a: CausalGraph, b: CausalGraph) -> None:
    if a.names != b.names:
        raise StatsError(f"node mismatch: {a.names} vs {b.names}")


def graph_metrics(estimated: CausalGraph, truth: CausalGraph) -> GraphMetrics:
    """Summary-graph scores over the ``n(n-1)`` ordered pairs, lags ignored."""
    _check_nodes(estimated, truth)
    n = truth.n_nodes
    E, T = estimated.summary_matrix(), truth.summary_matrix()
    tp = int(np.sum(E & T))
    fp = int(np.sum(E & ~T))
    fn = int(np.sum(~E & T))
    return GraphMetrics(tp, fp, fn, n * (n - 1) - tp - fp - fn)


def _lag_resolved(g: CausalGraph) -> set:
    return {(s, d, lag) for s, d, lag in g.lagged if s != d}


def _directed_pairs(g: CausalGraph) -> set:
    out = set()
    for (a, b), mark in g.contemporaneous.items():
        if mark == FORWARD:
            out.add((a, b))
        elif mark == BACKWARD:
            out.add((b, a))
    return out


@dataclass(frozen=True)
class ContempMetrics:
    lagged: GraphMetrics
    adjacency: GraphMetrics
    orientation: GraphMetrics


def contemp_metrics(
    estimated: CausalGraph, truth: CausalGraph, max_lag: int | None = None
) -> ContempMetrics:
    """Lag-resolved lagged scores, contemporaneous adjacency and orientation scores.

    Orientation precision is correctly oriented edges over all estimated
    contemporaneous adjacencies; undirected and conflicted edges count in the
    denominator but never as correct.  ``max_lag`` sizes the lagged
    true-negative count and defaults to the largest lag present.
    """
    _check_nodes(estimated, truth)
    n = truth.n_nodes
    est_l, true_l = _lag_resolved(estimated), _lag_resolved(truth)
    if max_lag is None:
        max_lag = max([lag or 1 for _, _, lag in est_l | true_l], default=1)
    lagged = _counts(est_l, true_l, n * (n - 1) * max_lag)

    n_pairs = n * (n - 1) // 2
    est_adj, true_adj = set(estimated.contemporaneous), set(truth.contemporaneous)
    adjacency = _counts(est_adj, true_adj, n_pairs)

    correct = len(_directed_pairs(estimated) & _directed_pairs(truth))
    n_true = len(_directed_pairs(truth))
    fp = len(est_adj) - correct
    fn = n_true - correct
    orientation = GraphMetrics(correct, fp, fn, max(n_pairs - correct - fp - fn, 0))
    return ContempMetrics(lagged, adjacency, orientation)


def oriented_precision(estimated: CausalGraph, truth: CausalGraph) -> float | None:
    """Share of directed contemporaneous estimates whose direction is correct.

    Undirected and conflicted edges are excluded; ``None`` when nothing is oriented.
    """
    _check_nodes(estimated, truth)
    est = _directed_pairs(estimated)
    if not est:
        return None
    return len(est & _directed_pairs(truth)) / len(est)
