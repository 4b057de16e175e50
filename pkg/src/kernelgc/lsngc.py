"""Large-scale nonlinear Granger causality.

Both models regress the target on normalised radial-basis features whose
centres come from k-means: ``f(X)`` built on the restricted design and
``g(X_a)`` on the driver's own lag block.  The nested fits are compared with
an F-test and p-values across all ordered pairs are FDR-corrected.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist, pdist

from .data import TimeSeriesSystem, embed, standardize
from .graph import CausalGraph
from .stats import TestOutcome, bh_fdr, f_test

logger = logging.getLogger(__name__)

C_F = 25
C_G = 5


class LsngcError(ValueError):
    pass


def _as_2d(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    return X[:, None] if X.ndim == 1 else X


def _plus_plus_init(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    chosen = [int(rng.integers(n))]
    d2 = np.sum((X - X[chosen[0]]) ** 2, axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total > 0:
            idx = int(rng.choice(n, p=d2 / total))
        else:
            # every remaining row duplicates a chosen centre
            free = np.setdiff1d(np.arange(n), chosen)
            idx = int(rng.choice(free))
        chosen.append(idx)
        d2 = np.minimum(d2, np.sum((X - X[idx]) ** 2, axis=1))
    return X[chosen].copy()


def kmeans(X, k: int, seed: int | np.random.SeedSequence = 0, max_iter: int = 300) -> np.ndarray:
    """Lloyd's algorithm from a k-means++ start; always returns ``k`` centroids.

    An empty cluster is re-seeded at the row farthest from its own centroid.
    """
    X = _as_2d(X)
    n = X.shape[0]
    if k < 1:
        raise LsngcError("k must be >= 1")
    if k > n:
        raise LsngcError(f"k={k} exceeds the number of rows {n}")
    rng = np.random.default_rng(seed)
    C = _plus_plus_init(X, k, rng)
    labels = None
    for _ in range(max_iter):
        D = cdist(X, C, "sqeuclidean")
        new = D.argmin(axis=1)
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        counts = np.bincount(labels, minlength=k)
        for j in np.nonzero(counts == 0)[0]:
            # only rows whose cluster keeps another member may move
            dist = np.where(counts[labels] > 1, D[np.arange(n), labels], -1.0)
            far = int(np.argmax(dist))
            counts[labels[far]] -= 1
            counts[j] += 1
            labels[far] = j
        for j in range(k):
            C[j] = X[labels == j].mean(axis=0)
    return C


@dataclass(frozen=True)
class GrbfMap:
    centroids: np.ndarray
    lengthscale: float

    def __post_init__(self):
        if not self.lengthscale > 0:
            raise LsngcError("GRBF lengthscale must be positive")


def fit_grbf(X, c: int, seed) -> GrbfMap:
    """k-means centres; lengthscale is the mean distance between centres.

    A single centre falls back to the mean distance from the rows to it.
    """
    X = _as_2d(X)
    C = kmeans(X, c, seed)
    if c > 1:
        l = float(pdist(C).mean())
    else:
        l = float(np.sqrt(((X - C[0]) ** 2).sum(axis=1)).mean())
    if not l > 0:
        logger.warning("GRBF centres coincide; using lengthscale 1")
        l = 1.0
    return GrbfMap(C, l)


def grbf_features(X, grbf: GrbfMap) -> np.ndarray:
    """Row-normalised ``exp(-|x - u_j|^2 / l^2)``; each row sums to 1."""
    X = _as_2d(X)
    if X.shape[1] != grbf.centroids.shape[1]:
        raise LsngcError("dimension mismatch between data and centroids")
    logits = -cdist(X, grbf.centroids, "sqeuclidean") / grbf.lengthscale**2
    logits -= logits.max(axis=1, keepdims=True)
    E = np.exp(logits)
    return E / E.sum(axis=1, keepdims=True)


def _ssr(F: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    # minimum-norm least squares: [f, g] always loses one rank since both blocks sum to 1
    beta, *_ = np.linalg.lstsq(F, y, rcond=None)
    fitted = F @ beta
    return float(np.sum((y - fitted) ** 2)), fitted


def _pair_seeds(seed: int, driver: int, target: int) -> list[np.random.SeedSequence]:
    return np.random.SeedSequence([seed, driver, target]).spawn(2)


def lsngc_edge_test(
    system: TimeSeriesSystem,
    driver: int | str,
    target: int | str,
    m: int,
    c_f: int = C_F,
    c_g: int = C_G,
    seed: int = 0,
    alpha: float = 0.05,
) -> TestOutcome:
    """F-test of ``g(X_a)`` added to ``f(X)``; the p-value is uncorrected."""
    design = embed(system, target, driver, m)
    n = design.n
    if n <= c_f + c_g:
        raise LsngcError(f"need n > c_f + c_g, got n={n}")
    a, b = system.index(driver), system.index(target)
    s_f, s_g = _pair_seeds(seed, a, b)
    f = grbf_features(design.X, fit_grbf(design.X, c_f, s_f))
    Xa = design.X_driver
    g = grbf_features(Xa, fit_grbf(Xa, c_g, s_g))
    y = design.y
    ssr_r, _ = _ssr(f, y)
    ssr_u, _ = _ssr(np.hstack([f, g]), y)
    return f_test(ssr_r, ssr_u, c_f, c_f + c_g, n, alpha)


def lsngc_graph(
    system: TimeSeriesSystem,
    m: int,
    c_f: int = C_F,
    c_g: int = C_G,
    alpha: float = 0.05,
    seed: int = 0,
    standardize_input: bool = True,
) -> CausalGraph:
    """Every ordered pair tested; BH-FDR at ``alpha`` across all of them."""
    if standardize_input:
        system = standardize(system)
    pairs = list(itertools.permutations(range(system.n_series), 2))
    pvals = [lsngc_edge_test(system, a, b, m, c_f, c_g, seed, alpha).p_value for a, b in pairs]
    g = CausalGraph(system.names)
    for (a, b), rej in zip(pairs, bh_fdr(pvals, alpha)):
        if rej:
            g.add_lagged(a, b, None)
    return g
