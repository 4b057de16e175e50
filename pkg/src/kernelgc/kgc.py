"""Kernel Granger causality with eigen-filtered correlation tests.

For a candidate ``driver -> target`` the restricted design ``X`` (driver
removed) and the full design ``Z`` are mapped through a centred kernel.  The
projector ``P`` onto the leading eigenspace of ``K(X, X)`` gives the
restricted fit ``Py``; the part of ``K(Z, Z)`` orthogonal to it,
``(I - P) K' (I - P)``, spans what the driver adds.  Each of its leading
eigenvectors is correlated with the restricted residual and tested; the index
``delta`` sums the squared correlations and equals the relative drop in
residual sum of squares.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass

import numpy as np

from .data import TimeSeriesSystem, check_sample_size, embed, standardize
from .graph import CausalGraph
from .kernels import KernelSpec, SquaredExponential, center_kernel, kernel_matrix, spectral_basis
from .stats import bonferroni, correlation_t_test

logger = logging.getLogger(__name__)

MU = 1e-6
# residual kernel treated as zero below this fraction of the full kernel's top eigenvalue
_NULL_RESIDUAL = 1e-12


class KgcError(ValueError):
    pass


@dataclass(frozen=True)
class KgcEdgeResult:
    delta: float
    delta_filtered: float
    component_correlations: tuple[tuple[float, float], ...]
    n_r: int
    reject: bool
    corrected_alpha: float


def default_kernel(n_series: int, m: int) -> SquaredExponential:
    """SE kernel with lengthscale ``2 * n_series * m``."""
    return SquaredExponential(lengthscale=2.0 * n_series * m)


def kgc_projector(K_centered: np.ndarray, mu: float = MU) -> tuple[np.ndarray, int]:
    """Orthogonal projector onto eigenvectors with ``lambda >= mu * lambda_max``."""
    lam, V = spectral_basis(K_centered, mu)
    if lam.size == 0:
        raise KgcError("degenerate kernel: largest eigenvalue is not positive")
    return V @ V.T, V.shape[1]


def _residual_components(K_full: np.ndarray, P: np.ndarray, mu: float) -> np.ndarray:
    Q = np.eye(len(P)) - P
    K_res = Q @ K_full @ Q
    lam_full = np.linalg.eigvalsh(0.5 * (K_full + K_full.T))[-1]
    lam, W = spectral_basis(K_res, mu)
    if lam.size == 0 or lam[0] <= _NULL_RESIDUAL * max(lam_full, 0.0):
        return W[:, :0]
    return W


def _pearson(a: np.ndarray, b: np.ndarray) -> float:
    a = a - a.mean()
    b = b - b.mean()
    den = np.linalg.norm(a) * np.linalg.norm(b)
    if den == 0:
        return 0.0
    return float(np.clip(a @ b / den, -1.0, 1.0))


def kgc_edge_test(
    system: TimeSeriesSystem,
    driver: int | str,
    target: int | str,
    m: int,
    spec: KernelSpec | None = None,
    mu: float = MU,
    alpha: float = 0.05,
) -> KgcEdgeResult:
    """Test ``driver -> target``; Bonferroni over components and unordered pairs."""
    design = embed(system, target, driver, m, preprocessing="kgc")
    n_t = system.n_series
    check_sample_size(design.n, n_t, m, "KGC", strict=True)
    spec = default_kernel(n_t, m) if spec is None else spec

    K = center_kernel(kernel_matrix(spec, design.X))
    K_full = center_kernel(kernel_matrix(spec, design.Z))
    P, _ = kgc_projector(K, mu)
    y = design.y
    e = y - P @ y
    W = _residual_components(K_full, P, mu)
    n_r = W.shape[1]
    n_pairs = max(n_t * (n_t - 1) // 2, 1)
    if n_r == 0:
        logger.warning("KGC %s -> %s: no residual components", driver, target)
        return KgcEdgeResult(0.0, 0.0, (), 0, False, bonferroni(alpha, n_pairs))

    alpha_c = bonferroni(alpha, n_r * n_pairs)
    comps, delta, delta_f = [], 0.0, 0.0
    for i in range(n_r):
        r = _pearson(e, W[:, i])
        out = correlation_t_test(r, design.n, alpha_c)
        comps.append((r, out.p_value))
        delta += r * r
        if out.reject:
            delta_f += r * r
    return KgcEdgeResult(delta, delta_f, tuple(comps), n_r, delta_f > 0, alpha_c)


def kgc_results(
    system: TimeSeriesSystem,
    m: int,
    spec: KernelSpec | None = None,
    mu: float = MU,
    alpha: float = 0.05,
    standardize_input: bool = True,
) -> dict[tuple[int, int], KgcEdgeResult]:
    """Edge results keyed by ``(driver, target)`` for every ordered pair."""
    if standardize_input:
        system = standardize(system)
    pairs = itertools.permutations(range(system.n_series), 2)
    return {(a, b): kgc_edge_test(system, a, b, m, spec, mu, alpha) for a, b in pairs}


def kgc_graph(
    system: TimeSeriesSystem,
    m: int,
    spec: KernelSpec | None = None,
    mu: float = MU,
    alpha: float = 0.05,
    standardize_input: bool = True,
) -> CausalGraph:
    g = CausalGraph(system.names)
    for (a, b), res in kgc_results(system, m, spec, mu, alpha, standardize_input).items():
        if res.reject:
            g.add_lagged(a, b, None)
    return g
