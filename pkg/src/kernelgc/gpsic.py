"""ARD Gaussian-process Granger causality with a smooth L0 penalty.

One GP per target is fitted on all lagged series with an ARD squared
exponential kernel (signal variance fixed at 1).  The log marginal likelihood
is penalised by ``(log n / 2) * sum_i phi_w(1 / l_i)`` with
``phi_w(x) = x^2 / (x^2 + w^2)``, a differentiable count of active
covariates.  ``w`` is annealed from 100 towards 1e-5 with warm starts; a
covariate whose final lengthscale stays below the threshold is a parent.

All optimisation runs over ``theta = [log l_1 .. log l_d, log noise]``.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize
from scipy.linalg import cho_solve, lapack
from scipy.spatial.distance import cdist

from .data import EmbeddedDesign, TimeSeriesSystem, embed, embed_full, standardize
from .graph import CausalGraph
from .stats import TestOutcome, chi2_test

logger = logging.getLogger(__name__)

LOG_L_BOUNDS = (math.log(1e-2), math.log(1e6))
LOG_NOISE_BOUNDS = (math.log(1e-6), math.log(1e2))
JITTER_LADDER = (1e-10, 1e-6, 1e-4)
THRESHOLD = 50.0
INIT_NOISE = 0.1
NOISY_INIT = 1.0
MAXITER = 200
# unpenalised fits run once, so they get a larger budget
MAXITER_SINGLE = 1000
DELTA_TIE = 1e-6
# a longer lag whose extra columns are switched off scores within rounding of the shorter one
LOO_TIE = 1e-6


class GpError(ValueError):
    pass


def default_schedule(n_steps: int = 50, start: float = 100.0, stop: float = 1e-5) -> np.ndarray:
    return np.geomspace(start, stop, n_steps)


@dataclass(frozen=True)
class ArdHyperparameters:
    lengthscales: np.ndarray
    noise_variance: float
    kernel_variance: float = 1.0

    def __post_init__(self):
        ls = np.atleast_1d(np.asarray(self.lengthscales, dtype=float))
        if ls.ndim != 1 or np.any(~(ls > 0)):
            raise GpError("lengthscales must be a positive vector")
        if not self.noise_variance > 0 or not self.kernel_variance > 0:
            raise GpError("variances must be positive")
        object.__setattr__(self, "lengthscales", ls)

    @classmethod
    def from_log(cls, theta: np.ndarray, kernel_variance: float = 1.0) -> "ArdHyperparameters":
        return cls(np.exp(theta[:-1]), float(np.exp(theta[-1])), kernel_variance)

    def to_log(self) -> np.ndarray:
        return np.append(np.log(self.lengthscales), math.log(self.noise_variance))

    @classmethod
    def initial(cls, d: int) -> "ArdHyperparameters":
        return cls(np.full(d, math.sqrt(max(d, 1))), INIT_NOISE)


@dataclass(frozen=True)
class OmegaStep:
    omega: float
    start_objective: float
    end_objective: float
    n_iter: int


@dataclass(frozen=True)
class GpFit:
    theta: ArdHyperparameters
    objective: float
    log_likelihood: float
    omega_schedule: tuple[float, ...]
    converged: bool
    gradient_norm_final: float
    steps: tuple[OmegaStep, ...] = field(default=(), repr=False)


# ---------------------------------------------------------------------------
# marginal likelihood


def _cholesky(Ky: np.ndarray) -> np.ndarray:
    L, info = lapack.dpotrf(Ky, lower=1, clean=1)
    if info == 0:
        return L
    scale = float(np.mean(np.diag(Ky)))
    eye = np.eye(len(Ky))
    for j in JITTER_LADDER:
        L, info = lapack.dpotrf(Ky + j * scale * eye, lower=1, clean=1)
        if info == 0:
            logger.debug("Cholesky needed jitter %g", j)
            return L
    raise GpError("ill-conditioned kernel")


def _inverse_lower(L: np.ndarray) -> np.ndarray:
    """Lower triangle of ``(L L^T)^{-1}``; the strict upper triangle is zero."""
    Kinv, info = lapack.dpotri(L, lower=1)
    if info != 0:
        raise GpError("ill-conditioned kernel")
    return Kinv


def _inverse(L: np.ndarray) -> np.ndarray:
    Kinv = _inverse_lower(L)
    return Kinv + np.tril(Kinv, -1).T


def _prepare(Z: np.ndarray, y: np.ndarray, theta: np.ndarray, tau2: float):
    ls = np.exp(theta[:-1])
    noise = math.exp(theta[-1])
    S = Z / ls
    K = tau2 * np.exp(-0.5 * cdist(S, S, "sqeuclidean"))
    Ky = K.copy()
    Ky[np.diag_indices_from(Ky)] += noise
    return S, K, Ky, noise


def lml_and_grad(Z: np.ndarray, y: np.ndarray, theta: np.ndarray, tau2: float = 1.0):
    """Log marginal likelihood and its gradient in ``theta`` (log-parameters).

    With ``a = Ky^{-1} y``, ``W = a a^T - Ky^{-1}``, ``M = W * K`` and
    ``S = Z / l``, the log-lengthscale gradient is
    ``sum_i S_id^2 (M 1)_i - S_d^T M S_d`` and the log-noise gradient is
    ``noise * tr(W) / 2``.  ``M`` is never formed: its ``a a^T`` part is
    applied through products with ``K`` and the inverse part through its
    lower triangle.
    """
    n = len(y)
    S, K, Ky, noise = _prepare(Z, y, theta, tau2)
    L = _cholesky(Ky)
    alpha = cho_solve((L, True), y)
    value = -0.5 * y @ alpha - np.sum(np.log(np.diag(L))) - 0.5 * n * math.log(2 * math.pi)

    Ka = K @ alpha
    r = alpha * Ka
    MS = alpha[:, None] * (K @ (alpha[:, None] * S))
    Kinv_lower = _inverse_lower(L)
    P = Kinv_lower * K
    p_diag = np.diag(P).copy()
    r -= P.sum(axis=1) + P.sum(axis=0) - p_diag
    MS -= P @ S + P.T @ S - p_diag[:, None] * S

    grad_l = (S**2).T @ r - np.einsum("id,id->d", MS, S)
    tr_w = alpha @ alpha - np.trace(Kinv_lower)
    return float(value), np.append(grad_l, 0.5 * noise * tr_w)


def lml_value(Z: np.ndarray, y: np.ndarray, theta: np.ndarray, tau2: float = 1.0) -> float:
    n = len(y)
    _, _, Ky, _ = _prepare(Z, y, theta, tau2)
    L = _cholesky(Ky)
    alpha = cho_solve((L, True), y)
    return float(-0.5 * y @ alpha - np.sum(np.log(np.diag(L))) - 0.5 * n * math.log(2 * math.pi))


def log_marginal_likelihood(design: EmbeddedDesign, theta: ArdHyperparameters):
    """``(value, gradient)``; gradient over log-lengthscales then log-noise."""
    _check_dims(design.Z, theta)
    return lml_and_grad(design.Z, design.y, theta.to_log(), theta.kernel_variance)


def _check_dims(Z, theta: ArdHyperparameters):
    if Z.shape[1] != theta.lengthscales.size:
        raise GpError(f"{theta.lengthscales.size} lengthscales for {Z.shape[1]} columns")


# ---------------------------------------------------------------------------
# penalty


def phi_omega(x, omega: float) -> np.ndarray:
    x2 = np.asarray(x, dtype=float) ** 2
    return x2 / (x2 + omega**2)


def sic_penalty(lengthscales, omega: float) -> tuple[float, np.ndarray]:
    """``sum_i phi_w(1 / l_i)`` and its gradient in ``log l``."""
    if not omega > 0:
        raise GpError("omega must be positive")
    x = 1.0 / np.asarray(lengthscales, dtype=float)
    x2, w2 = x * x, omega * omega
    value = float(np.sum(x2 / (x2 + w2)))
    grad = -2.0 * x2 * w2 / (x2 + w2) ** 2
    return value, grad


def penalized_objective(Z, y, theta: np.ndarray, omega: float, tau2: float = 1.0):
    """Penalised log marginal likelihood and gradient in ``theta``."""
    value, grad = lml_and_grad(Z, y, theta, tau2)
    weight = 0.5 * math.log(len(y))
    pen, pen_grad = sic_penalty(np.exp(theta[:-1]), omega)
    grad = grad.copy()
    grad[:-1] -= weight * pen_grad
    return value - weight * pen, grad


# ---------------------------------------------------------------------------
# optimisation


def _bounds(d: int):
    return [LOG_L_BOUNDS] * d + [LOG_NOISE_BOUNDS]


def _clip(theta: np.ndarray) -> np.ndarray:
    lo = np.array([b[0] for b in _bounds(len(theta) - 1)])
    hi = np.array([b[1] for b in _bounds(len(theta) - 1)])
    return np.clip(theta, lo, hi)


def _maximize(fun, theta0: np.ndarray, maxiter: int):
    """L-BFGS-B ascent; never returns a point worse than ``theta0``."""

    def neg(t):
        try:
            v, g = fun(t)
        except GpError:
            return 1e25, np.zeros_like(t)
        if not np.isfinite(v):
            return 1e25, np.zeros_like(t)
        return -v, -g

    f0, g0 = neg(theta0)
    res = optimize.minimize(
        neg, theta0, jac=True, method="L-BFGS-B",
        bounds=_bounds(len(theta0) - 1), options={"maxiter": maxiter},
    )
    if res.fun <= f0:
        return res.x, -float(res.fun), -f0, res
    return theta0, -f0, -f0, res


def _pgrad_norm(theta, grad) -> float:
    # projected gradient: components pushing against an active bound are dropped
    lo = np.array([b[0] for b in _bounds(len(theta) - 1)])
    hi = np.array([b[1] for b in _bounds(len(theta) - 1)])
    g = np.array(grad, dtype=float)
    g[(theta <= lo) & (g < 0)] = 0.0
    g[(theta >= hi) & (g > 0)] = 0.0
    return float(np.linalg.norm(g))


def _eliminate(fun, theta: np.ndarray, maxiter: int) -> np.ndarray:
    """Try the empty parent set at the final ``omega``.

    Every active lengthscale (below the removal threshold) is pushed to its
    upper bound, the point is re-maximised and kept if the objective
    improves.  Telescoping alone can stay in a basin where a few tiny
    lengthscales jointly turn the kernel into white noise.  Single
    covariates are never dropped here: exact duplicate drivers tie, and
    dropping one of a pair would always win.
    """
    active = np.nonzero(theta[:-1] < math.log(THRESHOLD))[0]
    if len(active) == 0:
        return theta
    trial = theta.copy()
    trial[active] = LOG_L_BOUNDS[1]
    cand, value, _, _ = _maximize(fun, trial, maxiter)
    return cand if value > fun(theta)[0] + 1e-9 else theta


def fit_penalized(
    Z: np.ndarray,
    y: np.ndarray,
    schedule=None,
    seed: int = 0,
    init: ArdHyperparameters | None = None,
    maxiter: int = MAXITER,
    tau2: float = 1.0,
) -> GpFit:
    """Telescoping-``omega`` fit on raw arrays; see :func:`optimize_penalized`."""
    Z = np.asarray(Z, dtype=float)
    y = np.asarray(y, dtype=float)
    n, d = Z.shape
    if d == 0:
        raise GpError("design has no covariates")
    if n < 2 * d:
        logger.warning("GP fit with n=%d rows for d=%d covariates", n, d)
    schedule = default_schedule() if schedule is None else np.asarray(schedule, dtype=float)
    if schedule.ndim != 1 or schedule.size == 0 or np.any(schedule <= 0):
        raise GpError("omega schedule must be a nonempty vector of positive values")
    if np.any(np.diff(schedule) >= 0):
        raise GpError("omega schedule must be strictly decreasing")

    for attempt in range(2):
        theta = (init or ArdHyperparameters.initial(d)).to_log() if attempt == 0 else None
        if theta is None:
            # one restart from the default start, nudged by the seed
            rng = np.random.default_rng(seed)
            theta = ArdHyperparameters.initial(d).to_log() + 0.1 * rng.standard_normal(d + 1)
        theta = _clip(theta)
        steps, converged, res = [], True, None
        for i, omega in enumerate(schedule):
            fun = lambda t, w=omega: penalized_objective(Z, y, t, w, tau2)  # noqa: E731
            theta_i, end, start, res = _maximize(fun, theta, maxiter)
            if i == 0 and init is None:
                # from sigma^2 = 0.1 the first ascent can settle where tiny lengthscales
                # interpolate the noise; a noise-dominated start escapes that basin
                alt = _clip(ArdHyperparameters(np.full(d, math.sqrt(d)), NOISY_INIT).to_log())
                alt_theta, alt_end, _, alt_res = _maximize(fun, alt, maxiter)
                if alt_end > end:
                    theta_i, end, res = alt_theta, alt_end, alt_res
            theta = theta_i
            steps.append(OmegaStep(float(omega), start, end, int(res.nit)))
            converged = converged and bool(res.success)
        final = lambda t: penalized_objective(Z, y, t, schedule[-1], tau2)  # noqa: E731
        theta = _eliminate(final, theta, maxiter)
        objective, grad = final(theta)
        if np.isfinite(objective):
            break
        logger.warning("non-finite GP objective; restarting from the default start")
    else:
        raise GpError("GP objective is not finite after restart")
    params = ArdHyperparameters.from_log(theta, tau2)
    return GpFit(
        theta=params,
        objective=float(objective),
        log_likelihood=lml_value(Z, y, theta, tau2),
        omega_schedule=tuple(float(w) for w in schedule),
        converged=converged,
        gradient_norm_final=_pgrad_norm(theta, grad),
        steps=tuple(steps),
    )


def optimize_penalized(
    design: EmbeddedDesign,
    schedule=None,
    seed: int = 0,
    maxiter: int = MAXITER,
    init: ArdHyperparameters | None = None,
) -> GpFit:
    """Maximise the penalised likelihood over a decreasing ``omega`` schedule.

    Each ``omega`` runs bounded L-BFGS warm-started at the previous optimum;
    a step that would lower the objective keeps its start point.
    """
    return fit_penalized(design.Z, design.y, schedule, seed, init, maxiter)


def fit_unpenalized(
    Z: np.ndarray, y: np.ndarray, maxiter: int = MAXITER_SINGLE, tau2: float = 1.0
) -> GpFit:
    """Plain type-II maximum likelihood from the default start."""
    Z = np.asarray(Z, dtype=float)
    d = Z.shape[1]
    if d == 0:
        raise GpError("design has no covariates")
    theta0 = _clip(ArdHyperparameters.initial(d).to_log())
    fun = lambda t: lml_and_grad(Z, y, t, tau2)  # noqa: E731
    theta, end, start, res = _maximize(fun, theta0, maxiter)
    _, grad = lml_and_grad(Z, y, theta, tau2)
    return GpFit(
        theta=ArdHyperparameters.from_log(theta, tau2),
        objective=end,
        log_likelihood=end,
        omega_schedule=(),
        converged=bool(res.success),
        gradient_norm_final=_pgrad_norm(theta, grad),
        steps=(OmegaStep(math.inf, start, end, int(res.nit)),),
    )


# ---------------------------------------------------------------------------
# parents and graphs


def gpsic_parent_set(
    design: EmbeddedDesign, fit: GpFit, threshold: float = THRESHOLD
) -> set[tuple[int, int]]:
    """``(series, lag)`` of every column whose lengthscale is below ``threshold``."""
    ls = fit.theta.lengthscales
    if ls.size != len(design.column_map):
        raise GpError("fit does not match the design")
    return {design.column_map[j] for j in np.nonzero(ls < threshold)[0]}


def gpsic_graph(
    system: TimeSeriesSystem,
    m: int,
    threshold: float = THRESHOLD,
    seed: int = 0,
    schedule=None,
    standardize_input: bool = True,
    include_self: bool = False,
) -> CausalGraph:
    """One penalised fit per target on all lagged series.

    Edges carry the lag of the selected feature.  A target's own lags are
    dropped unless ``include_self``.
    """
    if standardize_input:
        system = standardize(system)
    g = CausalGraph(system.names)
    if system.n_series == 1 and not include_self:
        return g
    for b in range(system.n_series):
        design = embed_full(system, b, m)
        fit = optimize_penalized(design, schedule, seed)
        for s, lag in gpsic_parent_set(design, fit, threshold):
            if s != b or include_self:
                g.add_lagged(s, b, lag)
    return g


# ---------------------------------------------------------------------------
# leave-one-out lag selection


def loo_log_predictive(Z: np.ndarray, y: np.ndarray, theta: ArdHyperparameters) -> float:
    """Sum of leave-one-out log predictive densities, from one inverse."""
    _check_dims(Z, theta)
    _, _, Ky, _ = _prepare(Z, y, theta.to_log(), theta.kernel_variance)
    Kinv = _inverse(_cholesky(Ky))
    d = np.diag(Kinv)
    resid = (Kinv @ y) / d  # y_i - mu_i
    var = 1.0 / d
    return float(np.sum(-0.5 * np.log(2 * math.pi * var) - 0.5 * resid**2 / var))


def loo_pseudo_likelihood(design: EmbeddedDesign, theta: ArdHyperparameters) -> float:
    return loo_log_predictive(design.Z, design.y, theta)


def select_lag(
    system: TimeSeriesSystem,
    target: int | str,
    m_max: int,
    seed: int = 0,
    schedule=None,
    standardize_input: bool = True,
) -> int:
    """Lag in ``1..m_max`` with the largest LOO pseudo-likelihood of its fit.

    All candidates are scored on the same rows (those available at ``m_max``);
    a longer lag must win by more than ``LOO_TIE``.
    """
    if m_max < 1:
        raise GpError("m_max must be >= 1")
    if m_max >= system.length / 2:
        raise GpError("m_max must be below half the series length")
    if standardize_input:
        system = standardize(system)
    if m_max == 1:
        return 1
    best, best_val = 1, -math.inf
    for m in range(1, m_max + 1):
        design = embed_full(system, target, m)
        Z, y = design.Z[m_max - m :], design.y[m_max - m :]
        fit = fit_penalized(Z, y, schedule, seed)
        val = loo_log_predictive(Z, y, fit.theta)
        logger.debug("lag %d: LOO %.6g", m, val)
        if val > best_val + LOO_TIE:
            best, best_val = m, val
    return best


def gpsic_graph_auto(
    system: TimeSeriesSystem,
    m_max: int,
    threshold: float = THRESHOLD,
    seed: int = 0,
    schedule=None,
    include_self: bool = False,
) -> tuple[CausalGraph, dict[int, int]]:
    """Like :func:`gpsic_graph` with each target's lag chosen by :func:`select_lag`.

    Returns the graph and the chosen lag per target.
    """
    system = standardize(system)
    g = CausalGraph(system.names)
    lags = {}
    for b in range(system.n_series):
        lags[b] = m = select_lag(system, b, m_max, seed, schedule, standardize_input=False)
        design = embed_full(system, b, m)
        fit = optimize_penalized(design, schedule, seed)
        for s, lag in gpsic_parent_set(design, fit, threshold):
            if s != b or include_self:
                g.add_lagged(s, b, lag)
    return g, lags


# ---------------------------------------------------------------------------
# likelihood-comparison baselines


def _restricted_unrestricted(system, driver, target, m, standardize_input):
    if standardize_input:
        system = standardize(system)
    design = embed(system, target, driver, m)
    lr = fit_unpenalized(design.X, design.y).log_likelihood
    lu = fit_unpenalized(design.Z, design.y).log_likelihood
    return lr, lu


def gp_delta_baseline(
    system: TimeSeriesSystem, driver, target, m: int, seed: int = 0,
    standardize_input: bool = True,
) -> bool:
    """Edge iff the unrestricted maximised likelihood beats the restricted one by > 1e-6.

    The fits are deterministic, so ``seed`` does not change the result.
    """
    lr, lu = _restricted_unrestricted(system, driver, target, m, standardize_input)
    return lu - lr > DELTA_TIE


def gp_glrt_baseline(
    system: TimeSeriesSystem, driver, target, m: int, alpha: float = 0.05, seed: int = 0,
    standardize_input: bool = True,
) -> TestOutcome:
    """Likelihood-ratio test, chi-squared with ``m`` degrees of freedom."""
    lr, lu = _restricted_unrestricted(system, driver, target, m, standardize_input)
    return chi2_test(2.0 * (lu - lr), m, alpha)


def baseline_graph(
    system: TimeSeriesSystem, m: int, kind: str, alpha: float = 0.05, seed: int = 0
) -> CausalGraph:
    """Pairwise graph from ``kind`` in ``{"delta", "glrt"}``."""
    if kind not in ("delta", "glrt"):
        raise GpError(f"unknown baseline {kind!r}")
    system = standardize(system)
    g = CausalGraph(system.names)
    for a, b in itertools.permutations(range(system.n_series), 2):
        if kind == "delta":
            edge = gp_delta_baseline(system, a, b, m, seed, standardize_input=False)
        else:
            edge = gp_glrt_baseline(system, a, b, m, alpha, seed, standardize_input=False).reject
        if edge:
            g.add_lagged(a, b, None)
    return g
