"""Benchmark time-series systems with known causal graphs.

Every generator runs ``burn_in + n`` steps, drops the first ``burn_in`` and
returns the data, the ground-truth graph (self-loops omitted) and the true
lag order.  Lagged ground-truth edges carry the lag at which the source
enters the target's update.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .data import TimeSeriesSystem
from .graph import FORWARD, CausalGraph

BURN_IN = 50
# logistic-type maps leave their basin once a state passes this bound
LOGISTIC_BOUND = 10.0
DIVERGENCE_BOUND = 1e6
MAX_GRAPH_ATTEMPTS = 10_000

NAMED_SYSTEMS = (
    "logistic_1way",
    "logistic_2way",
    "stochastic_linear",
    "stochastic_nonlinear",
    "fan_in_3",
    "fan_out_3",
    "confounder",
    "mediator",
    "synergistic_collider",
    "redundant_collider",
    "sync_1way_intermediate",
    "sync_1way_strong",
    "sync_2way_strong",
    "moran",
    "linear_5",
    "nonlinear_5",
    "nonlinear_8",
)
RANDOM_SYSTEMS = ("random_nonlinear", "contemporaneous_random")


class SimulationError(ValueError):
    pass


class SimulationDiverged(SimulationError):
    pass


@dataclass(frozen=True)
class BenchmarkSpec:
    """``n`` is the number of retained time points.

    ``params`` holds per-system options: ``noise_scale`` (``"sd"`` or
    ``"variance"``) for the logistic, sync and eight-species maps, which
    default to sd, variance and sd respectively, and ``n_t``, ``L``, ``a``,
    ``c``, ``m``, ``contemp_fraction``, ``nonlinear`` for the random systems.
    ``innovation=False`` drops the unit innovation of the five-variable systems.
    """

    system_id: str
    n: int = 250
    burn_in: int = BURN_IN
    seed: int = 0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.system_id not in NAMED_SYSTEMS + RANDOM_SYSTEMS:
            raise SimulationError(f"unknown system_id {self.system_id!r}")
        if self.n < 10:
            raise SimulationError("n must be >= 10")
        if self.burn_in < 0:
            raise SimulationError("burn_in must be >= 0")


class Simulation(NamedTuple):
    system: TimeSeriesSystem
    truth: CausalGraph
    m_true: int


def _names(k: int) -> tuple[str, ...]:
    return tuple(f"x{i + 1}" for i in range(k))


def _truth(names, edges, contemporaneous=()) -> CausalGraph:
    """``edges`` use 1-based ``(src, dst, lag)``; contemporaneous are 1-based ``(src, dst)``."""
    g = CausalGraph(tuple(names))
    for s, d, lag in edges:
        g.add_lagged(s - 1, d - 1, lag)
    for s, d in contemporaneous:
        g.add_contemporaneous(s - 1, d - 1, FORWARD)
    return g


def _noise_sd(value: float, params: dict, default: str) -> float:
    scale = params.get("noise_scale", default)
    if scale == "sd":
        return value
    if scale == "variance":
        return math.sqrt(value)
    raise SimulationError(f"noise_scale must be 'sd' or 'variance', got {scale!r}")


def _check(x: np.ndarray, bound: float, t: int) -> None:
    if not np.all(np.isfinite(x)) or np.any(np.abs(x) > bound):
        raise SimulationDiverged(f"simulation diverged at step {t}")


def _run(T: int, x0: np.ndarray, step: Callable, bound: float, history: int = 1) -> np.ndarray:
    """``x0`` holds ``history`` initial rows; ``step(X, t)`` returns row ``t`` from rows ``< t``."""
    X = np.empty((T + history, x0.shape[1]))
    X[:history] = x0
    for t in range(history, T + history):
        X[t] = step(X, t)
        _check(X[t], bound, t)
    return X[history:]


# ---------------------------------------------------------------------------
# two-variable systems


def _logistic(spec: BenchmarkSpec, rng, r1, r2, g21, g12):
    # read as a variance every trajectory leaves the basin
    sd = _noise_sd(0.01, spec.params, "sd")

    def step(X, t):
        x1, x2 = X[t - 1]
        e = sd * rng.standard_normal(2)
        return (x1 * (r1 - r1 * x1 - g12 * x2) + e[0], x2 * (r2 - r2 * x2 - g21 * x1) + e[1])

    x0 = np.array([[0.2, 0.4]])
    X = _run(spec.burn_in + spec.n - 1, x0, step, LOGISTIC_BOUND)
    return np.vstack([x0, X])


def _logistic_1way(spec, rng):
    X = _logistic(spec, rng, 3.7, 3.7, 0.2, 0.0)
    return X, _truth(_names(2), [(1, 2, 1)]), 1


def _logistic_2way(spec, rng):
    X = _logistic(spec, rng, 3.5, 3.9, 0.2, 0.01)
    return X, _truth(_names(2), [(1, 2, 1), (2, 1, 1)]), 1


def _stochastic_linear(spec, rng):
    def step(X, t):
        e = rng.standard_normal(2)
        return (
            0.95 * math.sqrt(2) * X[t - 1, 0] - 0.9025 * X[t - 2, 0] + e[0],
            0.5 * X[t - 2, 0] + e[1],
        )

    X = _run(spec.burn_in + spec.n, rng.standard_normal((2, 2)), step, DIVERGENCE_BOUND, 2)
    return X, _truth(_names(2), [(1, 2, 2)]), 2


def _stochastic_nonlinear(spec, rng):
    def step(X, t):
        e = rng.standard_normal(2)
        x1, x2 = X[t - 1]
        x1_old = X[t - 2, 0]
        return (
            3.4 * x1 * (1 - x1**2) * math.exp(-(x1_old**2)) + e[0],
            3.4 * x2 * (1 - x2**2) * math.exp(-(x2**2)) + x1_old * x2 / 2 + e[1],
        )

    X = _run(spec.burn_in + spec.n, rng.standard_normal((2, 2)), step, DIVERGENCE_BOUND, 2)
    return X, _truth(_names(2), [(1, 2, 2)]), 2


# ---------------------------------------------------------------------------
# three-variable systems


def _competition(spec, rng, gamma: np.ndarray):
    # x_j(t+1) = x_j(t) (gamma_jj - sum_i gamma_ji x_i(t)), diagonal included in the sum
    diag = np.diag(gamma).copy()

    def step(X, t):
        x = X[t - 1]
        return x * (diag - gamma @ x)

    return _run(spec.burn_in + spec.n, rng.uniform(0, 1, (1, 3)), step, LOGISTIC_BOUND)


def _fan_in(spec, rng):
    G = np.diag([4.0, 3.6, 2.12])
    G[2, 0], G[2, 1] = 0.636, -0.636
    return _competition(spec, rng, G), _truth(_names(3), [(1, 3, 1), (2, 3, 1)]), 1


def _fan_out(spec, rng):
    G = np.diag([4.0, 3.1, 2.12])
    G[1, 0], G[2, 0] = 0.21, -0.636
    return _competition(spec, rng, G), _truth(_names(3), [(1, 2, 1), (1, 3, 1)]), 1


def _three(spec, rng, update):
    def step(X, t):
        return update(X[t - 1], rng.standard_normal(3))

    return _run(spec.burn_in + spec.n, rng.standard_normal((1, 3)), step, DIVERGENCE_BOUND)


def _mediator(spec, rng):
    def update(x, e):
        return (
            math.sin(x[1]) + 0.001 * e[0],
            math.cos(x[2]) + 0.01 * e[1],
            0.5 * x[2] + 0.1 * e[2],
        )

    return _three(spec, rng, update), _truth(_names(3), [(2, 1, 1), (3, 2, 1)]), 1


def _confounder(spec, rng):
    def update(x, e):
        return (
            math.sin(x[0] + x[2]) + 0.01 * e[0],
            math.cos(x[1] - x[2]) + 0.01 * e[1],
            0.5 * x[2] + 0.1 * e[2],
        )

    return _three(spec, rng, update), _truth(_names(3), [(3, 1, 1), (3, 2, 1)]), 1


def _synergistic(spec, rng):
    def update(x, e):
        return (
            math.sin(x[1] * x[2]) + 0.001 * e[0],
            0.5 * x[1] + 0.1 * e[1],
            0.5 * x[2] + 0.1 * e[2],
        )

    return _three(spec, rng, update), _truth(_names(3), [(2, 1, 1), (3, 1, 1)]), 1


def _redundant(spec, rng):
    def update(x, e):
        x2 = 0.5 * x[1] + 0.1 * e[1]
        return (0.3 * x[0] + math.sin(x[1] * x[2]) + 0.001 * e[0], x2, x2)

    x0 = rng.standard_normal((1, 3))
    x0[0, 2] = x0[0, 1]

    def step(X, t):
        return update(X[t - 1], rng.standard_normal(3))

    X = _run(spec.burn_in + spec.n, x0, step, DIVERGENCE_BOUND)
    # x3 duplicates x2, so each one's past predicts the other exactly as well as its own
    truth = _truth(_names(3), [(2, 1, 1), (3, 1, 1), (2, 3, 1), (3, 2, 1)])
    return X, truth, 1


def _sync(spec, rng, c12, c123):
    r = np.array([3.68, 3.67, 3.78])
    sd = _noise_sd(1e-5, spec.params, "variance")

    def step(X, t):
        x1, x2, x3 = X[t - 1]
        u = (x2 + c12 * x1) / (1 + c12)
        v = (x3 + c123 * x1 + c123 * x2) / (1 + 2 * c123)
        e = sd * rng.standard_normal(3)
        return (r[0] * x1 * (1 - x1) + e[0], r[1] * u * (1 - u) + e[1], r[2] * v * (1 - v) + e[2])

    return _run(spec.burn_in + spec.n, rng.uniform(0, 1, (1, 3)), step, LOGISTIC_BOUND)


def _sync_1way_intermediate(spec, rng):
    return _sync(spec, rng, 0.1, 0.0), _truth(_names(3), [(1, 2, 1)]), 1


def _sync_1way_strong(spec, rng):
    return _sync(spec, rng, 1.0, 0.0), _truth(_names(3), [(1, 2, 1)]), 1


def _sync_2way_strong(spec, rng):
    return _sync(spec, rng, 0.0, 1.0), _truth(_names(3), [(1, 3, 1), (2, 3, 1)]), 1


# ---------------------------------------------------------------------------
# Moran effect: columns N1, N2, R1, R2, V


MORAN_NAMES = ("N1", "N2", "R1", "R2", "V")


def _moran(spec, rng):
    r, s, psi, D = (3.4, 2.9), (0.4, 0.35), (0.5, 0.6), 4
    T = spec.burn_in + spec.n
    hist = D + 1
    X = np.empty((T + hist, 5))
    X[:hist, 0:2] = 0.5
    X[:hist, 2:4] = 1.0
    X[:hist, 4] = rng.standard_normal(hist)
    for t in range(hist, T + hist):
        prev = X[t - 1]
        for i in range(2):
            N, V = prev[i], prev[4]
            X[t, 2 + i] = r[i] * N * (1 - N) * math.exp(-psi[i] * V)
            X[t, i] = s[i] * N + max(X[t - 1 - D, 2 + i], 0.0)
        X[t, 4] = rng.standard_normal()
        _check(X[t], DIVERGENCE_BOUND, t)
    edges = [(5, 3, 1), (5, 4, 1), (1, 3, 1), (2, 4, 1), (3, 1, D + 1), (4, 2, D + 1)]
    return X[hist:], _truth(MORAN_NAMES, edges), 5


# ---------------------------------------------------------------------------
# five- and eight-variable systems


def _five(spec, rng, nonlinear: bool):
    sigma = 0.01
    r2 = math.sqrt(2)
    # the printed updates read x_i(t) = x_i(t) + ...: the array starts as N(0, 1)
    # draws and is accumulated in place, so x1, x2, x4, x5 carry a unit innovation
    unit = np.array([1.0, 1.0, 0.0, 1.0, 1.0]) if spec.params.get("innovation", True) else 0.0

    def drive(x):
        return x * x if nonlinear else x

    def step(X, t):
        e = sigma * rng.standard_normal(5) + unit * rng.standard_normal(5)
        x1 = 0.95 * r2 * X[t - 1, 0] - 0.9025 * X[t - 2, 0] + e[0]
        x2 = 0.5 * drive(X[t - 2, 0]) + e[1]
        x3 = -0.4 * X[t - 3, 0] + e[2]
        x4 = -0.5 * drive(X[t - 2, 0]) + 0.5 * r2 * X[t - 1, 3] + 0.25 * r2 * X[t - 1, 4] + e[3]
        x5 = -0.5 * r2 * X[t - 1, 3] + 0.5 * r2 * X[t - 1, 4] + e[4]
        return (x1, x2, x3, x4, x5)

    X = _run(spec.burn_in + spec.n, rng.standard_normal((3, 5)), step, DIVERGENCE_BOUND, 3)
    edges = [(1, 2, 2), (1, 3, 3), (1, 4, 2), (5, 4, 1), (4, 5, 1)]
    return X, _truth(_names(5), edges), 3


def _linear_5(spec, rng):
    return _five(spec, rng, nonlinear=False)


def _nonlinear_5(spec, rng):
    return _five(spec, rng, nonlinear=True)


EIGHT_EDGES = [(1, 3), (2, 3), (2, 4), (3, 5), (3, 6), (6, 7), (6, 8)]


def _nonlinear_8(spec, rng):
    r = np.array([3.9, 3.5, 3.62, 3.75, 3.65, 3.72, 3.57, 3.68])
    C = np.zeros((8, 8))
    for s, d in EIGHT_EDGES:
        C[d - 1, s - 1] = 0.35
    sd = _noise_sd(0.005, spec.params, "sd")

    def step(X, t):
        x = X[t - 1]
        return x * (r - r * x - C @ x) + sd * rng.standard_normal(8)

    X = _run(spec.burn_in + spec.n, rng.uniform(0, 1, (1, 8)), step, LOGISTIC_BOUND)
    return X, _truth(_names(8), [(s, d, 1) for s, d in EIGHT_EDGES]), 1


# ---------------------------------------------------------------------------
# random graphs


def nonlinearity(x):
    """``(1 + 5 x exp(-x^2 / 20)) x``."""
    return (1.0 + 5.0 * x * np.exp(-(x**2) / 20.0)) * x


def edge_budget(n_t: int) -> int:
    return int(math.floor(1.5 * n_t))


def contemporaneous_count(L: int, fraction: float) -> int:
    """Nearest integer to ``fraction * L``, halves rounded up."""
    return int(math.floor(fraction * L + 0.5 + 1e-12))


def _single_parent(pairs) -> bool:
    targets = [d for _, d in pairs]
    return len(targets) == len(set(targets))


def random_graph(
    n_t: int,
    L: int,
    m: int,
    contemp_fraction: float = 0.0,
    seed: int | np.random.SeedSequence = 0,
    forbid_contemporaneous_colliders: bool = True,
) -> CausalGraph:
    """``L`` distinct edges between distinct nodes, lags uniform on ``1..m``.

    ``contemporaneous_count(L, contemp_fraction)`` of them are contemporaneous.
    With the flag set, the contemporaneous part is rejection-sampled to be
    acyclic with at most one contemporaneous parent per node.
    """
    if n_t < 2 or m < 1:
        raise SimulationError("random graphs need n_t >= 2 and m >= 1")
    if not 0 <= contemp_fraction <= 1:
        raise SimulationError("contemp_fraction must lie in [0, 1]")
    n_c = contemporaneous_count(L, contemp_fraction)
    n_l = L - n_c
    lag_slots = n_t * (n_t - 1) * m
    pair_slots = n_t * (n_t - 1) // 2
    if n_l > lag_slots or n_c > pair_slots or L < 0:
        raise SimulationError(f"cannot place {L} edges on {n_t} nodes")
    if forbid_contemporaneous_colliders and n_c > n_t - 1:
        raise SimulationError("too many contemporaneous edges for a collider-free forest")
    rng = np.random.default_rng(seed)
    names = _names(n_t)
    for _ in range(MAX_GRAPH_ATTEMPTS):
        g = CausalGraph(names)
        for k in rng.choice(lag_slots, size=n_l, replace=False):
            lag, rest = divmod(int(k), n_t * (n_t - 1))
            s, off = divmod(rest, n_t - 1)
            d = off if off < s else off + 1
            g.add_lagged(s, d, lag + 1)
        pairs = []
        for k in rng.choice(pair_slots, size=n_c, replace=False):
            a, b = _unordered_pair(int(k), n_t)
            pairs.append((a, b) if rng.random() < 0.5 else (b, a))
        if forbid_contemporaneous_colliders and not _single_parent(pairs):
            continue
        if not _acyclic(pairs, n_t):
            continue
        for s, d in pairs:
            g.add_contemporaneous(s, d, FORWARD)
        return g
    raise SimulationError("random graph rejection budget exhausted")


def _unordered_pair(k: int, n: int) -> tuple[int, int]:
    for a in range(n):
        row = n - a - 1
        if k < row:
            return a, a + 1 + k
        k -= row
    raise IndexError(k)


def _acyclic(pairs, n: int) -> bool:
    children = {i: [] for i in range(n)}
    indeg = [0] * n
    for s, d in pairs:
        children[s].append(d)
        indeg[d] += 1
    stack = [i for i in range(n) if indeg[i] == 0]
    seen = 0
    while stack:
        u = stack.pop()
        seen += 1
        for v in children[u]:
            indeg[v] -= 1
            if indeg[v] == 0:
                stack.append(v)
    return seen == n


def _topological(graph: CausalGraph) -> list[int]:
    n = graph.n_nodes
    pairs = [(a, b) if mark == FORWARD else (b, a) for (a, b), mark in graph.contemporaneous.items()]
    children = {i: [] for i in range(n)}
    indeg = [0] * n
    for s, d in pairs:
        children[s].append(d)
        indeg[d] += 1
    order, ready = [], sorted(i for i in range(n) if indeg[i] == 0)
    while ready:
        u = ready.pop(0)
        order.append(u)
        for v in sorted(children[u]):
            indeg[v] -= 1
            if indeg[v] == 0:
                ready.append(v)
    return order


def simulate_graph(
    graph: CausalGraph,
    T: int,
    a: float,
    c: float,
    rng: np.random.Generator,
    nonlinear: bool = True,
) -> np.ndarray:
    """``x_j(t) = a x_j(t-1) + sum c f(x_i(t - lag)) + e_j(t)``, standard normal noise.

    Contemporaneous parents (lag 0) are evaluated in topological order.
    """
    f = nonlinearity if nonlinear else (lambda x: x)
    n = graph.n_nodes
    m = max([lag for _, _, lag in graph.lagged] + [1])
    parents = {j: [] for j in range(n)}
    for s, d, lag in graph.lagged:
        parents[d].append((s, lag))
    for (p, q), mark in graph.contemporaneous.items():
        s, d = (p, q) if mark == FORWARD else (q, p)
        parents[d].append((s, 0))
    order = _topological(graph)
    X = np.empty((T + m, n))
    X[:m] = rng.standard_normal((m, n))
    for t in range(m, T + m):
        e = rng.standard_normal(n)
        for j in order:
            v = a * X[t - 1, j] + e[j]
            for s, lag in parents[j]:
                v += c * f(X[t - lag, s])
            X[t, j] = v
        _check(X[t], DIVERGENCE_BOUND, t)
    return X[m:]


def _random_nonlinear(spec, rng):
    p = spec.params
    n_t = int(p.get("n_t", 20))
    m = int(p.get("m", 1))
    L = int(p.get("L", edge_budget(n_t)))
    graph = random_graph(n_t, L, m, 0.0, rng.integers(2**63))
    X = simulate_graph(
        graph, spec.burn_in + spec.n, p.get("a", 0.4), p.get("c", 0.4), rng,
        p.get("nonlinear", True),
    )
    return X, graph, m


def _contemporaneous_random(spec, rng):
    p = spec.params
    n_t = int(p.get("n_t", 5))
    m = int(p.get("m", 3))
    L = int(p.get("L", edge_budget(n_t)))
    graph = random_graph(n_t, L, m, p.get("contemp_fraction", 0.3), rng.integers(2**63), True)
    X = simulate_graph(
        graph, spec.burn_in + spec.n, p.get("a", 0.4), p.get("c", 0.4), rng,
        p.get("nonlinear", True),
    )
    return X, graph, m


_GENERATORS = {
    "logistic_1way": _logistic_1way,
    "logistic_2way": _logistic_2way,
    "stochastic_linear": _stochastic_linear,
    "stochastic_nonlinear": _stochastic_nonlinear,
    "fan_in_3": _fan_in,
    "fan_out_3": _fan_out,
    "confounder": _confounder,
    "mediator": _mediator,
    "synergistic_collider": _synergistic,
    "redundant_collider": _redundant,
    "sync_1way_intermediate": _sync_1way_intermediate,
    "sync_1way_strong": _sync_1way_strong,
    "sync_2way_strong": _sync_2way_strong,
    "moran": _moran,
    "linear_5": _linear_5,
    "nonlinear_5": _nonlinear_5,
    "nonlinear_8": _nonlinear_8,
    "random_nonlinear": _random_nonlinear,
    "contemporaneous_random": _contemporaneous_random,
}


def simulate(spec: BenchmarkSpec) -> Simulation:
    """Generate ``spec.n`` retained points; raises :class:`SimulationDiverged`."""
    rng = np.random.default_rng(spec.seed)
    X, truth, m = _GENERATORS[spec.system_id](spec, rng)
    X = X[spec.burn_in : spec.burn_in + spec.n]
    if len(X) != spec.n:
        raise SimulationError(f"generator returned {len(X)} rows, expected {spec.n}")
    return Simulation(TimeSeriesSystem(truth.names, X), truth, m)


def ground_truth(system_id: str, **params) -> tuple[CausalGraph, int]:
    """Truth graph and lag of a named system without simulating its data."""
    if system_id not in NAMED_SYSTEMS:
        raise SimulationError(f"{system_id!r} has no fixed ground truth")
    for seed in range(100):
        try:
            sim = simulate(BenchmarkSpec(system_id, n=10, burn_in=0, seed=seed, params=params))
        except SimulationDiverged:
            continue
        return sim.truth, sim.m_true
    raise SimulationError(f"{system_id} diverged for 100 seeds")
