"""Contemporaneous edge discovery and orientation from GP_SIC fits.

Adjacencies come from two rounds of fits per target.  The first regresses
each series on all lags plus the other series' current values; it recovers
contemporaneous neighbours but may also pick up lagged parents that only
appear because a contemporaneous collider is conditioned on.  The second
refits each target on its first-round lagged parents alone, which drops those
spurious parents.  Orientation then reads lagged triples
``a(t - tau) -> c - b``: a lagged edge ``a -> b`` present in round one but
absent after the refit marks ``c`` as a collider, while its absence from both
rounds marks ``c -> b``.  Finally, since fully contemporaneous colliders are
excluded by assumption, ``x -> c - b`` propagates to ``c -> b``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

from .data import TimeSeriesSystem, embed_contemporaneous, embed_full, standardize
from .graph import BACKWARD, CONFLICTED, FORWARD, UNDIRECTED, CausalGraph
from .gpsic import THRESHOLD, gpsic_parent_set, optimize_penalized

logger = logging.getLogger(__name__)

COLLIDER = "collider"
CHAIN = "chain"
NO_CONTEMP_COLLIDER = "no-contemp-collider"


@dataclass
class OrientationTrace:
    """Record of the orientation phase.

    ``rules_fired`` holds ``(tag, pattern, (src, dst))`` where ``pattern`` is
    the triple ``(a, tau, c, b)`` for lagged rules or ``(x, c, b)`` for the
    contemporaneous rule.
    """

    triples_considered: list = field(default_factory=list)
    triples_filtered: list = field(default_factory=list)
    rules_fired: list = field(default_factory=list)
    conflicts: list = field(default_factory=list)
    n_gp_fits: int = 0


@dataclass(frozen=True)
class AdjacencyResult:
    g_prime: CausalGraph
    g_double: CausalGraph
    g_triple: CausalGraph
    n_fits: int


def contemp_adjacencies(
    system: TimeSeriesSystem,
    m: int,
    seed: int = 0,
    schedule=None,
    threshold: float = THRESHOLD,
    adjacency_rule: str = "or",
    standardize_input: bool = True,
) -> AdjacencyResult:
    """Both fitting rounds; at most ``2 * n_t`` GP fits.

    ``adjacency_rule`` decides a contemporaneous pair from the two targets'
    first-round fits: ``"or"`` needs either to select the other's current
    value, ``"and"`` needs both.  Targets without first-round lagged parents
    skip the refit.
    """
    if adjacency_rule not in ("or", "and"):
        raise ValueError(f"adjacency_rule must be 'or' or 'and', got {adjacency_rule!r}")
    if standardize_input:
        system = standardize(system)
    n_t = system.n_series
    names = system.names
    g1 = CausalGraph(names)
    selected: dict[tuple[int, int], int] = {}
    n_fits = 0
    for b in range(n_t):
        design = embed_contemporaneous(system, b, m)
        fit = optimize_penalized(design, schedule, seed)
        n_fits += 1
        for s, lag in gpsic_parent_set(design, fit, threshold):
            if lag == 0:
                key = (min(s, b), max(s, b))
                selected[key] = selected.get(key, 0) + 1
            else:
                g1.add_lagged(s, b, lag)
    need = 1 if adjacency_rule == "or" else 2
    for (a, b), count in sorted(selected.items()):
        if count >= need:
            g1.add_contemporaneous(a, b, UNDIRECTED)

    g2 = CausalGraph(names)
    for b in range(n_t):
        parents = g1.lagged_parents(b)
        if not parents:
            continue
        full = embed_full(system, b, m)
        cols = [j for j, entry in enumerate(full.column_map) if entry in parents]
        design = full.subset(cols)
        fit = optimize_penalized(design, schedule, seed)
        n_fits += 1
        for s, lag in gpsic_parent_set(design, fit, threshold):
            g2.add_lagged(s, b, lag)

    g3 = CausalGraph(names, set(g2.lagged), dict(g1.contemporaneous))
    return AdjacencyResult(g1, g2, g3, n_fits)


def _unshielded_triples(g_triple: CausalGraph, require_unshielded: bool) -> list:
    triples = []
    for a, c, tau in sorted(g_triple.lagged):
        for b in range(g_triple.n_nodes):
            if b == c or not g_triple.adjacent_contemporaneous(c, b):
                continue
            if require_unshielded and g_triple.has_lagged(a, b, tau):
                continue
            triples.append((a, tau, c, b))
    return triples


def _ambiguous(triple, g_triple: CausalGraph) -> bool:
    # another contemporaneous neighbour d of b is also a lagged child of a at tau
    a, tau, c, b = triple
    for d in range(g_triple.n_nodes):
        if d in (c, b):
            continue
        if g_triple.has_lagged(a, d, tau) and g_triple.adjacent_contemporaneous(d, b):
            return True
    return False


class _Orienter:
    def __init__(self, graph: CausalGraph, trace: OrientationTrace):
        self.graph = graph
        self.trace = trace

    def orient(self, src: int, dst: int, tag: str, pattern) -> bool:
        """Direct ``src -> dst``; returns True if the mark changed."""
        self.trace.rules_fired.append((tag, pattern, (src, dst)))
        current = self.graph.contemporaneous_mark(src, dst)
        if current == FORWARD or current == CONFLICTED:
            return False
        if current == BACKWARD:
            self.graph.add_contemporaneous(src, dst, CONFLICTED)
            self.trace.conflicts.append((min(src, dst), max(src, dst)))
            return True
        self.graph.add_contemporaneous(src, dst, FORWARD)
        return True


def orient(
    g_prime: CausalGraph,
    g_triple: CausalGraph,
    chain_rule: str = "proof",
    fixpoint: bool = True,
) -> tuple[CausalGraph, OrientationTrace]:
    """Orient the contemporaneous edges of ``g_triple``; lagged edges are untouched.

    ``chain_rule="proof"`` orients ``c -> b`` for an unshielded triple whose
    ``a -> b`` edge is missing from both graphs.  ``chain_rule="literal"``
    instead scans every triple, shielded or not, and orients ``c -> b`` when
    ``a -> b`` is present in both.  With ``fixpoint=False`` the
    contemporaneous rule makes a single pass.
    """
    if chain_rule not in ("proof", "literal"):
        raise ValueError(f"chain_rule must be 'proof' or 'literal', got {chain_rule!r}")
    graph = CausalGraph(
        g_triple.names,
        set(g_triple.lagged),
        {k: UNDIRECTED for k in g_triple.contemporaneous},
    )
    trace = OrientationTrace()
    orienter = _Orienter(graph, trace)

    candidates = _unshielded_triples(g_triple, require_unshielded=chain_rule == "proof")
    for t in candidates:
        if _ambiguous(t, g_triple):
            trace.triples_filtered.append(t)
        else:
            trace.triples_considered.append(t)

    for a, tau, c, b in trace.triples_considered:
        in_first = g_prime.has_lagged(a, b, tau)
        in_final = g_triple.has_lagged(a, b, tau)
        if in_first and not in_final:
            orienter.orient(b, c, COLLIDER, (a, tau, c, b))
        elif chain_rule == "proof" and not in_first and not in_final:
            orienter.orient(c, b, CHAIN, (a, tau, c, b))
        elif chain_rule == "literal" and in_first and in_final:
            orienter.orient(c, b, CHAIN, (a, tau, c, b))

    changed = True
    while changed:
        changed = False
        undirected = sorted(k for k, v in graph.contemporaneous.items() if v == UNDIRECTED)
        proposals = []
        for u, v in undirected:
            for c, b in ((u, v), (v, u)):
                for x in range(graph.n_nodes):
                    if x in (c, b):
                        continue
                    if graph.contemporaneous_mark(x, c) == FORWARD:
                        proposals.append((c, b, (x, c, b)))
                        break
        for c, b, pattern in proposals:
            changed |= orienter.orient(c, b, NO_CONTEMP_COLLIDER, pattern)
        if not fixpoint:
            break
    return graph, trace


def contemp_graph(
    system: TimeSeriesSystem,
    m: int,
    seed: int = 0,
    schedule=None,
    threshold: float = THRESHOLD,
    chain_rule: str = "proof",
    adjacency_rule: str = "or",
    fixpoint: bool = True,
    standardize_input: bool = True,
) -> tuple[CausalGraph, OrientationTrace]:
    adj = contemp_adjacencies(
        system, m, seed, schedule, threshold, adjacency_rule, standardize_input
    )
    graph, trace = orient(adj.g_prime, adj.g_triple, chain_rule, fixpoint)
    trace.n_gp_fits = adj.n_fits
    return graph, trace
