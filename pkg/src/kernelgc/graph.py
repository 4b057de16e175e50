"""Lag-annotated causal graphs and their JSON / DOT / CSV forms."""

from __future__ import annotations

import csv
import io
import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

# contemporaneous marks, read left to right for the key (a, b) with a < b
UNDIRECTED = "--"
FORWARD = "->"
BACKWARD = "<-"
CONFLICTED = "<->"
MARKS = (UNDIRECTED, FORWARD, BACKWARD, CONFLICTED)


class GraphError(ValueError):
    pass


@dataclass
class CausalGraph:
    """Causal graph over ``names``.

    ``lagged`` holds ``(source, target, lag)`` triples with ``lag >= 1``;
    ``lag`` is ``None`` for methods that only decide at the series-pair level.
    ``contemporaneous`` maps an index pair ``(a, b)`` with ``a < b`` to one of
    :data:`MARKS`.
    """

    names: tuple[str, ...]
    lagged: set = field(default_factory=set)
    contemporaneous: dict = field(default_factory=dict)

    def __post_init__(self):
        self.names = tuple(self.names)
        for src, dst, lag in self.lagged:
            self._check_node(src), self._check_node(dst)
            if lag is not None and lag < 1:
                raise GraphError("lagged edges need lag >= 1")
        for (a, b), mark in self.contemporaneous.items():
            if not a < b:
                raise GraphError("contemporaneous keys must satisfy a < b")
            if mark not in MARKS:
                raise GraphError(f"unknown mark {mark!r}")

    @property
    def n_nodes(self) -> int:
        return len(self.names)

    def _check_node(self, i):
        if not 0 <= i < len(self.names):
            raise GraphError(f"node index {i} out of range")

    def copy(self) -> "CausalGraph":
        return CausalGraph(self.names, set(self.lagged), dict(self.contemporaneous))

    def add_lagged(self, src: int, dst: int, lag: int | None = None) -> None:
        self._check_node(src), self._check_node(dst)
        if lag is not None and lag < 1:
            raise GraphError("lagged edges need lag >= 1")
        self.lagged.add((int(src), int(dst), None if lag is None else int(lag)))

    def has_lagged(self, src: int, dst: int, lag: int | None) -> bool:
        return (src, dst, lag) in self.lagged

    def add_contemporaneous(self, a: int, b: int, mark: str = UNDIRECTED) -> None:
        """Add ``a - b``; a directed mark is read as ``a -> b``."""
        if a == b:
            raise GraphError("no self pairs among contemporaneous edges")
        self._check_node(a), self._check_node(b)
        key, mark = _key_and_mark(a, b, mark)
        self.contemporaneous[key] = mark

    def contemporaneous_mark(self, a: int, b: int) -> str | None:
        """Mark of the pair read from ``a`` to ``b`` (``'->'`` means ``a -> b``)."""
        key = (min(a, b), max(a, b))
        mark = self.contemporaneous.get(key)
        if mark is None or a < b:
            return mark
        return {FORWARD: BACKWARD, BACKWARD: FORWARD}.get(mark, mark)

    def is_directed(self, a: int, b: int) -> bool:
        return self.contemporaneous_mark(a, b) == FORWARD

    def adjacent_contemporaneous(self, a: int, b: int) -> bool:
        return (min(a, b), max(a, b)) in self.contemporaneous

    def summary_matrix(self) -> np.ndarray:
        """Boolean ``A[a, b]``: some lag of ``a`` drives ``b``; diagonal forced False."""
        A = np.zeros((self.n_nodes, self.n_nodes), dtype=bool)
        for src, dst, _ in self.lagged:
            A[src, dst] = True
        np.fill_diagonal(A, False)
        return A

    def lagged_parents(self, target: int) -> set:
        return {(s, lag) for s, d, lag in self.lagged if d == target}

    def skeleton(self) -> tuple[frozenset, frozenset]:
        return frozenset(self.lagged), frozenset(self.contemporaneous)

    def __eq__(self, other):
        if not isinstance(other, CausalGraph):
            return NotImplemented
        return (
            self.names == other.names
            and self.lagged == other.lagged
            and self.contemporaneous == other.contemporaneous
        )

    # serialisation

    def to_dict(self) -> dict:
        n = self.names
        lagged = sorted(self.lagged, key=lambda e: (e[0], e[1], -1 if e[2] is None else e[2]))
        return {
            "nodes": list(n),
            "lagged": [{"src": n[s], "dst": n[d], "lag": lag} for s, d, lag in lagged],
            "contemporaneous": [
                {"a": n[a], "b": n[b], "mark": mark}
                for (a, b), mark in sorted(self.contemporaneous.items())
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "CausalGraph":
        names = tuple(d["nodes"])
        idx = {name: i for i, name in enumerate(names)}
        try:
            g = cls(names)
            for e in d.get("lagged", []):
                g.add_lagged(idx[e["src"]], idx[e["dst"]], e.get("lag"))
            for e in d.get("contemporaneous", []):
                g.add_contemporaneous(idx[e["a"]], idx[e["b"]], e.get("mark", UNDIRECTED))
        except KeyError as exc:
            raise GraphError(f"unknown node or missing field {exc}") from None
        return g

    @classmethod
    def from_json(cls, text: str) -> "CausalGraph":
        return cls.from_dict(json.loads(text))

    def to_dot(self) -> str:
        q = _dot_id
        lines = ["digraph G {"]
        lines += [f"  {q(name)};" for name in self.names]
        for s, d, lag in sorted(self.lagged, key=lambda e: (e[0], e[1], e[2] or 0)):
            attr = f' [label="τ={lag}"]' if lag is not None else ""
            lines.append(f"  {q(self.names[s])} -> {q(self.names[d])}{attr};")
        for (a, b), mark in sorted(self.contemporaneous.items()):
            src, dst = (b, a) if mark == BACKWARD else (a, b)
            style = {
                UNDIRECTED: "style=dashed, dir=none",
                FORWARD: "style=dashed",
                BACKWARD: "style=dashed",
                CONFLICTED: "style=dashed, dir=both",
            }[mark]
            lines.append(f"  {q(self.names[src])} -> {q(self.names[dst])} [{style}];")
        lines.append("}")
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["src", "dst", "lag", "type", "mark"])
        for s, d, lag in sorted(self.lagged, key=lambda e: (e[0], e[1], e[2] or 0)):
            w.writerow([self.names[s], self.names[d], "" if lag is None else lag, "lagged", "->"])
        for (a, b), mark in sorted(self.contemporaneous.items()):
            w.writerow([self.names[a], self.names[b], 0, "contemporaneous", mark])
        return buf.getvalue()


def _key_and_mark(a: int, b: int, mark: str) -> tuple[tuple[int, int], str]:
    if mark not in MARKS:
        raise GraphError(f"unknown mark {mark!r}")
    if a < b:
        return (a, b), mark
    flipped = {FORWARD: BACKWARD, BACKWARD: FORWARD}.get(mark, mark)
    return (b, a), flipped


_ID = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")


def _dot_id(name: str) -> str:
    if _ID.match(name):
        return name
    return '"' + name.replace('"', r"\"") + '"'


def graph_from_matrix(names: Iterable[str], A) -> CausalGraph:
    """Summary graph (lag ``None``) from a boolean adjacency ``A[src, dst]``."""
    g = CausalGraph(tuple(names))
    for s, d in zip(*np.nonzero(np.asarray(A))):
        if s != d:
            g.add_lagged(int(s), int(d), None)
    return g


def export_graph(graph: CausalGraph, fmt: str, path: str | Path) -> Path:
    """Write ``graph`` as ``json``, ``dot`` or ``csv`` (edge list)."""
    writers = {"json": graph.to_json, "dot": graph.to_dot, "csv": graph.to_csv}
    if fmt not in writers:
        raise GraphError(f"unknown graph format {fmt!r}")
    path = Path(path)
    try:
        path.write_text(writers[fmt](), encoding="utf-8")
    except OSError as exc:
        raise GraphError(f"cannot write {path}: {exc}") from exc
    return path


def load_graph(path: str | Path) -> CausalGraph:
    return CausalGraph.from_json(Path(path).read_text(encoding="utf-8"))
