"""Vertex connectivity of the boundary-augmented first approximation.

Connectivity is computed with Menger's theorem: local connectivities are unit
vertex-capacity max flows on the split graph (``v -> v_in, v_out``), and the
global value follows Even's reduction over the first ``kappa + 1`` vertices.
"""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Sequence

from .fractal import FractalSpec, GraphApprox, refine

__all__ = [
    "AugmentedGraph",
    "augment",
    "augment_graph",
    "adjacency",
    "local_vertex_connectivity",
    "vertex_connectivity",
    "min_vertex_separator",
    "Prop21Result",
    "prop21_check",
]


@dataclass(frozen=True)
class AugmentedGraph:
    """Simple graph G_m plus a clique on the boundary; ``added`` flags the new edges."""

    vertex_count: int
    edges: tuple[tuple[int, int], ...]
    added: tuple[bool, ...]
    boundary: tuple[int, ...]

    @property
    def added_edges(self) -> list[tuple[int, int]]:
        return [e for e, a in zip(self.edges, self.added) if a]

    def adjacency(self) -> list[set[int]]:
        return adjacency(self.vertex_count, self.edges)


def augment_graph(graph: GraphApprox) -> AugmentedGraph:
    base = {(u, v) for u, v, _ in graph.edges}
    extra = {
        (min(a, b), max(a, b))
        for a, b in itertools.combinations(graph.boundary, 2)
        if (min(a, b), max(a, b)) not in base
    }
    edges = tuple(sorted(base | extra))
    return AugmentedGraph(
        graph.vertex_count, edges, tuple(e in extra for e in edges), tuple(graph.boundary)
    )


def augment(spec: FractalSpec) -> AugmentedGraph:
    return augment_graph(refine(spec, 1))


def adjacency(n: int, edges: Iterable[Sequence[int]]) -> list[set[int]]:
    adj: list[set[int]] = [set() for _ in range(n)]
    for e in edges:
        u, v = e[0], e[1]
        if u != v:
            adj[u].add(v)
            adj[v].add(u)
    return adj


def _components(adj: list[set[int]], removed: set[int]) -> int:
    seen = set(removed)
    count = 0
    for s in range(len(adj)):
        if s in seen:
            continue
        count += 1
        seen.add(s)
        todo = deque([s])
        while todo:
            u = todo.popleft()
            for v in adj[u]:
                if v not in seen:
                    seen.add(v)
                    todo.append(v)
    return count


class _SplitNetwork:
    """Unit vertex-capacity flow network: node 2v is v_in, 2v+1 is v_out."""

    def __init__(self, adj: list[set[int]]) -> None:
        self.n = len(adj)
        self.out: list[list[int]] = [[] for _ in range(2 * self.n)]
        self.cap: dict[tuple[int, int], int] = {}
        big = self.n
        for v in range(self.n):
            self._add(2 * v, 2 * v + 1, 1)
            for w in sorted(adj[v]):
                self._add(2 * v + 1, 2 * w, big)

    def _add(self, a: int, b: int, c: int) -> None:
        if (a, b) not in self.cap:
            self.out[a].append(b)
            self.out[b].append(a)
            self.cap[(a, b)] = 0
            self.cap.setdefault((b, a), 0)
        self.cap[(a, b)] += c

    def max_flow(self, s: int, t: int, cutoff: int | None) -> tuple[int, set[int]]:
        cap = dict(self.cap)
        cap[(2 * s, 2 * s + 1)] = cap[(2 * t, 2 * t + 1)] = self.n
        out = self.out
        source, sink = 2 * s + 1, 2 * t
        flow = 0
        while cutoff is None or flow < cutoff:
            parent = {source: -1}
            todo = deque([source])
            while todo and sink not in parent:
                a = todo.popleft()
                for b in out[a]:
                    if b not in parent and cap[(a, b)] > 0:
                        parent[b] = a
                        todo.append(b)
            if sink not in parent:
                break
            b = sink
            while parent[b] != -1:
                a = parent[b]
                cap[(a, b)] -= 1
                cap[(b, a)] += 1
                b = a
            flow += 1
        else:
            return flow, set()
        reach = {source}
        todo = deque([source])
        while todo:
            a = todo.popleft()
            for b in out[a]:
                if b not in reach and cap[(a, b)] > 0:
                    reach.add(b)
                    todo.append(b)
        return flow, {v for v in range(self.n) if 2 * v in reach and 2 * v + 1 not in reach}


def local_vertex_connectivity(
    adj: list[set[int]], s: int, t: int, cutoff: int | None = None
) -> tuple[int, set[int]]:
    """Max number of internally disjoint s-t paths for non-adjacent s, t.

    Returns ``(flow, separator)``; when the flow stops below ``cutoff`` the
    separator is a minimum s-t vertex cut, otherwise it is empty.
    """
    if s == t or t in adj[s]:
        raise ValueError("local connectivity needs two distinct non-adjacent vertices")
    return _SplitNetwork(adj).max_flow(s, t, cutoff)


def min_vertex_separator(adj: list[set[int]]) -> tuple[int, set[int]]:
    """Vertex connectivity and a minimum separator (empty for complete graphs)."""
    n = len(adj)
    if n < 2:
        raise ValueError("vertex connectivity needs at least two vertices")
    if _components(adj, set()) > 1:
        return 0, set()
    if all(len(a) == n - 1 for a in adj):
        return n - 1, set()
    v = min(range(n), key=lambda x: (len(adj[x]), x))
    best, witness = len(adj[v]), set(adj[v])
    net = _SplitNetwork(adj)
    i = 0
    while i <= best and i < n:
        for j in range(i + 1, n):
            if j in adj[i]:
                continue
            f, cut = net.max_flow(i, j, best)
            if f < best:
                best, witness = f, cut
        i += 1
    return best, witness


def vertex_connectivity(g) -> int:
    """Vertex connectivity of an :class:`AugmentedGraph`, a :class:`GraphApprox` or an adjacency list."""
    return min_vertex_separator(_as_adjacency(g))[0]


def _as_adjacency(g) -> list[set[int]]:
    if isinstance(g, AugmentedGraph):
        return g.adjacency()
    if isinstance(g, GraphApprox):
        return adjacency(g.vertex_count, g.edges)
    return [set(a) for a in g]


@dataclass(frozen=True)
class Prop21Result:
    """Outcome of the connectivity test: ``kappa < |V_0|`` forces degeneracy."""

    kappa: int | None
    boundary_size: int
    verdict: str
    separator: tuple[int, ...] = ()

    def summary(self) -> str:
        if self.verdict == "trivial":
            return "no interior vertices: trivial, criterion inapplicable"
        rel = "<" if self.kappa < self.boundary_size else ">="
        what = (
            "degenerate"
            if self.verdict == "degenerate"
            else "necessary condition passed (not a non-degeneracy certificate)"
        )
        return f"κ={self.kappa} {rel} |V_0|={self.boundary_size}: {what}"

    def to_dict(self) -> dict:
        return {
            "kappa": self.kappa,
            "boundary_size": self.boundary_size,
            "verdict": self.verdict,
            "separator": list(self.separator),
        }


def prop21_check(spec: FractalSpec) -> Prop21Result:
    n0 = spec.boundary_size
    if not spec.interior:
        return Prop21Result(None, n0, "trivial")
    kappa, sep = min_vertex_separator(augment(spec).adjacency())
    if kappa < n0:
        return Prop21Result(kappa, n0, "degenerate", tuple(sorted(sep)))
    return Prop21Result(kappa, n0, "necessary-condition-passed")
