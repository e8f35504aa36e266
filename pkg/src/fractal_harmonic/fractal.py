"""Finitely ramified cell structures and their graph approximations.

A :class:`FractalSpec` describes the first-level graph G_1 of a self-similar
set: which vertices make up each cell, listed slot by slot, where slot ``j`` of
cell ``i`` is the image of boundary vertex ``q_j`` under the cell map ``F_i``.
:func:`refine` substitutes that pattern into itself to produce G_m.

Vertex numbering conventions (shared by every module):

* boundary vertices come first, ``q_1..q_n0`` -> ids ``0..n0-1``;
* remaining vertices are numbered by first appearance, scanning cells in
  order (level m: words in lexicographic order) and slots in order;
* for SG_k, ``q_1`` is the apex, ``q_2`` bottom-left, ``q_3`` bottom-right,
  and cells are numbered row by row from the bottom-left, so cell 0 holds
  ``q_2``, cell ``k-1`` holds ``q_3`` and the last cell holds ``q_1``.
"""

from __future__ import annotations

import hashlib
import itertools
import json
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Hashable, Iterable, Iterator, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from .linalg import RatMatrix, to_rat

Word = tuple[int, ...]

__all__ = [
    "Word",
    "SpecError",
    "FractalSpec",
    "GraphApprox",
    "spec_from_points",
    "gasket_spec",
    "refine",
    "fixture",
    "FIXTURES",
    "spec_to_dict",
    "spec_from_dict",
    "save_spec",
    "load_spec",
    "spec_hash",
    "parse_word",
    "format_word",
    "iter_words",
]


class SpecError(ValueError):
    """Invalid spec; ``field`` names the offending JSON field."""

    def __init__(self, field: str, message: str) -> None:
        super().__init__(f"{field}: {message}")
        self.field = field
        self.message = message


def _pair(u: int, v: int) -> tuple[int, int]:
    return (u, v) if u < v else (v, u)


@dataclass(frozen=True)
class FractalSpec:
    name: str
    boundary_size: int
    vertex_count: int
    boundary: tuple[int, ...]
    cells: tuple[tuple[int, ...], ...]
    conductances: Mapping[tuple[int, int], Fraction] = field(default_factory=dict)
    draw_coords: Mapping[int, tuple[Fraction, Fraction]] = field(default_factory=dict)
    renorm_override: Fraction | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "boundary", tuple(self.boundary))
        object.__setattr__(self, "cells", tuple(tuple(c) for c in self.cells))
        object.__setattr__(
            self,
            "conductances",
            {_pair(*k): to_rat(v) for k, v in sorted(self.conductances.items())},
        )
        object.__setattr__(
            self,
            "draw_coords",
            {int(k): (to_rat(x), to_rat(y)) for k, (x, y) in sorted(self.draw_coords.items())},
        )
        if self.renorm_override is not None:
            object.__setattr__(self, "renorm_override", to_rat(self.renorm_override))
        self.validate()

    @property
    def cell_count(self) -> int:
        return len(self.cells)

    @property
    def interior(self) -> list[int]:
        b = set(self.boundary)
        return [v for v in range(self.vertex_count) if v not in b]

    def conductance(self, u: int, v: int) -> Fraction:
        return self.conductances.get(_pair(u, v), Fraction(1))

    @property
    def unit_conductances(self) -> bool:
        return all(c == 1 for c in self.conductances.values())

    def corner_cells(self) -> dict[int, int]:
        """Map boundary slot j -> index of the cell fixing q_j (``F_i q_j = q_j``)."""
        out = {}
        for i, cell in enumerate(self.cells):
            for j, v in enumerate(cell):
                if v == self.boundary[j] and j not in out:
                    out[j] = i
        return out

    def validate(self) -> None:
        n0 = self.boundary_size
        if not isinstance(n0, int) or n0 < 1:
            raise SpecError("boundary_size", "must be a positive integer")
        if not isinstance(self.vertex_count, int) or self.vertex_count < 1:
            raise SpecError("vertex_count", "must be a positive integer")
        if len(self.boundary) != n0:
            raise SpecError("boundary", f"expected {n0} ids, got {len(self.boundary)}")
        if len(set(self.boundary)) != n0:
            raise SpecError("boundary", "boundary ids must be distinct")
        for b in self.boundary:
            if not isinstance(b, int) or not 0 <= b < self.vertex_count:
                raise SpecError("boundary", f"invalid vertex id {b!r}")
        if not self.cells:
            raise SpecError("cells", "at least one cell is required")
        seen = set()
        for i, cell in enumerate(self.cells):
            if len(cell) != n0:
                raise SpecError(
                    f"cells[{i}]", f"cell arity mismatch: {len(cell)} entries, boundary_size {n0}"
                )
            for v in cell:
                if not isinstance(v, int) or not 0 <= v < self.vertex_count:
                    raise SpecError(f"cells[{i}]", f"invalid vertex id {v!r}")
            if len(set(cell)) != n0:
                raise SpecError(f"cells[{i}]", "cell entries must be distinct")
            seen.update(cell)
        missing = sorted(set(range(self.vertex_count)) - seen)
        if missing:
            raise SpecError("cells", f"vertices {missing[:8]} belong to no cell")
        within = set()
        for cell in self.cells:
            within.update(_pair(u, v) for u, v in itertools.combinations(cell, 2))
        for (u, v), c in self.conductances.items():
            if (u, v) not in within:
                raise SpecError("conductances", f"pair ({u}, {v}) is not a within-cell pair")
            if c <= 0:
                raise SpecError("conductances", f"pair ({u}, {v}) has non-positive conductance")
        for v in self.draw_coords:
            if not 0 <= v < self.vertex_count:
                raise SpecError("draw_coords", f"invalid vertex id {v!r}")
        if self.renorm_override is not None and self.renorm_override <= 0:
            raise SpecError("renorm_override", "must be positive")
        if not _connected(self.vertex_count, within):
            raise SpecError("cells", "spec graph disconnected")


def _connected(n: int, edges: Iterable[tuple[int, int]]) -> bool:
    adj: list[list[int]] = [[] for _ in range(n)]
    for u, v in edges:
        adj[u].append(v)
        adj[v].append(u)
    seen = {0}
    todo = deque([0])
    while todo:
        u = todo.popleft()
        for v in adj[u]:
            if v not in seen:
                seen.add(v)
                todo.append(v)
    return len(seen) == n


@dataclass(frozen=True)
class GraphApprox:
    """The level-m graph G_m of a spec."""

    level: int
    vertex_count: int
    edges: tuple[tuple[int, int, Fraction], ...]
    boundary: tuple[int, ...]
    cell_vertices: Mapping[Word, tuple[int, ...]]

    @property
    def interior(self) -> list[int]:
        b = set(self.boundary)
        return [v for v in range(self.vertex_count) if v not in b]

    @property
    def cell_count(self) -> int:
        return len(self.cell_vertices)

    def neighbors(self) -> list[list[tuple[int, Fraction]]]:
        adj: list[list[tuple[int, Fraction]]] = [[] for _ in range(self.vertex_count)]
        for u, v, c in self.edges:
            adj[u].append((v, c))
            adj[v].append((u, c))
        return adj

    def laplacian_exact(self) -> RatMatrix:
        n = self.vertex_count
        rows = [[Fraction(0)] * n for _ in range(n)]
        for u, v, c in self.edges:
            rows[u][v] -= c
            rows[v][u] -= c
            rows[u][u] += c
            rows[v][v] += c
        return RatMatrix(n, n, tuple(tuple(r) for r in rows))

    def laplacian_sparse(self) -> sp.csr_matrix:
        n = self.vertex_count
        if not self.edges:
            return sp.csr_matrix((n, n))
        u, v, c = zip(*self.edges)
        c = np.array([float(x) for x in c])
        W = sp.coo_matrix((np.r_[c, c], (np.r_[u, v], np.r_[v, u])), shape=(n, n)).tocsr()
        return (sp.diags(np.asarray(W.sum(axis=1)).ravel()) - W).tocsr()

    def energy(self, values: Sequence) -> Fraction | float:
        """Raw (unrenormalized) edge sum ``sum c_xy (f(x) - f(y))^2``."""
        return sum((c * (values[u] - values[v]) ** 2 for u, v, c in self.edges), 0 * values[0])

    def cell_energy(self, values: Sequence, prefix: Word) -> Fraction | float:
        """Raw energy of the edges inside level-m cells whose word starts with ``prefix``."""
        m = len(prefix)
        inside = set()
        for w, verts in self.cell_vertices.items():
            if w[:m] == prefix:
                inside.update(_pair(a, b) for a, b in itertools.combinations(verts, 2))
        return sum(
            (c * (values[u] - values[v]) ** 2 for u, v, c in self.edges if (u, v) in inside),
            0 * values[0],
        )

    def to_dict(self) -> dict:
        return {
            "level": self.level,
            "vertex_count": self.vertex_count,
            "boundary": list(self.boundary),
            "edges": [[u, v, str(c)] for u, v, c in self.edges],
            "cells": {format_word(w): list(t) for w, t in self.cell_vertices.items()},
        }


def spec_from_points(
    name: str,
    boundary_points: Sequence[Hashable],
    cell_points: Sequence[Sequence[Hashable]],
    draw: Mapping[Hashable, tuple] | None = None,
) -> FractalSpec:
    """Build a spec from cells given as tuples of hashable point labels.

    Points are identified by label equality (exact lattice coordinates for the
    built-in sets), never by floating-point geometry.
    """
    ids: dict[Hashable, int] = {}
    for p in boundary_points:
        ids.setdefault(p, len(ids))
    for cell in cell_points:
        for p in cell:
            ids.setdefault(p, len(ids))
    coords = {}
    if draw:
        coords = {ids[p]: xy for p, xy in draw.items() if p in ids}
    return FractalSpec(
        name=name,
        boundary_size=len(boundary_points),
        vertex_count=len(ids),
        boundary=tuple(ids[p] for p in boundary_points),
        cells=tuple(tuple(ids[p] for p in c) for c in cell_points),
        draw_coords=coords,
    )


def _sg_cell(a: int, b: int) -> tuple[tuple[int, int], ...]:
    # lattice point (a, b) sits at a*e1 + b*e2 with e2 pointing to the apex
    return ((a, b + 1), (a, b), (a + 1, b))


def gasket_spec(k: int) -> FractalSpec:
    """First-level cell structure of the level-k Sierpinski gasket SG_k."""
    if not isinstance(k, int) or k < 2:
        raise ValueError(f"SG_k needs an integer k >= 2, got {k!r}")
    cells = [_sg_cell(a, b) for b in range(k) for a in range(k - b)]
    boundary = [(0, k), (0, 0), (k, 0)]
    draw = {
        (a, b): (Fraction(2 * a + b, 2 * k), Fraction(b, k))
        for b in range(k + 1)
        for a in range(k + 1 - b)
    }
    return spec_from_points(f"sg:{k}", boundary, cells, draw)


def _vicsek() -> FractalSpec:
    corners = [(0, 0), (1, 0), (1, 1), (0, 1)]
    cells = [[(x + 2 * cx, y + 2 * cy) for x, y in corners] for cx, cy in corners]
    cells.append([(x + 1, y + 1) for x, y in corners])
    draw = {p: (Fraction(p[0], 3), Fraction(p[1], 3)) for c in cells for p in c}
    return spec_from_points("vicsek", [(3 * x, 3 * y) for x, y in corners], cells, draw)


def _hexagasket3() -> FractalSpec:
    # ring of six SG_3 cells with the shared centre point split per cell
    ring = [(0, 2), (0, 1), (0, 0), (1, 0), (2, 0), (1, 1)]
    cells = []
    for idx, (a, b) in enumerate(ring):
        pts = []
        for p in _sg_cell(a, b):
            pts.append((p, idx) if p == (1, 1) else (p, None))
        cells.append(pts)
    boundary = [((0, 3), None), ((0, 0), None), ((3, 0), None)]
    return spec_from_points("hexagasket3", boundary, cells)


FIXTURES = ("vicsek", "hexagasket3", "sg:<k>")


def fixture(name: str) -> FractalSpec:
    """Built-in specs: ``"vicsek"``, ``"hexagasket3"`` or ``"sg:<k>"``."""
    if name == "vicsek":
        return _vicsek()
    if name == "hexagasket3":
        return _hexagasket3()
    if name.startswith("sg:"):
        try:
            k = int(name[3:])
        except ValueError:
            raise KeyError(f"unknown fixture {name!r}") from None
        return gasket_spec(k)
    raise KeyError(f"unknown fixture {name!r}; known: {', '.join(FIXTURES)}")


def iter_words(cell_count: int, m: int) -> Iterator[Word]:
    return itertools.product(range(cell_count), repeat=m)


def format_word(w: Word) -> str:
    return ".".join(str(i) for i in w)


def parse_word(s: str) -> Word:
    s = s.strip()
    return tuple(int(x) for x in s.split(".")) if s else ()


def refine(spec: FractalSpec, m: int) -> GraphApprox:
    """Build G_m by substituting the spec's cell pattern into every level-(m-1) cell.

    Identification is purely combinatorial: the boundary slot ``j`` of a child
    copy is the parent's ``j``-th cell vertex; every other spec vertex gets a
    fresh id per parent cell.  An edge inside cell ``w + (i,)`` carries the
    spec conductance of the corresponding pair in cell ``i``; parallel edges
    are merged by summing conductances.
    """
    if m < 0:
        raise ValueError("level must be >= 0")
    n0 = spec.boundary_size
    bslot = {b: j for j, b in enumerate(spec.boundary)}
    interior = spec.interior
    cells: dict[Word, tuple[int, ...]] = {(): tuple(range(n0))}
    count = n0
    for _ in range(m):
        nxt: dict[Word, tuple[int, ...]] = {}
        for w, parent in cells.items():
            local = {b: parent[j] for b, j in bslot.items()}
            for v in interior:
                local[v] = count
                count += 1
            for i, cell in enumerate(spec.cells):
                nxt[w + (i,)] = tuple(local[v] for v in cell)
        cells = nxt

    relabel = {j: j for j in range(n0)}
    for w in sorted(cells):
        for v in cells[w]:
            if v not in relabel:
                relabel[v] = len(relabel)
    cells = {w: tuple(relabel[v] for v in cells[w]) for w in sorted(cells)}

    weights: dict[tuple[int, int], Fraction] = {}
    for w, verts in cells.items():
        pattern = spec.cells[w[-1]] if w else None
        for s, t in itertools.combinations(range(n0), 2):
            c = spec.conductance(pattern[s], pattern[t]) if pattern else Fraction(1)
            key = _pair(verts[s], verts[t])
            weights[key] = weights.get(key, Fraction(0)) + c
    edges = tuple((u, v, c) for (u, v), c in sorted(weights.items()))
    return GraphApprox(
        level=m,
        vertex_count=len(relabel),
        edges=edges,
        boundary=tuple(range(n0)),
        cell_vertices=cells,
    )


def spec_to_dict(spec: FractalSpec) -> dict:
    d: dict = {
        "name": spec.name,
        "boundary_size": spec.boundary_size,
        "vertex_count": spec.vertex_count,
        "boundary": list(spec.boundary),
        "cells": [list(c) for c in spec.cells],
    }
    if spec.conductances:
        d["conductances"] = [[u, v, str(c)] for (u, v), c in spec.conductances.items()]
    if spec.draw_coords:
        d["draw_coords"] = {str(k): [str(x), str(y)] for k, (x, y) in spec.draw_coords.items()}
    if spec.renorm_override is not None:
        d["renorm_override"] = str(spec.renorm_override)
    return d


_REQUIRED = {"name": str, "boundary_size": int, "vertex_count": int, "boundary": list, "cells": list}
_OPTIONAL = {"conductances": list, "draw_coords": dict, "renorm_override": (str, int)}


def _parse_rat(fieldname: str, value) -> Fraction:
    if isinstance(value, bool) or not isinstance(value, (str, int)):
        raise SpecError(fieldname, f"expected a rational string 'p/q', got {value!r}")
    try:
        return to_rat(value)
    except (ValueError, ZeroDivisionError):
        raise SpecError(fieldname, f"malformed rational {value!r}") from None


def _int_list(fieldname: str, value) -> list[int]:
    if not isinstance(value, list) or not all(
        isinstance(x, int) and not isinstance(x, bool) for x in value
    ):
        raise SpecError(fieldname, "expected a list of integers")
    return value


def spec_from_dict(data: Mapping) -> FractalSpec:
    if not isinstance(data, Mapping):
        raise SpecError("<root>", "expected a JSON object")
    for key, typ in _REQUIRED.items():
        if key not in data:
            raise SpecError(key, "missing required field")
        if not isinstance(data[key], typ) or isinstance(data[key], bool):
            raise SpecError(key, f"expected {typ.__name__}")
    unknown = set(data) - set(_REQUIRED) - set(_OPTIONAL)
    if unknown:
        raise SpecError(sorted(unknown)[0], "unknown field")
    boundary = _int_list("boundary", data["boundary"])
    cells = [_int_list(f"cells[{i}]", c) for i, c in enumerate(data["cells"])]
    cond = {}
    for i, item in enumerate(data.get("conductances", [])):
        if not isinstance(item, list) or len(item) != 3:
            raise SpecError(f"conductances[{i}]", "expected [u, v, \"p/q\"]")
        u, v = _int_list(f"conductances[{i}]", item[:2])
        cond[_pair(u, v)] = _parse_rat(f"conductances[{i}]", item[2])
    draw = {}
    for key, xy in data.get("draw_coords", {}).items():
        try:
            vid = int(key)
        except ValueError:
            raise SpecError("draw_coords", f"vertex key {key!r} is not an integer") from None
        if not isinstance(xy, list) or len(xy) != 2:
            raise SpecError(f"draw_coords[{key}]", "expected [\"p/q\", \"p/q\"]")
        draw[vid] = (_parse_rat(f"draw_coords[{key}]", xy[0]), _parse_rat(f"draw_coords[{key}]", xy[1]))
    override = data.get("renorm_override")
    if override is not None:
        override = _parse_rat("renorm_override", override)
    return FractalSpec(
        name=data["name"],
        boundary_size=data["boundary_size"],
        vertex_count=data["vertex_count"],
        boundary=tuple(boundary),
        cells=tuple(tuple(c) for c in cells),
        conductances=cond,
        draw_coords=draw,
        renorm_override=override,
    )


def save_spec(spec: FractalSpec, path: str | Path) -> None:
    Path(path).write_text(json.dumps(spec_to_dict(spec), indent=2) + "\n", encoding="utf-8")


def load_spec(path: str | Path) -> FractalSpec:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SpecError("<root>", f"invalid JSON: {exc}") from None
    return spec_from_dict(data)


def spec_hash(spec: FractalSpec) -> str:
    blob = json.dumps(spec_to_dict(spec), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]
