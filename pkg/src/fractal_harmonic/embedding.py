"""Tutte (rubber band) embeddings of G_m and their exact certification.

With the boundary pinned to a convex polygon, each coordinate of every free
vertex is the conductance-weighted average of its neighbours, i.e. each
coordinate is the harmonic function with the anchor coordinates as boundary
data.  For SG_k the boundary-augmented G_1 is simple, planar and 3-connected,
so the drawing has no crossings and no flat cells; a flat cell would mean a
non-constant harmonic function constant on that cell.  :func:`certify_embedding`
checks both properties with exact orientation predicates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .connectivity import augment_graph
from .fractal import FractalSpec, GraphApprox, Word, format_word, refine
from .harmonic import dirichlet_solve_columns
from .linalg import to_rat

__all__ = [
    "DEFAULT_ANCHORS",
    "DegenerateAnchors",
    "NotExactMode",
    "Embedding",
    "CertificationRecord",
    "NondegeneracyCertificate",
    "tutte_embed",
    "certify_embedding",
    "float_crossing_diagnostic",
    "direction_anchors",
    "certify_nondegeneracy",
    "export_svg",
    "parse_anchors",
]

Point = tuple

# full rank, no symmetry, rational
DEFAULT_ANCHORS: tuple[tuple[Fraction, Fraction], ...] = (
    (Fraction(0), Fraction(1)),
    (Fraction(2), Fraction(0)),
    (Fraction(3), Fraction(5)),
)


class DegenerateAnchors(ValueError):
    pass


class NotExactMode(ValueError):
    pass


@dataclass(frozen=True)
class Embedding:
    coords: tuple[Point, ...]
    boundary_positions: tuple[Point, ...]
    edges: tuple[tuple[int, int], ...]
    added: tuple[bool, ...]
    conductances: tuple[tuple[int, int, Fraction], ...]
    cell_vertices: dict[Word, tuple[int, ...]]
    boundary: tuple[int, ...]
    mode: str

    def as_array(self) -> np.ndarray:
        return np.array([[float(x), float(y)] for x, y in self.coords]).reshape(-1, 2)

    def barycenter_residual(self) -> Fraction | float:
        """Largest |coordinate - weighted neighbour average| over free vertices."""
        n = len(self.coords)
        sx = [0 * self.coords[0][0]] * n
        sy = [0 * self.coords[0][0]] * n
        wsum = [Fraction(0)] * n
        for u, v, c in self.conductances:
            cu = c if self.mode == "exact" else float(c)
            sx[u] += cu * self.coords[v][0]
            sy[u] += cu * self.coords[v][1]
            sx[v] += cu * self.coords[u][0]
            sy[v] += cu * self.coords[u][1]
            wsum[u] += c
            wsum[v] += c
        fixed = set(self.boundary)
        worst = 0 * self.coords[0][0]
        for i in range(n):
            if i in fixed or not wsum[i]:
                continue
            w = wsum[i] if self.mode == "exact" else float(wsum[i])
            dx = abs(self.coords[i][0] - sx[i] / w)
            dy = abs(self.coords[i][1] - sy[i] / w)
            worst = max(worst, dx, dy)
        return worst

    def to_dict(self) -> dict:
        fmt = str if self.mode == "exact" else (lambda x: repr(float(x)))
        return {
            "mode": self.mode,
            "coords": [[fmt(x), fmt(y)] for x, y in self.coords],
            "boundary": list(self.boundary),
            "anchors": [[fmt(x), fmt(y)] for x, y in self.boundary_positions],
            "edges": [[u, v, bool(a)] for (u, v), a in zip(self.edges, self.added)],
        }


def _orient(a: Point, b: Point, c: Point):
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def _sign(x) -> int:
    return (x > 0) - (x < 0)


def _check_anchors(anchors: Sequence[Point], exact: bool) -> None:
    n = len(anchors)
    if n < 3:
        if n == 2 and anchors[0] == anchors[1]:
            raise DegenerateAnchors("anchor points coincide")
        return
    signs = set()
    for i in range(n):
        o = _orient(anchors[i], anchors[(i + 1) % n], anchors[(i + 2) % n])
        if exact:
            s = _sign(o)
        else:
            scale = max(1.0, max(abs(float(c)) for p in anchors for c in p)) ** 2
            s = 0 if abs(o) <= 1e-12 * scale else _sign(o)
        signs.add(s)
    if 0 in signs:
        raise DegenerateAnchors("anchor points are collinear")
    if len(signs) > 1:
        raise DegenerateAnchors("anchors do not form a convex polygon in the given order")


def tutte_embed(
    graph: GraphApprox,
    anchors: Sequence[Point],
    mode: str = "exact",
    augmented: bool = True,
    tol: float = 1e-12,
) -> Embedding:
    """Barycentric embedding of ``graph`` with boundary vertex ``q_j`` pinned at ``anchors[j]``.

    ``augmented`` adds the boundary clique to the drawn edges; the clique
    never changes the solve because boundary vertices carry no equation.
    """
    if len(anchors) != len(graph.boundary):
        raise ValueError(f"expected {len(graph.boundary)} anchors, got {len(anchors)}")
    if mode == "exact":
        anchors = tuple((to_rat(x), to_rat(y)) for x, y in anchors)
    else:
        anchors = tuple((float(x), float(y)) for x, y in anchors)
    _check_anchors(anchors, mode == "exact")
    xs, ys = dirichlet_solve_columns(
        graph, [[a[0] for a in anchors], [a[1] for a in anchors]], mode, tol
    )
    if mode == "float":
        xs, ys = xs.tolist(), ys.tolist()
    if augmented:
        aug = augment_graph(graph)
        edges, added = aug.edges, aug.added
    else:
        edges = tuple((u, v) for u, v, _ in graph.edges)
        added = (False,) * len(edges)
    return Embedding(
        coords=tuple(zip(xs, ys)),
        boundary_positions=anchors,
        edges=edges,
        added=added,
        conductances=graph.edges,
        cell_vertices=dict(graph.cell_vertices),
        boundary=tuple(graph.boundary),
        mode=mode,
    )


@dataclass(frozen=True)
class CertificationRecord:
    crossings_found: tuple[tuple[tuple[int, int], tuple[int, int]], ...]
    degenerate_cells: tuple[Word, ...]
    verdict: str
    detail: str = ""

    @property
    def certified(self) -> bool:
        return self.verdict == "certified"

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "detail": self.detail,
            "crossings_found": [[list(a), list(b)] for a, b in self.crossings_found],
            "degenerate_cells": [format_word(w) for w in self.degenerate_cells],
        }


def _integer_coords(coords: Sequence[Point]) -> list[tuple[int, int]]:
    # a positive common denominator preserves every orientation sign
    den = 1
    for x, y in coords:
        for v in (x, y):
            den = den * v.denominator // math.gcd(den, v.denominator)
    return [(int(x * den), int(y * den)) for x, y in coords]


def _on_segment(p: Point, q: Point, r: Point) -> bool:
    """r collinear with p-q lies within the closed segment's bounding box."""
    return min(p[0], q[0]) <= r[0] <= max(p[0], q[0]) and min(p[1], q[1]) <= r[1] <= max(p[1], q[1])


def _segments_touch(a: Point, b: Point, c: Point, d: Point) -> bool:
    o1, o2 = _sign(_orient(a, b, c)), _sign(_orient(a, b, d))
    o3, o4 = _sign(_orient(c, d, a)), _sign(_orient(c, d, b))
    if o1 != o2 and o3 != o4 and o1 and o2 and o3 and o4:
        return True
    if o1 == 0 and _on_segment(a, b, c):
        return True
    if o2 == 0 and _on_segment(a, b, d):
        return True
    if o3 == 0 and _on_segment(c, d, a):
        return True
    if o4 == 0 and _on_segment(c, d, b):
        return True
    return False


def _find_conflicts(P: list, edges: Sequence[tuple[int, int]]) -> list:
    conflicts = []
    boxes = []
    for e, (u, v) in enumerate(edges):
        a, b = P[u], P[v]
        if a == b:
            conflicts.append(((u, v), (u, v)))
        boxes.append((min(a[0], b[0]), max(a[0], b[0]), min(a[1], b[1]), max(a[1], b[1]), e))
    boxes.sort()
    for i, (x0, x1, y0, y1, e) in enumerate(boxes):
        u, v = edges[e]
        for j in range(i + 1, len(boxes)):
            X0, X1, Y0, Y1, f = boxes[j]
            if X0 > x1:
                break
            if Y0 > y1 or Y1 < y0:
                continue
            s, t = edges[f]
            shared = {u, v} & {s, t}
            if shared:
                (c,) = shared
                p = v if u == c else u
                q = t if s == c else s
                A, B, C = P[c], P[p], P[q]
                if _orient(A, B, C) == 0 and (
                    (B[0] - A[0]) * (C[0] - A[0]) + (B[1] - A[1]) * (C[1] - A[1]) > 0
                ):
                    conflicts.append((edges[min(e, f)], edges[max(e, f)]))
            elif _segments_touch(P[u], P[v], P[s], P[t]):
                conflicts.append((edges[min(e, f)], edges[max(e, f)]))
    return sorted(conflicts)


def _flat_cells(P: list, cells: dict[Word, tuple[int, ...]]) -> list[Word]:
    flat = []
    for w, verts in cells.items():
        a = P[verts[0]]
        others = [P[v] for v in verts[1:]]
        far = next((b for b in others if b != a), None)
        if far is None or all(_orient(a, far, c) == 0 for c in others):
            flat.append(w)
    return flat


def certify_embedding(graph: GraphApprox | None, embedding: Embedding) -> CertificationRecord:
    """Exact check that the drawing is crossing-free and has no collinear cell.

    ``graph`` may be None, in which case the embedding's own cells are used.
    """
    if embedding.mode != "exact":
        raise NotExactMode("certification needs an exact rational embedding")
    P = _integer_coords(embedding.coords)
    cells = dict(graph.cell_vertices) if graph is not None else embedding.cell_vertices
    crossings = tuple(_find_conflicts(P, embedding.edges))
    flat = tuple(sorted(_flat_cells(P, cells)))
    if not crossings and not flat:
        return CertificationRecord((), (), "certified")
    detail = []
    if crossings:
        detail.append(f"{len(crossings)} crossing or overlapping edge pair(s)")
    if flat:
        detail.append(f"{len(flat)} degenerate cell(s): " + ", ".join(format_word(w) for w in flat[:5]))
    return CertificationRecord(crossings, flat, "refuted", "; ".join(detail))


def float_crossing_diagnostic(embedding: Embedding, tol: float = 1e-9) -> dict:
    """Non-certifying float check: snaps coordinates to a ``tol`` grid and runs the exact tests."""
    scale = 1.0 / tol
    P = [(round(float(x) * scale), round(float(y) * scale)) for x, y in embedding.coords]
    crossings = _find_conflicts(P, embedding.edges)
    flat = _flat_cells(P, embedding.cell_vertices)
    return {
        "certifying": False,
        "tolerance": tol,
        "crossings_found": len(crossings),
        "degenerate_cells": len(flat),
        "message": "no crossings found at tolerance" if not crossings and not flat else "conflicts found at tolerance",
    }


def direction_anchors(n0: int = 3) -> list[tuple[str, tuple[Point, ...]]]:
    """Anchor sets whose y-coordinates are each unit boundary vector, plus the generic triple."""
    if n0 != 3:
        raise ValueError("direction anchors are defined for three boundary vertices")
    xs = (Fraction(0), Fraction(2), Fraction(3))
    out = [("generic", DEFAULT_ANCHORS)]
    for j in range(3):
        out.append(
            (f"unit-{j + 1}", tuple((xs[i], Fraction(int(i == j))) for i in range(3)))
        )
    return out


@dataclass(frozen=True)
class NondegeneracyCertificate:
    spec_name: str
    records: dict[str, CertificationRecord] = field(default_factory=dict)

    @property
    def verdict(self) -> str:
        return "certified" if all(r.certified for r in self.records.values()) else "refuted"

    def to_dict(self) -> dict:
        return {
            "spec": self.spec_name,
            "verdict": self.verdict,
            "directions": {k: v.to_dict() for k, v in self.records.items()},
        }


def certify_nondegeneracy(
    spec: FractalSpec, anchors: Sequence[Point] | None = None, level: int = 1
) -> NondegeneracyCertificate:
    """Exact Tutte certificate of the boundary-augmented G_level over several anchor sets.

    Runs the three unit boundary directions and one generic direction (or
    only the given ``anchors``); every run must certify.
    """
    g = refine(spec, level)
    runs = [("custom", tuple(anchors))] if anchors is not None else direction_anchors(spec.boundary_size)
    records = {}
    for name, anc in runs:
        emb = tutte_embed(g, anc, "exact", augmented=True)
        records[name] = certify_embedding(g, emb)
    return NondegeneracyCertificate(spec.name, records)


_DEFAULT_STYLE = {
    "stroke": "#1f2933",
    "added_stroke": "#9aa5b1",
    "stroke_width": None,
    "background": None,
    "vertex_radius": 0.0,
    "show_added": True,
}


def export_svg(embedding: Embedding, style: dict | None = None) -> str:
    """SVG 1.1 drawing of the embedding; identical inputs give identical bytes.

    The y axis is flipped so the picture appears the right way up.
    """
    st = dict(_DEFAULT_STYLE)
    st.update(style or {})
    pts = [(float(x), -float(y)) for x, y in embedding.coords]
    xs = [p[0] for p in pts]
    ys = [p[1] for p in pts]
    minx, maxx, miny, maxy = min(xs), max(xs), min(ys), max(ys)
    w, h = maxx - minx, maxy - miny
    span = max(w, h) or 1.0
    mx, my = 0.05 * (w or span), 0.05 * (h or span)
    sw = st["stroke_width"] or 0.003 * span

    def f(v: float) -> str:
        s = f"{v:.6f}"
        return "0.000000" if s == "-0.000000" else s

    out = [
        '<?xml version="1.0" encoding="UTF-8" standalone="no"?>',
        '<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'viewBox="{f(minx - mx)} {f(miny - my)} {f(w + 2 * mx)} {f(h + 2 * my)}">',
    ]
    if st["background"]:
        out.append(
            f'<rect x="{f(minx - mx)}" y="{f(miny - my)}" width="{f(w + 2 * mx)}" '
            f'height="{f(h + 2 * my)}" fill="{st["background"]}"/>'
        )
    out.append(f'<g stroke-width="{f(sw)}" stroke-linecap="round" fill="none">')
    for (u, v), added in zip(embedding.edges, embedding.added):
        if added and not st["show_added"]:
            continue
        color = st["added_stroke"] if added else st["stroke"]
        a, b = pts[u], pts[v]
        out.append(
            f'<line x1="{f(a[0])}" y1="{f(a[1])}" x2="{f(b[0])}" y2="{f(b[1])}" stroke="{color}"/>'
        )
    out.append("</g>")
    if st["vertex_radius"]:
        out.append(f'<g fill="{st["stroke"]}">')
        for x, y in pts:
            out.append(f'<circle cx="{f(x)}" cy="{f(y)}" r="{f(st["vertex_radius"])}"/>')
        out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def parse_anchors(text: str) -> tuple[tuple[Fraction, Fraction], ...]:
    """Parse ``"x1,y1;x2,y2;x3,y3"`` into exact rational points."""
    pts = []
    for chunk in text.split(";"):
        parts = chunk.split(",")
        if len(parts) != 2:
            raise ValueError(f"anchor {chunk!r} is not of the form x,y")
        pts.append((to_rat(parts[0]), to_rat(parts[1])))
    return tuple(pts)
